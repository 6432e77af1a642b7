//! Built-in callees with fixed meaning: request inputs, session reads,
//! outbound channels, message topics and the standard sinks.

use crate::model::{Direction, Protocol, TypeTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intrinsic {
    RequestParam,
    SessionGet,
    HttpPost,
    HttpGet,
    Publish,
    Consume,
    DbRead,
    DbWrite,
    Exec,
}

impl Intrinsic {
    pub const ALL: [Intrinsic; 9] = [
        Intrinsic::RequestParam,
        Intrinsic::SessionGet,
        Intrinsic::HttpPost,
        Intrinsic::HttpGet,
        Intrinsic::Publish,
        Intrinsic::Consume,
        Intrinsic::DbRead,
        Intrinsic::DbWrite,
        Intrinsic::Exec,
    ];

    pub fn callee(self) -> &'static str {
        match self {
            Intrinsic::RequestParam => "request.param",
            Intrinsic::SessionGet => "session.get",
            Intrinsic::HttpPost => "http_post",
            Intrinsic::HttpGet => "http_get",
            Intrinsic::Publish => "publish",
            Intrinsic::Consume => "consume",
            Intrinsic::DbRead => "db.read",
            Intrinsic::DbWrite => "db.write",
            Intrinsic::Exec => "exec",
        }
    }

    pub fn from_callee(callee: &str) -> Option<Intrinsic> {
        Intrinsic::ALL.into_iter().find(|i| i.callee() == callee)
    }

    pub fn result_type(self) -> TypeTag {
        match self {
            Intrinsic::RequestParam
            | Intrinsic::SessionGet
            | Intrinsic::HttpGet
            | Intrinsic::Consume
            | Intrinsic::Exec => TypeTag::String,
            Intrinsic::HttpPost | Intrinsic::DbRead => TypeTag::Object,
            Intrinsic::Publish | Intrinsic::DbWrite => TypeTag::Unknown,
        }
    }

    /// Channel role of this call site, if it is a communication point.
    pub fn channel(self) -> Option<(Direction, Protocol)> {
        match self {
            Intrinsic::HttpPost | Intrinsic::HttpGet => Some((Direction::Out, Protocol::Http)),
            Intrinsic::Publish => Some((Direction::Out, Protocol::Topic)),
            Intrinsic::Consume => Some((Direction::In, Protocol::Topic)),
            _ => None,
        }
    }
}
