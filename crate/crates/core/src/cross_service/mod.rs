//! Sources, channels and the global reachability graph that stitches
//! per-service flows together across inter-service calls.

mod channels;
mod graph;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ElementId;
use crate::reasoner::ReasonerError;

pub use channels::{
    channel_identifier, match_channels, normalize_http, q_inter, q_source, q_user, service_channels, ChannelEdge,
    ChannelSet, MatchRule,
};
pub use graph::{
    build_global_graph, q_globalflow, FlowQuery, GlobalFlows, GlobalGraph, GlobalPath, Segment, Witness, PATH_CAP,
};

/// An element addressed across services.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub service: String,
    pub element: ElementId,
}

impl NodeRef {
    pub fn new(service: impl Into<String>, element: ElementId) -> NodeRef {
        NodeRef {
            service: service.into(),
            element,
        }
    }
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.element)
    }
}

/// Non-fatal channel problems surfaced in the report.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "diagnostic", rename_all = "snake_case")]
pub enum ChannelDiagnostic {
    UnresolvedChannel {
        service: String,
        element: ElementId,
        reason: String,
    },
    AmbiguousChannel {
        service: String,
        element: ElementId,
        identifier: String,
        targets: Vec<NodeRef>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrossServiceError {
    #[error("manifest has no entry service")]
    NoEntryService,
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
}

#[cfg(test)]
mod tests;
