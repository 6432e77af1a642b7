//! Language-neutral facts interchange (`.facts.jsonl`) and the application
//! manifest.
//!
//! A facts stream is one JSON object per line. The first non-blank line is
//! the header `{"rec":"header","version":1}`; the rest are `element`, `edge`
//! and `channel` records. An empty stream is an empty service.

mod manifest;

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

pub use manifest::{
    parse_manifest, read_manifest, FileKind, GatewayRoute, Manifest, ManifestError, ServiceEntry, MANIFEST_FILE,
};

use crate::model::{Channel, Edge, Element, Service};

pub const FACTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "snake_case")]
pub enum FactsRecord {
    Header { version: u32 },
    Element(Element),
    Edge(Edge),
    Channel(Channel),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactsError {
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for FactsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

impl std::error::Error for FactsError {}

fn err(line: usize, reason: impl Into<String>) -> FactsError {
    FactsError {
        line,
        reason: reason.into(),
    }
}

/// Reads one service. Fails on the first malformed record; edges and
/// channels are checked against the element set once the whole stream is in.
pub fn read_facts(stream: impl BufRead, service_name: &str) -> Result<Service, FactsError> {
    let mut elements = Vec::new();
    let mut edges: Vec<(usize, Edge)> = Vec::new();
    let mut channels: Vec<(usize, Channel)> = Vec::new();
    let mut ids = HashSet::new();
    let mut seen_header = false;
    for (i, line) in stream.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| err(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FactsRecord = serde_json::from_str(&line).map_err(|e| err(n, e.to_string()))?;
        match rec {
            FactsRecord::Header { version } => {
                if seen_header {
                    return Err(err(n, "duplicate header"));
                }
                if version != FACTS_VERSION {
                    return Err(err(n, format!("unsupported facts version {version}")));
                }
                seen_header = true;
                continue;
            }
            _ if !seen_header => return Err(err(n, "missing header record")),
            FactsRecord::Element(e) => {
                if e.service != service_name {
                    return Err(err(
                        n,
                        format!(
                            "element {} belongs to service `{}`, expected `{service_name}`",
                            e.id, e.service
                        ),
                    ));
                }
                if !e.location.is_valid() {
                    return Err(err(n, format!("element {} has an invalid location", e.id)));
                }
                if !ids.insert(e.id.clone()) {
                    return Err(err(n, format!("duplicate element id {}", e.id)));
                }
                elements.push(e);
            }
            FactsRecord::Edge(e) => edges.push((n, e)),
            FactsRecord::Channel(c) => channels.push((n, c)),
        }
    }
    for (n, e) in &edges {
        for end in [&e.from, &e.to] {
            if !ids.contains(end) {
                return Err(err(*n, format!("edge endpoint {end} does not exist")));
            }
        }
    }
    let mut channel_ids = HashSet::new();
    for (n, c) in &channels {
        if !ids.contains(&c.element) {
            return Err(err(*n, format!("channel element {} does not exist", c.element)));
        }
        if c.identifier.is_empty() {
            return Err(err(*n, "empty channel identifier"));
        }
        if !channel_ids.insert(c.element.clone()) {
            return Err(err(*n, format!("duplicate channel for element {}", c.element)));
        }
    }
    Ok(Service::new(
        service_name,
        false,
        elements,
        edges.into_iter().map(|(_, e)| e),
        channels.into_iter().map(|(_, c)| c).collect(),
    ))
}

/// Serializes a service: header, elements in (file, line, col, kind) order,
/// edges in (kind, from, to) order, then channels. Only supplied channels are
/// written. An empty service writes nothing.
pub fn write_facts(service: &Service) -> String {
    if service.elements().is_empty() && service.edges().is_empty() && service.supplied_channels().is_empty() {
        return String::new();
    }
    let mut out = String::new();
    let mut push = |r: &FactsRecord| {
        out.push_str(&serde_json::to_string(r).expect("facts records serialize"));
        out.push('\n');
    };
    push(&FactsRecord::Header { version: FACTS_VERSION });
    for e in service.elements() {
        push(&FactsRecord::Element(e.clone()));
    }
    for e in service.edges() {
        push(&FactsRecord::Edge(e.clone()));
    }
    for c in service.supplied_channels() {
        push(&FactsRecord::Channel(c.clone()));
    }
    out
}
