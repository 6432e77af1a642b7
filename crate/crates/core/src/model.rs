//! Immutable code-facts model shared by every analysis.
//!
//! A [`Program`] is a set of [`Service`]s. Each service owns its elements
//! (functions, calls, literals, endpoints, ...) and the typed edges between
//! them. Services are built once and never mutated; the flow graph is
//! computed lazily behind a `OnceLock`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::facts::Manifest;
use crate::search::FlowGraph;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
    pub col: u32,
}

impl Location {
    pub fn new(file: impl Into<String>, line: u32, col: u32) -> Self {
        Location {
            file: file.into(),
            line,
            col,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.line >= 1 && self.col >= 1 && !self.file.is_empty()
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Function,
    Class,
    Variable,
    Parameter,
    Call,
    FieldAccess,
    Assignment,
    Conditional,
    Decorator,
    StringLiteral,
    ReturnStmt,
    Endpoint,
}

impl ElementKind {
    pub const ALL: [ElementKind; 12] = [
        ElementKind::Function,
        ElementKind::Class,
        ElementKind::Variable,
        ElementKind::Parameter,
        ElementKind::Call,
        ElementKind::FieldAccess,
        ElementKind::Assignment,
        ElementKind::Conditional,
        ElementKind::Decorator,
        ElementKind::StringLiteral,
        ElementKind::ReturnStmt,
        ElementKind::Endpoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Function => "function",
            ElementKind::Class => "class",
            ElementKind::Variable => "variable",
            ElementKind::Parameter => "parameter",
            ElementKind::Call => "call",
            ElementKind::FieldAccess => "field_access",
            ElementKind::Assignment => "assignment",
            ElementKind::Conditional => "conditional",
            ElementKind::Decorator => "decorator",
            ElementKind::StringLiteral => "string_literal",
            ElementKind::ReturnStmt => "return_stmt",
            ElementKind::Endpoint => "endpoint",
        }
    }

    pub fn parse(s: &str) -> Option<ElementKind> {
        ElementKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Small closed type vocabulary used by `get_type` and constraint typing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TypeTag {
    Int,
    String,
    Bool,
    Object,
    Function,
    #[default]
    Unknown,
}

impl TypeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeTag::Int => "int",
            TypeTag::String => "string",
            TypeTag::Bool => "bool",
            TypeTag::Object => "object",
            TypeTag::Function => "function",
            TypeTag::Unknown => "unknown",
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub String);

impl ElementId {
    /// Deterministic id: a digest of (service, file, line, col, kind).
    pub fn derive(service: &str, loc: &Location, kind: ElementKind) -> ElementId {
        let mut h = Sha256::new();
        for part in [
            service,
            &loc.file,
            &loc.line.to_string(),
            &loc.col.to_string(),
            kind.as_str(),
        ] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        ElementId(format!("e{}", &hex::encode(digest)[..16]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ElementId {
    fn from(s: &str) -> Self {
        ElementId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub id: ElementId,
    pub service: String,
    pub kind: ElementKind,
    /// Empty for anonymous elements (calls, literals, statements).
    pub name: String,
    pub location: Location,
    pub source: String,
    #[serde(rename = "type")]
    pub inferred_type: TypeTag,
}

impl Element {
    /// Sort key used everywhere results are "sorted by location".
    pub fn order_key(&self) -> (&str, u32, u32, ElementKind, &str) {
        (
            &self.location.file,
            self.location.line,
            self.location.col,
            self.kind,
            &self.id.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Calls,
    Dataflow,
    Contains,
    Decorates,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub kind: EdgeKind,
    pub from: ElementId,
    pub to: ElementId,
}

impl Edge {
    pub fn new(kind: EdgeKind, from: ElementId, to: ElementId) -> Self {
        Edge { kind, from, to }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Http,
    Topic,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Http => "http",
            Protocol::Topic => "topic",
        })
    }
}

/// An inter-service communication point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Channel {
    pub element: ElementId,
    pub direction: Direction,
    pub protocol: Protocol,
    pub identifier: String,
}

/// Per-element adjacency, indexed by element position.
#[derive(Debug, Default)]
struct Adjacency {
    out: Vec<Vec<(EdgeKind, usize)>>,
    inc: Vec<Vec<(EdgeKind, usize)>>,
}

pub struct Service {
    name: String,
    entry: bool,
    elements: Vec<Element>,
    index: HashMap<ElementId, usize>,
    edges: BTreeSet<Edge>,
    channels: Vec<Channel>,
    adj: Adjacency,
    flow: OnceLock<FlowGraph>,
}

impl fmt::Debug for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Service")
            .field("name", &self.name)
            .field("entry", &self.entry)
            .field("elements", &self.elements.len())
            .field("edges", &self.edges.len())
            .field("channels", &self.channels.len())
            .finish()
    }
}

impl Clone for Service {
    fn clone(&self) -> Self {
        Service::new(
            self.name.clone(),
            self.entry,
            self.elements.clone(),
            self.edges.iter().cloned(),
            self.channels.clone(),
        )
    }
}

impl PartialEq for Service {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.entry == other.entry
            && self.elements == other.elements
            && self.edges == other.edges
            && self.channels == other.channels
    }
}

impl Eq for Service {}

impl Service {
    /// Builds a service. Elements are put into canonical (location, kind) order;
    /// edges with missing endpoints are kept in the edge set (so
    /// [`validate_program`] can report them) but left out of the adjacency.
    pub fn new(
        name: impl Into<String>,
        entry: bool,
        mut elements: Vec<Element>,
        edges: impl IntoIterator<Item = Edge>,
        mut channels: Vec<Channel>,
    ) -> Service {
        elements.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        let mut index = HashMap::with_capacity(elements.len());
        for (i, e) in elements.iter().enumerate() {
            index.entry(e.id.clone()).or_insert(i);
        }
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        let mut adj = Adjacency {
            out: vec![Vec::new(); elements.len()],
            inc: vec![Vec::new(); elements.len()],
        };
        for e in &edges {
            if let (Some(&f), Some(&t)) = (index.get(&e.from), index.get(&e.to)) {
                adj.out[f].push((e.kind, t));
                adj.inc[t].push((e.kind, f));
            }
        }
        for list in adj.out.iter_mut().chain(adj.inc.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        channels.sort();
        Service {
            name: name.into(),
            entry,
            elements,
            index,
            edges,
            channels,
            adj,
            flow: OnceLock::new(),
        }
    }

    pub fn empty(name: impl Into<String>, entry: bool) -> Service {
        Service::new(name, entry, Vec::new(), Vec::new(), Vec::new())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_entry(&self) -> bool {
        self.entry
    }

    pub fn with_entry(&self, entry: bool) -> Service {
        Service::new(
            self.name.clone(),
            entry,
            self.elements.clone(),
            self.edges.iter().cloned(),
            self.channels.clone(),
        )
    }

    /// Elements in canonical location order.
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    /// Channels supplied with the facts (not the derived ones).
    pub fn supplied_channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn element(&self, id: &ElementId) -> Option<&Element> {
        self.index.get(id).map(|&i| &self.elements[i])
    }

    pub fn contains(&self, id: &ElementId) -> bool {
        self.index.contains_key(id)
    }

    pub(crate) fn index_of(&self, id: &ElementId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn at(&self, idx: usize) -> &Element {
        &self.elements[idx]
    }

    pub(crate) fn out_edges(&self, idx: usize) -> &[(EdgeKind, usize)] {
        &self.adj.out[idx]
    }

    pub fn successors(&self, id: &ElementId, kind: EdgeKind) -> Vec<&Element> {
        match self.index_of(id) {
            Some(i) => self.adj.out[i]
                .iter()
                .filter(|(k, _)| *k == kind)
                .map(|&(_, t)| &self.elements[t])
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn predecessors(&self, id: &ElementId, kind: EdgeKind) -> Vec<&Element> {
        match self.index_of(id) {
            Some(i) => self.adj.inc[i]
                .iter()
                .filter(|(k, _)| *k == kind)
                .map(|&(_, f)| &self.elements[f])
                .collect(),
            None => Vec::new(),
        }
    }

    /// The syntactic parent: the `contains` predecessor, or for decorators and
    /// endpoints the function they decorate.
    pub fn parent(&self, id: &ElementId) -> Option<&Element> {
        let i = self.index_of(id)?;
        let mut decorated = None;
        for &(k, f) in &self.adj.inc[i] {
            if k == EdgeKind::Contains {
                return Some(&self.elements[f]);
            }
        }
        for &(k, t) in &self.adj.out[i] {
            if k == EdgeKind::Decorates {
                decorated = Some(&self.elements[t]);
                break;
            }
        }
        decorated
    }

    /// Ancestors from the immediate parent outwards. Cycles in malformed facts
    /// are cut.
    pub fn ancestors(&self, id: &ElementId) -> Vec<&Element> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            if !seen.insert(p.id.clone()) {
                break;
            }
            out.push(p);
            cur = self.parent(&p.id);
        }
        out
    }

    /// Closest enclosing function (the element itself if it is one).
    pub fn enclosing_function(&self, id: &ElementId) -> Option<&Element> {
        let e = self.element(id)?;
        if e.kind == ElementKind::Function {
            return Some(e);
        }
        self.ancestors(id).into_iter().find(|a| a.kind == ElementKind::Function)
    }

    pub fn functions_named(&self, name: &str) -> Vec<&Element> {
        self.elements
            .iter()
            .filter(|e| e.kind == ElementKind::Function && e.name == name)
            .collect()
    }

    pub(crate) fn flow_cell(&self) -> &OnceLock<FlowGraph> {
        &self.flow
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub services: Vec<Service>,
    pub manifest: Manifest,
}

impl Program {
    pub fn new(services: Vec<Service>, manifest: Manifest) -> Program {
        Program { services, manifest }
    }

    pub fn service(&self, name: &str) -> Option<&Service> {
        self.services.iter().find(|s| s.name() == name)
    }

    pub fn entry_service(&self) -> Option<&Service> {
        self.services.iter().find(|s| s.is_entry())
    }

    /// Looks an element up across all services.
    pub fn locate(&self, id: &ElementId) -> Option<(&Service, &Element)> {
        self.services.iter().find_map(|s| s.element(id).map(|e| (s, e)))
    }

    pub fn element_count(&self) -> usize {
        self.services.iter().map(|s| s.elements().len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum IntegrityViolation {
    DanglingEdge {
        service: String,
        kind: EdgeKind,
        missing: ElementId,
    },
    DuplicateId {
        service: String,
        id: ElementId,
    },
    NoEntryService,
    MultipleEntryServices {
        services: Vec<String>,
    },
    DuplicateServiceName {
        service: String,
    },
    ForeignElement {
        service: String,
        id: ElementId,
        declared: String,
    },
    InvalidLocation {
        service: String,
        id: ElementId,
    },
    DanglingChannel {
        service: String,
        element: ElementId,
    },
    EmptyChannelIdentifier {
        service: String,
        element: ElementId,
    },
}

impl fmt::Display for IntegrityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegrityViolation::DanglingEdge { missing, .. } => write!(f, "DanglingEdge({missing})"),
            IntegrityViolation::DuplicateId { id, .. } => write!(f, "DuplicateId({id})"),
            IntegrityViolation::NoEntryService => f.write_str("NoEntryService"),
            IntegrityViolation::MultipleEntryServices { services } => {
                write!(f, "MultipleEntryServices({})", services.join(","))
            }
            IntegrityViolation::DuplicateServiceName { service } => {
                write!(f, "DuplicateServiceName({service})")
            }
            IntegrityViolation::ForeignElement { id, declared, .. } => {
                write!(f, "ForeignElement({id} declares {declared})")
            }
            IntegrityViolation::InvalidLocation { id, .. } => write!(f, "InvalidLocation({id})"),
            IntegrityViolation::DanglingChannel { element, .. } => {
                write!(f, "DanglingChannel({element})")
            }
            IntegrityViolation::EmptyChannelIdentifier { element, .. } => {
                write!(f, "EmptyChannelIdentifier({element})")
            }
        }
    }
}

/// Returns every invariant violation; an empty list means the program is
/// well formed.
pub fn validate_program(program: &Program) -> Vec<IntegrityViolation> {
    let mut out = Vec::new();
    let mut names = HashSet::new();
    for s in &program.services {
        if !names.insert(s.name()) {
            out.push(IntegrityViolation::DuplicateServiceName {
                service: s.name().to_string(),
            });
        }
    }
    let entries: Vec<String> = program
        .services
        .iter()
        .filter(|s| s.is_entry())
        .map(|s| s.name().to_string())
        .collect();
    match entries.len() {
        0 => out.push(IntegrityViolation::NoEntryService),
        1 => {}
        _ => out.push(IntegrityViolation::MultipleEntryServices { services: entries }),
    }
    for s in &program.services {
        out.extend(validate_service(s));
    }
    out
}

pub fn validate_service(s: &Service) -> Vec<IntegrityViolation> {
    let mut out = Vec::new();
    let svc = s.name().to_string();
    let mut seen = HashSet::new();
    for e in s.elements() {
        if !seen.insert(&e.id) {
            out.push(IntegrityViolation::DuplicateId {
                service: svc.clone(),
                id: e.id.clone(),
            });
        }
        if e.service != svc {
            out.push(IntegrityViolation::ForeignElement {
                service: svc.clone(),
                id: e.id.clone(),
                declared: e.service.clone(),
            });
        }
        if !e.location.is_valid() {
            out.push(IntegrityViolation::InvalidLocation {
                service: svc.clone(),
                id: e.id.clone(),
            });
        }
    }
    let mut missing = BTreeSet::new();
    for edge in s.edges() {
        for end in [&edge.from, &edge.to] {
            if !s.contains(end) && missing.insert((edge.kind, end.clone())) {
                out.push(IntegrityViolation::DanglingEdge {
                    service: svc.clone(),
                    kind: edge.kind,
                    missing: end.clone(),
                });
            }
        }
    }
    for c in s.supplied_channels() {
        if !s.contains(&c.element) {
            out.push(IntegrityViolation::DanglingChannel {
                service: svc.clone(),
                element: c.element.clone(),
            });
        }
        if c.identifier.is_empty() {
            out.push(IntegrityViolation::EmptyChannelIdentifier {
                service: svc.clone(),
                element: c.element.clone(),
            });
        }
    }
    out
}
