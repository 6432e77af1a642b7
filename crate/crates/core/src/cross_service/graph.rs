use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channels::{match_channels, q_source, service_channels, ChannelEdge};
use super::{ChannelDiagnostic, NodeRef};
use crate::model::{Direction, ElementId, Program, Service};
use crate::search::{flow_between, FlowPath};

pub const PATH_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "witness", rename_all = "snake_case")]
pub enum Witness {
    Intra { service: String, path: FlowPath },
    Channel { edge: ChannelEdge },
}

/// One q_flow call made while building the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowQuery {
    pub service: String,
    pub from: ElementId,
    pub to: ElementId,
    pub hops: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalGraph {
    pub nodes: BTreeSet<NodeRef>,
    pub edges: BTreeMap<NodeRef, BTreeMap<NodeRef, Witness>>,
    pub channel_edges: Vec<ChannelEdge>,
    pub diagnostics: Vec<ChannelDiagnostic>,
    pub flow_queries: Vec<FlowQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "segment", rename_all = "snake_case")]
pub enum Segment {
    Intra { service: String, path: FlowPath },
    Cross { edge: ChannelEdge },
}

/// A user-to-sink path assembled from graph-edge witnesses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GlobalPath {
    pub nodes: Vec<NodeRef>,
    pub segments: Vec<Segment>,
}

impl GlobalPath {
    pub fn source(&self) -> &NodeRef {
        &self.nodes[0]
    }

    pub fn sink(&self) -> &NodeRef {
        self.nodes.last().expect("paths are non-empty")
    }

    pub fn channel_edges(&self) -> Vec<&ChannelEdge> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Cross { edge } => Some(edge),
                Segment::Intra { .. } => None,
            })
            .collect()
    }

    /// Every element the path runs through, in order, without repeats at
    /// segment junctions.
    pub fn elements(&self) -> Vec<NodeRef> {
        let mut out: Vec<NodeRef> = Vec::new();
        for seg in &self.segments {
            let nodes: Vec<NodeRef> = match seg {
                Segment::Intra { service, path } => path
                    .nodes
                    .iter()
                    .map(|n| NodeRef::new(service.clone(), n.clone()))
                    .collect(),
                Segment::Cross { edge } => vec![edge.from_node(), edge.to_node()],
            };
            for n in nodes {
                if out.last() != Some(&n) {
                    out.push(n);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalFlows {
    pub paths: Vec<GlobalPath>,
    pub truncated: bool,
}

type Phase1 = (Vec<(NodeRef, NodeRef, Witness)>, BTreeSet<NodeRef>, Vec<FlowQuery>);

fn phase1(s: &Service, privops: &[NodeRef]) -> Phase1 {
    let name = s.name();
    let sources: Vec<ElementId> = q_source(s).into_iter().map(|e| e.id.clone()).collect();
    let mut dests: BTreeSet<ElementId> = privops
        .iter()
        .filter(|p| p.service == name && s.contains(&p.element))
        .map(|p| p.element.clone())
        .collect();
    dests.extend(
        service_channels(s)
            .channels
            .into_iter()
            .filter(|c| c.direction == Direction::Out && s.contains(&c.element))
            .map(|c| c.element),
    );
    let mut nodes: BTreeSet<NodeRef> = sources.iter().map(|e| NodeRef::new(name, e.clone())).collect();
    nodes.extend(dests.iter().map(|e| NodeRef::new(name, e.clone())));
    let mut edges = Vec::new();
    let mut queries = Vec::new();
    for src in &sources {
        for dst in &dests {
            if src == dst {
                continue;
            }
            let found = flow_between(s, src, dst);
            queries.push(FlowQuery {
                service: name.to_string(),
                from: src.clone(),
                to: dst.clone(),
                hops: found.as_ref().map(|p| p.rules.len()),
            });
            if let Some(path) = found {
                edges.push((
                    NodeRef::new(name, src.clone()),
                    NodeRef::new(name, dst.clone()),
                    Witness::Intra {
                        service: name.to_string(),
                        path,
                    },
                ));
            }
        }
    }
    (edges, nodes, queries)
}

/// Phase 1: per service, source → (privileged op | out-channel) edges with
/// witness flow paths. Phase 2: out-channel → in-channel edges.
pub fn build_global_graph(program: &Program, privops: &[NodeRef]) -> GlobalGraph {
    let per_service: Vec<Phase1> = program.services.par_iter().map(|s| phase1(s, privops)).collect();
    let mut g = GlobalGraph::default();
    for (edges, nodes, queries) in per_service {
        g.nodes.extend(nodes);
        g.flow_queries.extend(queries);
        for (a, b, w) in edges {
            g.edges.entry(a).or_default().insert(b, w);
        }
    }
    let (channel_edges, diagnostics) = match_channels(program);
    for ce in &channel_edges {
        let (a, b) = (ce.from_node(), ce.to_node());
        g.nodes.insert(a.clone());
        g.nodes.insert(b.clone());
        g.edges
            .entry(a)
            .or_default()
            .insert(b, Witness::Channel { edge: ce.clone() });
    }
    g.channel_edges = channel_edges;
    g.diagnostics = diagnostics;
    g
}

impl GlobalGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeMap::len).sum()
    }

    pub fn successors(&self, n: &NodeRef) -> impl Iterator<Item = (&NodeRef, &Witness)> {
        self.edges.get(n).into_iter().flat_map(|m| m.iter())
    }

    /// A copy without the given channel edge.
    pub fn without_channel_edge(&self, ce: &ChannelEdge) -> GlobalGraph {
        let mut g = self.clone();
        if let Some(m) = g.edges.get_mut(&ce.from_node()) {
            if matches!(m.get(&ce.to_node()), Some(Witness::Channel { edge }) if edge == ce) {
                m.remove(&ce.to_node());
            }
        }
        g.channel_edges.retain(|e| e != ce);
        g
    }

    /// DOT rendering; node labels carry service and element source.
    pub fn to_dot(&self, program: &Program) -> String {
        let mut ids: BTreeMap<&NodeRef, usize> = BTreeMap::new();
        let mut out = String::from("digraph privflow {\n  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n");
        for (i, n) in self.nodes.iter().enumerate() {
            ids.insert(n, i);
            let label = program
                .service(&n.service)
                .and_then(|s| s.element(&n.element))
                .map(|e| {
                    let src = e.source.lines().next().unwrap_or("").trim();
                    format!("{}\\n{} {}", n.service, e.kind, src)
                })
                .unwrap_or_else(|| format!("{}\\n{}", n.service, n.element));
            let _ = writeln!(out, "  n{i} [label=\"{}\"];", label.replace('"', "\\\""));
        }
        for (a, succ) in &self.edges {
            for (b, w) in succ {
                let label = match w {
                    Witness::Intra { path, .. } => format!("flow {} hops", path.rules.len()),
                    Witness::Channel { edge } => format!("{} {}", edge.from.protocol, edge.from.identifier),
                };
                let style = if matches!(w, Witness::Channel { .. }) {
                    ", style=dashed"
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    "  n{} -> n{} [label=\"{}\"{style}];",
                    ids[a],
                    ids[b],
                    label.replace('"', "\\\"")
                );
            }
        }
        out.push_str("}\n");
        out
    }
}

struct Dfs<'g> {
    g: &'g GlobalGraph,
    sinks: BTreeSet<&'g NodeRef>,
    on_path: BTreeSet<&'g NodeRef>,
    nodes: Vec<&'g NodeRef>,
    witnesses: Vec<&'g Witness>,
    out: GlobalFlows,
}

impl<'g> Dfs<'g> {
    fn visit(&mut self, n: &'g NodeRef) {
        if self.out.truncated {
            return;
        }
        if !self.witnesses.is_empty() && self.sinks.contains(n) {
            if self.out.paths.len() >= PATH_CAP {
                self.out.truncated = true;
                return;
            }
            self.out.paths.push(self.assemble());
        }
        let succ: Vec<(&'g NodeRef, &'g Witness)> = self.g.successors(n).collect();
        for (m, w) in succ {
            if self.on_path.contains(m) {
                continue;
            }
            self.on_path.insert(m);
            self.nodes.push(m);
            self.witnesses.push(w);
            self.visit(m);
            self.witnesses.pop();
            self.nodes.pop();
            self.on_path.remove(m);
        }
    }

    fn assemble(&self) -> GlobalPath {
        GlobalPath {
            nodes: self.nodes.iter().map(|n| (*n).clone()).collect(),
            segments: self
                .witnesses
                .iter()
                .map(|w| match w {
                    Witness::Intra { service, path } => Segment::Intra {
                        service: service.clone(),
                        path: path.clone(),
                    },
                    Witness::Channel { edge } => Segment::Cross { edge: edge.clone() },
                })
                .collect(),
        }
    }
}

/// All simple paths (at least one edge) from any source to any sink, in
/// lexicographic order of node sequences. Stops at [`PATH_CAP`] paths.
pub fn q_globalflow(g: &GlobalGraph, sources: &[NodeRef], sinks: &[NodeRef]) -> GlobalFlows {
    let mut dfs = Dfs {
        g,
        sinks: sinks.iter().filter_map(|s| g.nodes.get(s)).collect(),
        on_path: BTreeSet::new(),
        nodes: Vec::new(),
        witnesses: Vec::new(),
        out: GlobalFlows::default(),
    };
    let srcs: BTreeSet<&NodeRef> = sources.iter().filter_map(|s| g.nodes.get(s)).collect();
    for s in srcs {
        dfs.on_path.insert(s);
        dfs.nodes.push(s);
        dfs.visit(s);
        dfs.nodes.pop();
        dfs.on_path.remove(s);
    }
    dfs.out
}
