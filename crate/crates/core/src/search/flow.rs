use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{EdgeKind, ElementId, ElementKind, Service};

/// Why a flow hop exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowRule {
    /// Value stored into a variable.
    Assign,
    /// Call argument bound to the callee's parameter.
    Param,
    /// Argument or receiver feeding a call's result.
    Arg,
    /// Callee return value back at the call site.
    Return,
    /// Base object to a member access.
    Member,
    /// Request data entering at an endpoint.
    Request,
    /// Any other raw dataflow fact.
    Value,
}

impl FlowRule {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowRule::Assign => "assign",
            FlowRule::Param => "param",
            FlowRule::Arg => "arg",
            FlowRule::Return => "return",
            FlowRule::Member => "member",
            FlowRule::Request => "request",
            FlowRule::Value => "value",
        }
    }
}

/// Dataflow edges of a service after closure under the propagation rules,
/// over element indices in location order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowGraph {
    succ: Vec<Vec<(usize, FlowRule)>>,
}

/// A variable-level path. `rules[i]` justifies the hop `nodes[i] → nodes[i+1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowPath {
    pub nodes: Vec<ElementId>,
    pub rules: Vec<FlowRule>,
}

impl FlowPath {
    pub fn singleton(id: ElementId) -> FlowPath {
        FlowPath {
            nodes: vec![id],
            rules: Vec::new(),
        }
    }

    pub fn first(&self) -> &ElementId {
        &self.nodes[0]
    }

    pub fn last(&self) -> &ElementId {
        self.nodes.last().expect("flow paths are non-empty")
    }
}

impl fmt::Display for FlowPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.nodes[0])?;
        for (n, r) in self.nodes[1..].iter().zip(&self.rules) {
            write!(f, " -{}-> {}", r.as_str(), n)?;
        }
        Ok(())
    }
}

fn classify(s: &Service, from: usize, to: usize) -> FlowRule {
    let (f, t) = (s.at(from).kind, s.at(to).kind);
    match (f, t) {
        (ElementKind::Endpoint, _) => FlowRule::Request,
        (_, ElementKind::Variable) => FlowRule::Assign,
        (_, ElementKind::Parameter) => FlowRule::Param,
        (ElementKind::ReturnStmt, ElementKind::Call) => FlowRule::Return,
        (_, ElementKind::Call) => FlowRule::Arg,
        (_, ElementKind::FieldAccess) => FlowRule::Member,
        _ => FlowRule::Value,
    }
}

/// Closes the raw dataflow facts: adds return → call-site edges for every
/// resolved call. The other rules are already explicit in the raw facts.
/// Idempotent: building twice gives the same graph.
pub fn build_flow_graph(s: &Service) -> FlowGraph {
    let n = s.elements().len();
    let mut succ: Vec<Vec<(usize, FlowRule)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(k, t) in s.out_edges(i) {
            if k == EdgeKind::Dataflow {
                succ[i].push((t, classify(s, i, t)));
            }
        }
    }
    // return statements per function
    let mut returns: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in s.elements().iter().enumerate() {
        if e.kind == ElementKind::ReturnStmt {
            if let Some(f) = s.enclosing_function(&e.id).and_then(|f| s.index_of(&f.id)) {
                returns[f].push(i);
            }
        }
    }
    for i in 0..n {
        if s.at(i).kind != ElementKind::Call {
            continue;
        }
        for &(k, t) in s.out_edges(i) {
            if k == EdgeKind::Calls {
                for &r in &returns[t] {
                    succ[r].push((i, FlowRule::Return));
                }
            }
        }
    }
    for list in &mut succ {
        list.sort_unstable();
        list.dedup_by_key(|(t, _)| *t);
    }
    FlowGraph { succ }
}

impl FlowGraph {
    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    /// Successors in location order.
    pub fn successors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        self.succ[idx].iter().map(|&(t, _)| t)
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// BFS from `src`; returns the predecessor tree. Successors are visited
    /// in location order, so the first-found shortest path is canonical.
    pub fn bfs(&self, src: usize) -> Vec<Option<(usize, FlowRule)>> {
        let mut pred = vec![None; self.succ.len()];
        let mut seen = vec![false; self.succ.len()];
        seen[src] = true;
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            for &(v, r) in &self.succ[u] {
                if !seen[v] {
                    seen[v] = true;
                    pred[v] = Some((u, r));
                    q.push_back(v);
                }
            }
        }
        pred
    }

    pub(crate) fn path_to(s: &Service, pred: &[Option<(usize, FlowRule)>], src: usize, dst: usize) -> Option<FlowPath> {
        if src == dst {
            return Some(FlowPath::singleton(s.at(src).id.clone()));
        }
        pred[dst]?;
        let mut nodes = vec![dst];
        let mut rules = Vec::new();
        let mut cur = dst;
        while cur != src {
            let (p, r) = pred[cur]?;
            rules.push(r);
            nodes.push(p);
            cur = p;
        }
        nodes.reverse();
        rules.reverse();
        Some(FlowPath {
            nodes: nodes.into_iter().map(|i| s.at(i).id.clone()).collect(),
            rules,
        })
    }
}

/// Memoized flow graph of a service.
pub fn flow_graph(s: &Service) -> &FlowGraph {
    s.flow_cell().get_or_init(|| build_flow_graph(s))
}
