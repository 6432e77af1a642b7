//! The four code-search primitives and the element property functions.

mod flow;

use std::collections::{BTreeSet, HashSet};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flow::{build_flow_graph, flow_graph, FlowGraph, FlowPath, FlowRule};

use crate::callsite::parse_call_source;
use crate::model::{EdgeKind, Element, ElementId, ElementKind, Location, Service, TypeTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NameMode {
    Exact,
    Regex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CgDirection {
    Callers,
    Callees,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("bad pattern: {0}")]
    BadPattern(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("`{0}` is not a function")]
    NotAFunction(String),
    #[error("depth must be at least 1")]
    BadDepth,
}

/// Elements whose name matches `pattern`, in location order. Regex patterns
/// must match the whole name. Anonymous elements never match.
pub fn q_name<'s>(s: &'s Service, pattern: &str, mode: NameMode) -> Result<Vec<&'s Element>, SearchError> {
    if pattern.is_empty() {
        return Err(SearchError::BadPattern("empty pattern".into()));
    }
    let named = s.elements().iter().filter(|e| !e.name.is_empty());
    Ok(match mode {
        NameMode::Exact => named.filter(|e| e.name == pattern).collect(),
        NameMode::Regex => {
            let re = Regex::new(&format!("^(?:{pattern})$")).map_err(|e| SearchError::BadPattern(e.to_string()))?;
            named.filter(|e| re.is_match(&e.name)).collect()
        }
    })
}

pub fn q_ast(s: &Service, kind: ElementKind) -> Vec<&Element> {
    s.elements().iter().filter(|e| e.kind == kind).collect()
}

/// Resolves a flow selector: an element id; otherwise the non-function
/// elements with that name together with the call sites whose callee is the
/// selector or a method under it (`request` selects `request.param(..)`).
pub fn resolve_flow_selector(s: &Service, sel: &str) -> Result<Vec<usize>, SearchError> {
    if let Some(i) = s.index_of(&ElementId::from(sel)) {
        return Ok(vec![i]);
    }
    let prefix = format!("{sel}.");
    let hits: Vec<usize> = s
        .elements()
        .iter()
        .enumerate()
        .filter(|(_, e)| match e.kind {
            ElementKind::Function => false,
            ElementKind::Call => parse_call_source(&e.source)
                .map(|c| c.callee == sel || c.callee.starts_with(&prefix))
                .unwrap_or(false),
            _ => e.name == sel,
        })
        .map(|(i, _)| i)
        .collect();
    if hits.is_empty() {
        Err(SearchError::UnknownElement(sel.to_string()))
    } else {
        Ok(hits)
    }
}

/// Shortest flow path for every (source, sink) pair that is connected.
pub fn q_flow(s: &Service, from: &str, to: &str) -> Result<Vec<FlowPath>, SearchError> {
    let srcs = resolve_flow_selector(s, from)?;
    let dsts = resolve_flow_selector(s, to)?;
    Ok(q_flow_idx(s, &srcs, &dsts))
}

pub(crate) fn q_flow_idx(s: &Service, srcs: &[usize], dsts: &[usize]) -> Vec<FlowPath> {
    let g = flow_graph(s);
    let mut out = Vec::new();
    for &src in srcs {
        let pred = g.bfs(src);
        for &dst in dsts {
            if let Some(p) = FlowGraph::path_to(s, &pred, src, dst) {
                out.push(p);
            }
        }
    }
    out
}

/// Shortest path between two element ids, if any.
pub fn flow_between(s: &Service, from: &ElementId, to: &ElementId) -> Option<FlowPath> {
    let (a, b) = (s.index_of(from)?, s.index_of(to)?);
    q_flow_idx(s, &[a], &[b]).pop()
}

fn resolve_functions(s: &Service, sel: &str) -> Result<Vec<usize>, SearchError> {
    if let Some(i) = s.index_of(&ElementId::from(sel)) {
        return if s.at(i).kind == ElementKind::Function {
            Ok(vec![i])
        } else {
            Err(SearchError::NotAFunction(sel.to_string()))
        };
    }
    let fns: Vec<usize> = s
        .elements()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == ElementKind::Function && e.name == sel)
        .map(|(i, _)| i)
        .collect();
    if !fns.is_empty() {
        return Ok(fns);
    }
    if s.elements().iter().any(|e| e.name == sel) {
        Err(SearchError::NotAFunction(sel.to_string()))
    } else {
        Err(SearchError::UnknownElement(sel.to_string()))
    }
}

/// Function-level call pairs (caller, callee). A call site belongs to its
/// enclosing function; a decorator belongs to the function it decorates.
pub fn call_pairs(s: &Service) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for e in s.edges().iter().filter(|e| e.kind == EdgeKind::Calls) {
        let (Some(_), Some(t)) = (s.index_of(&e.from), s.index_of(&e.to)) else {
            continue;
        };
        if s.at(t).kind != ElementKind::Function {
            continue;
        }
        if let Some(f) = s.enclosing_function(&e.from).and_then(|f| s.index_of(&f.id)) {
            out.insert((f, t));
        }
    }
    out
}

/// Functions within `depth` call hops of the selected function(s).
pub fn q_cg<'s>(
    s: &'s Service,
    function: &str,
    direction: CgDirection,
    depth: u32,
) -> Result<Vec<&'s Element>, SearchError> {
    if depth == 0 {
        return Err(SearchError::BadDepth);
    }
    let start = resolve_functions(s, function)?;
    let pairs = call_pairs(s);
    let step = |f: usize| -> Vec<usize> {
        pairs
            .iter()
            .filter_map(|&(a, b)| match direction {
                CgDirection::Callees if a == f => Some(b),
                CgDirection::Callers if b == f => Some(a),
                _ => None,
            })
            .collect()
    };
    let mut found = BTreeSet::new();
    let mut frontier: Vec<usize> = start;
    let mut expanded = HashSet::new();
    for _ in 0..depth {
        let mut next = Vec::new();
        for f in frontier {
            if !expanded.insert(f) {
                continue;
            }
            for g in step(f) {
                if found.insert(g) {
                    next.push(g);
                }
            }
        }
        frontier = next;
    }
    Ok(found.into_iter().map(|i| s.at(i)).collect())
}

fn lookup<'s>(s: &'s Service, id: &ElementId) -> Result<&'s Element, SearchError> {
    s.element(id).ok_or_else(|| SearchError::UnknownElement(id.to_string()))
}

pub fn get_location(s: &Service, id: &ElementId) -> Result<Location, SearchError> {
    lookup(s, id).map(|e| e.location.clone())
}

pub fn get_source(s: &Service, id: &ElementId) -> Result<String, SearchError> {
    lookup(s, id).map(|e| e.source.clone())
}

pub fn get_type(s: &Service, id: &ElementId) -> Result<TypeTag, SearchError> {
    lookup(s, id).map(|e| e.inferred_type)
}

#[cfg(test)]
mod tests;
