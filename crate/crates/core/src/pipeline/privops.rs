use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::trace::Trace;
use super::ScanOptions;
use crate::model::{Element, ElementId, ElementKind, Location, Program, Service};
use crate::reasoner::{
    baseline_sink, CgDirectionArg, ElementView, NameModeArg, PrivCategory, Reasoner, ReasonerError, ReasonerTask,
    ReasonerVerdict, SearchAction, SearchState,
};
use crate::search::{get_source, q_ast, q_cg, q_name, CgDirection, NameMode};

const PHASE: &str = "privileged_ops";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivilegedOperation {
    pub element: ElementId,
    pub service: String,
    pub location: Location,
    pub source: String,
    pub category: PrivCategory,
    pub rationale: String,
    /// Found by the standard sink list rather than by search.
    pub baseline: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PrivOps {
    /// Sorted by (service, location).
    pub ops: Vec<PrivilegedOperation>,
    pub calls: u32,
    pub rounds: u32,
    pub exhausted: bool,
}

fn op_of(e: &Element, category: PrivCategory, rationale: String, baseline: bool) -> PrivilegedOperation {
    PrivilegedOperation {
        element: e.id.clone(),
        service: e.service.clone(),
        location: e.location.clone(),
        source: e.source.clone(),
        category,
        rationale,
        baseline,
    }
}

fn calls_in_function<'s>(s: &'s Service, f: &Element) -> Vec<&'s Element> {
    s.elements()
        .iter()
        .filter(|e| e.kind == ElementKind::Call && s.enclosing_function(&e.id).is_some_and(|g| g.id == f.id))
        .collect()
}

struct Discovery<'a> {
    program: &'a Program,
    reasoner: &'a dyn Reasoner,
    trace: &'a mut Trace,
    ops: BTreeMap<ElementId, PrivilegedOperation>,
    classified: BTreeSet<ElementId>,
    state: SearchState,
}

impl Discovery<'_> {
    /// Runs one search action; returns the candidate call sites it surfaced.
    fn run(&mut self, action: &SearchAction) -> Vec<Element> {
        let program = self.program;
        let (service, tool) = match action {
            SearchAction::QName { service, .. } => (service, "q_name"),
            SearchAction::QAst { service, .. } => (service, "q_ast"),
            SearchAction::QCg { service, .. } => (service, "q_cg"),
            SearchAction::Finish => return Vec::new(),
        };
        let args = serde_json::to_value(action).expect("actions serialize");
        let Some(s) = program.service(service) else {
            self.trace.record(
                PHASE,
                tool,
                args,
                json!({"error": format!("unknown service `{service}`")}),
            );
            return Vec::new();
        };
        let found: Result<Vec<&Element>, String> = match action {
            SearchAction::QName { pattern, mode, .. } => {
                let mode = match mode {
                    NameModeArg::Exact => NameMode::Exact,
                    NameModeArg::Regex => NameMode::Regex,
                };
                q_name(s, pattern, mode).map_err(|e| e.to_string())
            }
            SearchAction::QAst { kind, .. } => Ok(q_ast(s, *kind)),
            SearchAction::QCg {
                function,
                direction,
                depth,
                ..
            } => {
                let dir = match direction {
                    CgDirectionArg::Callers => CgDirection::Callers,
                    CgDirectionArg::Callees => CgDirection::Callees,
                };
                q_cg(s, function, dir, *depth).map_err(|e| e.to_string())
            }
            SearchAction::Finish => unreachable!(),
        };
        let found = match found {
            Ok(f) => f,
            Err(e) => {
                self.trace.record(PHASE, tool, args, json!({"error": e}));
                return Vec::new();
            }
        };
        self.trace.record(
            PHASE,
            tool,
            args,
            json!({"count": found.len(), "elements": found.iter().map(|e| e.id.as_str()).collect::<Vec<_>>()}),
        );
        let mut out = Vec::new();
        for e in found {
            match e.kind {
                ElementKind::Call => out.push(e.clone()),
                ElementKind::Function => {
                    if matches!(action, SearchAction::QName { .. }) {
                        let hit = (service.clone(), e.name.clone());
                        if !self.state.name_hits.contains(&hit) {
                            self.state.name_hits.push(hit);
                        }
                    }
                    out.extend(calls_in_function(s, e).into_iter().cloned());
                }
                _ => {}
            }
        }
        out
    }

    /// Classifies unseen candidates; returns how many new operations were found.
    fn classify(&mut self, candidates: Vec<Element>) -> Result<usize, ReasonerError> {
        let mut new = 0;
        for e in candidates {
            if !self.classified.insert(e.id.clone()) || self.ops.contains_key(&e.id) {
                continue;
            }
            let s = self
                .program
                .service(&e.service)
                .expect("candidates come from program services");
            let source = get_source(s, &e.id).expect("candidate exists");
            self.trace
                .record(PHASE, "get_source", json!({"element": e.id}), json!({"source": source}));
            let task = ReasonerTask::ClassifyPrivileged {
                element: ElementView::of(&e),
            };
            let verdict = super::ask(self.reasoner, &task)?;
            self.trace.record(
                PHASE,
                "reasoner",
                json!({"task": task.kind(), "element": e.id}),
                serde_json::to_value(&verdict).expect("verdicts serialize"),
            );
            if let ReasonerVerdict::PrivilegedClass {
                category: Some(category),
                rationale,
            } = verdict
            {
                self.ops.insert(e.id.clone(), op_of(&e, category, rationale, false));
                new += 1;
            }
        }
        Ok(new)
    }
}

/// Baseline sinks plus whatever the reasoner's searches turn up, until a
/// whole round finds nothing new or the budget runs out.
pub fn find_privileged_ops(
    program: &Program,
    reasoner: &dyn Reasoner,
    opts: &ScanOptions,
    trace: &mut Trace,
) -> Result<PrivOps, ReasonerError> {
    let started = Instant::now();
    let mut ops = BTreeMap::new();
    for s in &program.services {
        let mut n = 0;
        for e in s.elements().iter().filter(|e| e.kind == ElementKind::Call) {
            if let Some((category, rationale)) = baseline_sink(&opts.rules, &e.source) {
                ops.insert(e.id.clone(), op_of(e, category, rationale, true));
                n += 1;
            }
        }
        trace.record(PHASE, "baseline", json!({"service": s.name()}), json!({"count": n}));
    }
    let services: Vec<String> = program.services.iter().map(|s| s.name().to_string()).collect();
    let mut d = Discovery {
        program,
        reasoner,
        trace,
        ops,
        classified: BTreeSet::new(),
        state: SearchState {
            round: 0,
            services,
            tools: ["q_name", "q_ast", "q_cg", "finish"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ..SearchState::default()
        },
    };
    let mut out = PrivOps::default();
    if !opts.basic_sink {
        'rounds: loop {
            d.state.round += 1;
            out.rounds = d.state.round;
            let mut new = 0;
            loop {
                if out.calls >= opts.budget.max_calls_per_phase || started.elapsed() >= opts.budget.wall_clock {
                    out.exhausted = true;
                    break 'rounds;
                }
                let task = ReasonerTask::NextSearchAction { state: d.state.clone() };
                let verdict = super::ask(reasoner, &task)?;
                let ReasonerVerdict::Action { action, .. } = verdict else {
                    unreachable!("verdicts are checked against their task")
                };
                if action == SearchAction::Finish {
                    d.trace.record(
                        PHASE,
                        "finish",
                        json!({"round": d.state.round}),
                        json!({"new_ops": new}),
                    );
                    break;
                }
                out.calls += 1;
                let candidates = d.run(&action);
                d.state.done.push(action);
                new += d.classify(candidates)?;
            }
            if new == 0 {
                break;
            }
            let mut discovered: Vec<String> = d
                .ops
                .values()
                .filter(|o| !o.baseline)
                .filter_map(|o| crate::callsite::parse_call_source(&o.source).map(|c| c.callee))
                .collect();
            discovered.sort();
            discovered.dedup();
            d.state.discovered = discovered;
        }
    }
    let mut ops: Vec<PrivilegedOperation> = d.ops.into_values().collect();
    ops.sort_by(|a, b| (&a.service, &a.location, &a.element).cmp(&(&b.service, &b.location, &b.element)));
    out.ops = ops;
    Ok(out)
}
