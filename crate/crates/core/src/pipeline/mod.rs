//! The scan: privileged-operation discovery, global flow construction and
//! per-flow validation (feasibility, check location, sufficiency).

mod checks;
mod privops;
mod trace;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use checks::{assess_flow, locate_checks, CheckFinding, LocatedChecks, Snippet, CHAIN_HOPS};
pub use privops::{find_privileged_ops, PrivOps, PrivilegedOperation};
pub use trace::{Trace, TraceEvent};

use crate::constraints::{check_sat, emit_smtlib, extract_path_constraints, SatResult};
use crate::cross_service::{build_global_graph, q_globalflow, q_user, CrossServiceError, GlobalPath, NodeRef, Segment};
use crate::model::{validate_program, IntegrityViolation, Program};
use crate::reasoner::{
    ConstraintAnswer, OracleRules, Reasoner, ReasonerError, ReasonerTask, ReasonerVerdict, Sufficiency,
};
use crate::report::{
    BudgetUsage, Feasibility, Finding, FlowOutcome, FlowRecord, Funnel, Hop, ProgramSummary, Report, ReportOptions,
    ServiceSummary, TraceSummary, SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanBudget {
    pub max_calls_per_phase: u32,
    pub wall_clock: Duration,
    pub max_flows: usize,
}

impl Default for ScanBudget {
    fn default() -> Self {
        ScanBudget {
            max_calls_per_phase: 40,
            wall_clock: Duration::from_secs(600),
            max_flows: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    /// Only the standard sink intrinsics count as privileged operations.
    pub basic_sink: bool,
    /// One context pass after flow construction instead of on-demand retrieval.
    pub no_odctx: bool,
    pub budget: ScanBudget,
    pub rules: OracleRules,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            basic_sink: false,
            no_odctx: false,
            budget: ScanBudget::default(),
            rules: OracleRules::defaults(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("program is not well-formed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<IntegrityViolation>),
    #[error("budget must be positive")]
    BadBudget,
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error(transparent)]
    CrossService(#[from] CrossServiceError),
}

/// Everything a scan produces. Only `report` is deterministic.
#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub report: Report,
    pub trace: Trace,
    /// SMT-LIB text per path id, for flows that had a constraint.
    pub smt: BTreeMap<String, String>,
}

/// Asks the reasoner and rejects verdicts that do not fit the task.
pub(crate) fn ask(reasoner: &dyn Reasoner, task: &ReasonerTask) -> Result<ReasonerVerdict, ReasonerError> {
    let v = reasoner.reason(task)?;
    v.check_against(task)
        .map_err(|detail| ReasonerError::SchemaViolation { attempts: 1, detail })?;
    Ok(v)
}

/// Stable id of a global path: hash of its node sequence.
pub fn path_id(path: &GlobalPath) -> String {
    let mut h = Sha256::new();
    for n in &path.nodes {
        h.update(n.service.as_bytes());
        h.update([0x1f]);
        h.update(n.element.as_str().as_bytes());
        h.update([0x1e]);
    }
    format!("p{}", &hex::encode(h.finalize())[..16])
}

fn hops(program: &Program, path: &GlobalPath) -> Vec<Hop> {
    let mut out: Vec<Hop> = Vec::new();
    let push_element = |out: &mut Vec<Hop>, n: &NodeRef| {
        let Some(e) = program.service(&n.service).and_then(|s| s.element(&n.element)) else {
            return;
        };
        if matches!(out.last(), Some(Hop::Element { element, service, .. }) if *element == e.id && *service == n.service)
        {
            return;
        }
        out.push(Hop::Element {
            service: n.service.clone(),
            element: e.id.clone(),
            kind: e.kind,
            location: e.location.clone(),
            source: e.source.clone(),
        });
    };
    for seg in &path.segments {
        match seg {
            Segment::Intra { service, path } => {
                for id in &path.nodes {
                    push_element(&mut out, &NodeRef::new(service.clone(), id.clone()));
                }
            }
            Segment::Cross { edge } => {
                push_element(&mut out, &edge.from_node());
                out.push(Hop::Channel {
                    protocol: edge.from.protocol,
                    identifier: edge.from.identifier.clone(),
                    from_service: edge.from_service.clone(),
                    to_service: edge.to_service.clone(),
                    endpoint: edge.to.identifier.clone(),
                    match_rule: edge.match_rule,
                });
                push_element(&mut out, &edge.to_node());
            }
        }
    }
    out
}

struct FlowResult {
    record: FlowRecord,
    finding: Option<Finding>,
    smt: Option<String>,
    trace: Trace,
}

fn validate(
    program: &Program,
    path: &GlobalPath,
    privop: &PrivilegedOperation,
    reasoner: &dyn Reasoner,
    opts: &ScanOptions,
    mut trace: Trace,
) -> Result<FlowResult, ReasonerError> {
    let id = path_id(path);
    let record = |outcome, constraint: Option<String>, reason: String| FlowRecord {
        path_id: id.clone(),
        source: path.source().clone(),
        sink: path.sink().clone(),
        outcome,
        constraint,
        reason,
    };
    let answer = extract_path_constraints(program, path, reasoner)?;
    trace.record(
        "validate",
        "reasoner",
        json!({"task": "extract_constraints", "path": id}),
        serde_json::to_value(&answer).expect("answers serialize"),
    );
    let (feasibility, constraint, mut reason, smt) = match &answer {
        ConstraintAnswer::Predicates { constraint } => {
            let text = constraint.formula.to_string();
            let smt = emit_smtlib(constraint);
            let sat = check_sat(constraint);
            trace.record(
                "validate",
                "check_sat",
                json!({"path": id, "constraint": text}),
                serde_json::to_value(&sat).expect("results serialize"),
            );
            match sat {
                SatResult::Unsat => {
                    return Ok(FlowResult {
                        record: record(
                            FlowOutcome::ConstraintPruned,
                            Some(text),
                            "path constraint is unsatisfiable".into(),
                        ),
                        finding: None,
                        smt: Some(smt),
                        trace,
                    })
                }
                SatResult::Sat { .. } => (Feasibility::Feasible, Some(text), String::new(), Some(smt)),
                SatResult::Unknown { reason } => (
                    Feasibility::Unknown,
                    Some(text),
                    format!("feasibility unknown: {reason}"),
                    Some(smt),
                ),
            }
        }
        ConstraintAnswer::Skipped { reason } => (
            Feasibility::Unknown,
            None,
            format!("constraints skipped: {reason}"),
            None,
        ),
    };
    let located = locate_checks(program, path, &opts.rules, reasoner, !opts.no_odctx, &mut trace)?;
    let (verdict, rationale) = assess_flow(program, privop, &located, reasoner, &mut trace)?;
    if !reason.is_empty() {
        reason.push_str("; ");
    }
    reason.push_str(&rationale);
    if verdict == Sufficiency::Protected {
        return Ok(FlowResult {
            record: record(FlowOutcome::ProtectedDropped, constraint, reason),
            finding: None,
            smt,
            trace,
        });
    }
    let finding = Finding {
        id: id.clone(),
        service: privop.service.clone(),
        file: privop.location.file.clone(),
        line: privop.location.line,
        col: privop.location.col,
        verdict,
        category: privop.category,
        feasibility,
        rationale,
        privop: privop.clone(),
        checks: located.checks,
        hops: hops(program, path),
        path: path.clone(),
        evidence: located.evidence,
    };
    Ok(FlowResult {
        record: record(FlowOutcome::Finding, constraint, reason),
        finding: Some(finding),
        smt,
        trace,
    })
}

/// Runs the whole analysis over a validated program.
pub fn scan(program: &Program, reasoner: &dyn Reasoner, opts: &ScanOptions) -> Result<ScanOutput, ScanError> {
    let b = opts.budget;
    if b.max_calls_per_phase == 0 || b.max_flows == 0 || b.wall_clock.is_zero() {
        return Err(ScanError::BadBudget);
    }
    let violations = validate_program(program);
    if !violations.is_empty() {
        return Err(ScanError::Invalid(violations));
    }
    let started = Instant::now();
    let mut trace = Trace::starting_at(started);

    let privops = find_privileged_ops(program, reasoner, opts, &mut trace)?;
    let mut exhausted = privops.exhausted;
    let sinks: Vec<NodeRef> = privops
        .ops
        .iter()
        .map(|o| NodeRef::new(o.service.clone(), o.element.clone()))
        .collect();

    let graph = build_global_graph(program, &sinks);
    for q in &graph.flow_queries {
        trace.record(
            "flows",
            "q_flow",
            json!({"service": q.service, "from": q.from, "to": q.to}),
            json!({"hops": q.hops}),
        );
    }
    trace.record(
        "flows",
        "match_channels",
        json!({}),
        json!({"edges": graph.channel_edges.len(), "diagnostics": graph.diagnostics.len()}),
    );
    let users = q_user(program, reasoner)?;
    trace.record(
        "flows",
        "q_user",
        json!({"routes": program.manifest.gateway_routes}),
        json!({"sources": users.iter().map(|(n, _)| n.element.as_str()).collect::<Vec<_>>()}),
    );
    let sources: Vec<NodeRef> = users.into_iter().map(|(n, _)| n).collect();
    let flows = q_globalflow(&graph, &sources, &sinks);
    trace.record(
        "flows",
        "q_globalflow",
        json!({"sources": sources.len(), "sinks": sinks.len()}),
        json!({"paths": flows.paths.len(), "truncated": flows.truncated}),
    );
    exhausted |= flows.truncated;

    let by_node: BTreeMap<NodeRef, &PrivilegedOperation> = privops
        .ops
        .iter()
        .map(|o| (NodeRef::new(o.service.clone(), o.element.clone()), o))
        .collect();
    let mut paths: Vec<(String, &GlobalPath)> = flows.paths.iter().map(|p| (path_id(p), p)).collect();
    paths.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.nodes.cmp(&b.1.nodes)));
    let (kept, dropped) = paths.split_at(paths.len().min(b.max_flows));
    exhausted |= !dropped.is_empty();

    let run = |(_, p): &(String, &GlobalPath)| -> Option<Result<FlowResult, ReasonerError>> {
        if started.elapsed() >= b.wall_clock {
            return None;
        }
        let op = by_node[p.sink()];
        Some(validate(program, p, op, reasoner, opts, trace.fork()))
    };
    let results: Vec<Option<Result<FlowResult, ReasonerError>>> = if reasoner.deterministic() {
        kept.par_iter().map(run).collect()
    } else {
        kept.iter().map(run).collect()
    };

    let mut records = Vec::new();
    let mut findings = Vec::new();
    let mut smt = BTreeMap::new();
    let mut funnel = Funnel {
        initial: paths.len(),
        ..Funnel::default()
    };
    let truncated = |(id, p): &(String, &GlobalPath)| FlowRecord {
        path_id: id.clone(),
        source: p.source().clone(),
        sink: p.sink().clone(),
        outcome: FlowOutcome::BudgetTruncated,
        constraint: None,
        reason: "not validated: budget exhausted".into(),
    };
    for (r, item) in results.into_iter().zip(kept) {
        let Some(r) = r else {
            exhausted = true;
            records.push(truncated(item));
            continue;
        };
        let r = r?;
        trace.absorb(r.trace);
        if let Some(text) = r.smt {
            smt.insert(r.record.path_id.clone(), text);
        }
        records.push(r.record);
        findings.extend(r.finding);
    }
    records.extend(dropped.iter().map(truncated));
    for rec in &records {
        match rec.outcome {
            FlowOutcome::ConstraintPruned => funnel.constraint_pruned += 1,
            FlowOutcome::ProtectedDropped => funnel.protected_dropped += 1,
            FlowOutcome::Finding => funnel.final_ += 1,
            FlowOutcome::BudgetTruncated => funnel.budget_truncated += 1,
        }
    }
    findings.sort_by(|a: &Finding, b: &Finding| {
        (&a.service, &a.file, a.line, &a.id).cmp(&(&b.service, &b.file, b.line, &b.id))
    });

    let report = Report {
        schema: SCHEMA_VERSION,
        tool: "privflow".into(),
        reasoner: reasoner.name().to_string(),
        options: ReportOptions {
            basic_sink: opts.basic_sink,
            no_odctx: opts.no_odctx,
        },
        program: ProgramSummary {
            services: program
                .services
                .iter()
                .map(|s| ServiceSummary {
                    name: s.name().to_string(),
                    entry: s.is_entry(),
                    elements: s.elements().len(),
                    edges: s.edges().len(),
                    channels: crate::cross_service::q_inter(s).len(),
                })
                .collect(),
            elements: program.element_count(),
        },
        privileged_operations: privops.ops.clone(),
        diagnostics: graph.diagnostics.clone(),
        funnel,
        flows: records,
        findings,
        budget: BudgetUsage {
            max_calls_per_phase: b.max_calls_per_phase,
            wall_clock_seconds: b.wall_clock.as_secs(),
            max_flows: b.max_flows,
            calls: [("privileged_ops".to_string(), privops.calls)].into(),
            exhausted,
        },
        trace: TraceSummary {
            events: trace.events.len(),
            tools: trace.count_by_tool(),
        },
    };
    Ok(ScanOutput { report, trace, smt })
}
