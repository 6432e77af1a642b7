use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::privops::PrivilegedOperation;
use super::trace::Trace;
use crate::callsite::parse_call_source;
use crate::cross_service::GlobalPath;
use crate::model::{EdgeKind, Element, ElementId, ElementKind, Location, Program, Service};
use crate::reasoner::{
    Attachment, AuthzSubtype, CheckClass, CheckView, ElementView, OracleRules, Reasoner, ReasonerError, ReasonerTask,
    ReasonerVerdict, Sufficiency,
};

const PHASE: &str = "validate";

/// Decorator chains are followed this many `calls` hops.
pub const CHAIN_HOPS: usize = 4;

/// Verbatim source of an element on or referenced from a path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Snippet {
    pub service: String,
    pub element: ElementId,
    pub location: Location,
    pub source: String,
}

impl Snippet {
    fn of(e: &Element) -> Snippet {
        Snippet {
            service: e.service.clone(),
            element: e.id.clone(),
            location: e.location.clone(),
            source: e.source.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckFinding {
    pub element: ElementId,
    pub service: String,
    pub location: Location,
    /// For inline checks, the conditional's header line only.
    pub source: String,
    pub classification: CheckClass,
    pub authz_subtype: AuthzSubtype,
    pub attachment: Attachment,
    pub rationale: String,
    /// Implementation functions retrieved for this check.
    pub implementation: Vec<ElementId>,
}

#[derive(Debug, Clone, Default)]
pub struct LocatedChecks {
    pub checks: Vec<CheckFinding>,
    /// Retrieved implementation text per check, parallel to `checks`.
    pub contexts: Vec<String>,
    pub evidence: Vec<Snippet>,
}

struct Candidate<'s> {
    element: &'s Element,
    view_source: String,
    attachment: Attachment,
    implementation: Vec<&'s Element>,
}

/// Functions reachable from `start` over `calls` edges within [`CHAIN_HOPS`].
fn chain<'s>(s: &'s Service, start: &ElementId) -> Vec<&'s Element> {
    let mut out: Vec<&Element> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut frontier = vec![start.clone()];
    for _ in 0..CHAIN_HOPS {
        let mut next = Vec::new();
        for id in &frontier {
            // a function's callees are the targets of the call sites it contains
            let mut sites = vec![id.clone()];
            if s.element(id).is_some_and(|e| e.kind == ElementKind::Function) {
                sites = s
                    .elements()
                    .iter()
                    .filter(|e| e.kind == ElementKind::Call && s.enclosing_function(&e.id).is_some_and(|f| f.id == *id))
                    .map(|e| e.id.clone())
                    .collect();
            }
            for site in sites {
                for f in s.successors(&site, EdgeKind::Calls) {
                    if f.kind == ElementKind::Function && seen.insert(f.id.clone()) {
                        out.push(f);
                        next.push(f.id.clone());
                    }
                }
            }
        }
        frontier = next;
    }
    out
}

fn callee_method(e: &Element) -> Option<String> {
    parse_call_source(&e.source).map(|c| c.method)
}

fn header(source: &str) -> String {
    let first = source.lines().next().unwrap_or("").trim_end();
    first.trim_end_matches('{').trim_end().to_string()
}

/// The function a path element runs in: endpoints count toward the handler
/// they decorate.
fn home<'s>(s: &'s Service, e: &Element) -> Option<&'s Element> {
    if e.kind == ElementKind::Endpoint {
        return s
            .successors(&e.id, EdgeKind::Decorates)
            .into_iter()
            .find(|f| f.kind == ElementKind::Function);
    }
    s.enclosing_function(&e.id)
}

fn candidates<'s>(program: &'s Program, path: &GlobalPath, rules: &OracleRules) -> (Vec<Candidate<'s>>, Vec<Snippet>) {
    let mut on_path: Vec<(&Service, &Element)> = Vec::new();
    for n in path.elements() {
        if let Some(s) = program.service(&n.service) {
            if let Some(e) = s.element(&n.element) {
                on_path.push((s, e));
            }
        }
    }
    let path_snippets = on_path.iter().map(|(_, e)| Snippet::of(e)).collect();
    let mut functions: Vec<(&Service, &Element)> = Vec::new();
    for (s, e) in &on_path {
        if let Some(f) = home(s, e) {
            if !functions.iter().any(|(t, g)| t.name() == s.name() && g.id == f.id) {
                functions.push((s, f));
            }
        }
    }
    let mut out = Vec::new();
    for (s, f) in functions {
        let inside: Vec<&Element> = on_path
            .iter()
            .filter(|(t, e)| t.name() == s.name() && home(t, e).is_some_and(|g| g.id == f.id))
            .map(|(_, e)| *e)
            .filter(|e| e.kind != ElementKind::Endpoint)
            .collect();
        let mut decorators: Vec<&Element> = s
            .predecessors(&f.id, EdgeKind::Decorates)
            .into_iter()
            .filter(|d| d.kind == ElementKind::Decorator)
            .collect();
        decorators.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        for d in decorators {
            let implementation = chain(s, &d.id);
            if implementation.is_empty() && !rules.is_check_name(&d.name) {
                continue;
            }
            if !implementation.is_empty()
                && !rules.is_check_name(&d.name)
                && !implementation.iter().any(|g| rules.is_check_name(&g.name))
            {
                continue;
            }
            out.push(Candidate {
                element: d,
                view_source: d.source.clone(),
                attachment: Attachment::Decorator,
                implementation,
            });
        }
        let first = inside
            .iter()
            .filter(|e| e.kind != ElementKind::Parameter)
            .map(|e| &e.location)
            .min();
        let mut bare: Vec<&Element> = s
            .elements()
            .iter()
            .filter(|c| {
                c.kind == ElementKind::Call
                    && s.parent(&c.id).is_some_and(|p| p.id == f.id)
                    && first.is_some_and(|l| c.location < *l)
                    && callee_method(c).is_some_and(|m| rules.is_check_name(&m))
            })
            .collect();
        bare.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        for c in bare {
            out.push(Candidate {
                element: c,
                view_source: c.source.clone(),
                attachment: Attachment::Middleware,
                implementation: chain(s, &c.id),
            });
        }
        let mut conds: Vec<&Element> = Vec::new();
        for e in &inside {
            for a in s.ancestors(&e.id) {
                if a.id == f.id {
                    break;
                }
                if a.kind == ElementKind::Conditional && !conds.iter().any(|c| c.id == a.id) {
                    conds.push(a);
                }
            }
        }
        conds.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        for c in conds {
            let head = header(&c.source);
            let calls: Vec<&Element> = s
                .successors(&c.id, EdgeKind::Contains)
                .into_iter()
                .filter(|k| {
                    k.kind == ElementKind::Call
                        && k.location.line == c.location.line
                        && callee_method(k).is_some_and(|m| rules.is_check_name(&m))
                })
                .collect();
            if calls.is_empty() && !rules.has_ownership_pattern(&head) {
                continue;
            }
            let mut implementation = Vec::new();
            for k in calls {
                for g in chain(s, &k.id) {
                    if !implementation.iter().any(|h: &&Element| h.id == g.id) {
                        implementation.push(g);
                    }
                }
            }
            out.push(Candidate {
                element: c,
                view_source: head,
                attachment: Attachment::Inline,
                implementation,
            });
        }
    }
    (out, path_snippets)
}

/// Checks guarding a path: decorators (followed to their implementation),
/// check calls made before the path enters a function, and conditionals
/// around path elements whose header calls a check or compares ownership.
/// With `on_demand` off, implementations are not retrieved and checks are
/// classified from their own text.
pub fn locate_checks(
    program: &Program,
    path: &GlobalPath,
    rules: &OracleRules,
    reasoner: &dyn Reasoner,
    on_demand: bool,
    trace: &mut Trace,
) -> Result<LocatedChecks, ReasonerError> {
    let (cands, mut evidence) = candidates(program, path, rules);
    let mut out = LocatedChecks::default();
    for c in cands {
        let mut context = String::new();
        let mut implementation = Vec::new();
        if on_demand {
            for g in &c.implementation {
                trace.record(
                    PHASE,
                    "get_source",
                    json!({"element": g.id}),
                    json!({"source": g.source}),
                );
                if !context.is_empty() {
                    context.push_str("\n\n");
                }
                context.push_str(&g.source);
                implementation.push(g.id.clone());
                evidence.push(Snippet::of(g));
            }
        }
        let mut view = ElementView::of(c.element);
        view.source = c.view_source.clone();
        let task = ReasonerTask::ClassifyCheck {
            element: view,
            context: context.clone(),
        };
        let verdict = super::ask(reasoner, &task)?;
        trace.record(
            PHASE,
            "reasoner",
            json!({"task": task.kind(), "element": c.element.id}),
            serde_json::to_value(&verdict).expect("verdicts serialize"),
        );
        let ReasonerVerdict::CheckClass {
            classification,
            authz_subtype,
            rationale,
        } = verdict
        else {
            unreachable!("verdicts are checked against their task")
        };
        evidence.push(Snippet::of(c.element));
        out.checks.push(CheckFinding {
            element: c.element.id.clone(),
            service: c.element.service.clone(),
            location: c.element.location.clone(),
            source: c.view_source,
            classification,
            authz_subtype,
            attachment: c.attachment,
            rationale,
            implementation,
        });
        out.contexts.push(context);
    }
    let mut seen = BTreeSet::new();
    evidence.retain(|s| seen.insert((s.service.clone(), s.element.clone())));
    out.evidence = evidence;
    Ok(out)
}

/// Sufficiency of the located checks for one privileged operation.
pub fn assess_flow(
    program: &Program,
    privop: &PrivilegedOperation,
    located: &LocatedChecks,
    reasoner: &dyn Reasoner,
    trace: &mut Trace,
) -> Result<(Sufficiency, String), ReasonerError> {
    let element = program
        .service(&privop.service)
        .and_then(|s| s.element(&privop.element))
        .map(ElementView::of)
        .expect("privileged operations come from the program");
    let checks: Vec<CheckView> = located
        .checks
        .iter()
        .zip(&located.contexts)
        .map(|(c, ctx)| CheckView {
            element: ElementView {
                id: c.element.clone(),
                service: c.service.clone(),
                kind: program
                    .service(&c.service)
                    .and_then(|s| s.element(&c.element))
                    .map_or(ElementKind::Call, |e| e.kind),
                name: program
                    .service(&c.service)
                    .and_then(|s| s.element(&c.element))
                    .map(|e| e.name.clone())
                    .unwrap_or_default(),
                location: c.location.clone(),
                source: c.source.clone(),
            },
            classification: c.classification,
            authz_subtype: c.authz_subtype,
            attachment: c.attachment,
            context: ctx.clone(),
        })
        .collect();
    let task = ReasonerTask::AssessSufficiency {
        privop: element,
        category: privop.category,
        checks,
        contexts: located.evidence.iter().map(|s| s.source.clone()).collect(),
    };
    let verdict = super::ask(reasoner, &task)?;
    trace.record(
        PHASE,
        "reasoner",
        json!({"task": task.kind(), "element": privop.element}),
        serde_json::to_value(&verdict).expect("verdicts serialize"),
    );
    match verdict {
        ReasonerVerdict::Sufficiency { sufficiency, rationale } => Ok((sufficiency, rationale)),
        _ => unreachable!("verdicts are checked against their task"),
    }
}
