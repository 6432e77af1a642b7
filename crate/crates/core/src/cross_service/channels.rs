use serde::{Deserialize, Serialize};

use super::{ChannelDiagnostic, CrossServiceError, NodeRef};
use crate::callsite::parse_call_source;
use crate::intrinsics::Intrinsic;
use crate::minisrv::ast::{BinOp, Expr, ExprKind, Item, StmtKind};
use crate::minisrv::{parse_expr_at, parse_item_at, parse_stmt_at};
use crate::model::{Channel, Direction, EdgeKind, Element, ElementKind, Program, Protocol, Service};
use crate::reasoner::{ElementView, Reasoner, ReasonerTask, ReasonerVerdict};

const EVAL_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchRule {
    Exact,
    Wildcard,
}

/// An out-channel linked to the in-channel it reaches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelEdge {
    pub from_service: String,
    pub from: Channel,
    pub to_service: String,
    pub to: Channel,
    pub match_rule: MatchRule,
}

impl ChannelEdge {
    pub fn from_node(&self) -> NodeRef {
        NodeRef::new(self.from_service.clone(), self.from.element.clone())
    }

    pub fn to_node(&self) -> NodeRef {
        NodeRef::new(self.to_service.clone(), self.to.element.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelSet {
    pub channels: Vec<Channel>,
    pub diagnostics: Vec<ChannelDiagnostic>,
}

fn callee_of(e: &Element) -> Option<String> {
    if e.kind != ElementKind::Call {
        return None;
    }
    parse_call_source(&e.source).map(|s| s.callee)
}

/// Endpoints plus `consume` call sites, in location order.
pub fn q_source(s: &Service) -> Vec<&Element> {
    s.elements()
        .iter()
        .filter(|e| {
            e.kind == ElementKind::Endpoint
                || callee_of(e).and_then(|c| Intrinsic::from_callee(&c)) == Some(Intrinsic::Consume)
        })
        .collect()
}

struct Eval<'s> {
    s: &'s Service,
}

impl Eval<'_> {
    fn expr(&self, e: &Expr, ctx: &Element, depth: usize) -> Result<String, String> {
        if depth > EVAL_DEPTH {
            return Err("definition chain too deep".into());
        }
        match &e.kind {
            ExprKind::Str(v) => Ok(v.clone()),
            ExprKind::Int(v) => Ok(v.to_string()),
            ExprKind::Binary {
                op: BinOp::Add,
                lhs,
                rhs,
            } => Ok(self.expr(lhs, ctx, depth + 1)? + &self.expr(rhs, ctx, depth + 1)?),
            ExprKind::Ident(n) => self.ident(n, ctx, depth),
            _ => Err("identifier is not a constant expression".into()),
        }
    }

    /// Resolves `name` among the dataflow definitions reaching `ctx`.
    fn ident(&self, name: &str, ctx: &Element, depth: usize) -> Result<String, String> {
        let defs: Vec<&Element> = self
            .s
            .predecessors(&ctx.id, EdgeKind::Dataflow)
            .into_iter()
            .filter(|d| d.name == name && matches!(d.kind, ElementKind::Variable | ElementKind::Parameter))
            .collect();
        if defs.is_empty() {
            return Err(format!("`{name}` has no visible definition"));
        }
        let mut value: Option<String> = None;
        for d in defs {
            if d.kind == ElementKind::Parameter {
                return Err(format!("`{name}` is a parameter"));
            }
            let v = self.definition(d, depth + 1)?;
            match &value {
                Some(prev) if *prev != v => return Err(format!("`{name}` has conflicting definitions")),
                _ => value = Some(v),
            }
        }
        Ok(value.expect("at least one definition"))
    }

    fn definition(&self, var: &Element, depth: usize) -> Result<String, String> {
        if self.s.enclosing_function(&var.id).is_none() {
            let loc = &var.location;
            let item = parse_item_at(&var.source, &loc.file, loc.line, loc.col)
                .map_err(|e| format!("cannot read `{}`: {}", var.name, e.message))?;
            return match item {
                Item::Const(c) => self.expr(&c.value, var, depth),
                Item::Fn(_) => Err(format!("`{}` is not a constant", var.name)),
            };
        }
        let stmt_el = self
            .s
            .parent(&var.id)
            .filter(|p| p.kind == ElementKind::Assignment)
            .ok_or_else(|| format!("`{}` has no assignment", var.name))?;
        let loc = &stmt_el.location;
        let stmt = parse_stmt_at(&stmt_el.source, &loc.file, loc.line, loc.col)
            .map_err(|e| format!("cannot read assignment to `{}`: {}", var.name, e.message))?;
        match stmt.kind {
            StmtKind::Assign { value, .. } => self.expr(&value, var, depth),
            _ => Err(format!("`{}` has no assignment", var.name)),
        }
    }
}

/// Constant value of the first argument of a call site, found by walking
/// definitions backwards through the dataflow facts.
pub fn channel_identifier(s: &Service, call: &Element) -> Result<String, String> {
    let shape = parse_call_source(&call.source).ok_or("not a call")?;
    let arg = shape.args.first().ok_or("call has no arguments")?;
    let loc = &call.location;
    let expr = parse_expr_at(arg, &loc.file, loc.line, loc.col).map_err(|e| e.message)?;
    let v = Eval { s }.expr(&expr, call, 0)?;
    if v.is_empty() {
        Err("identifier evaluates to an empty string".into())
    } else {
        Ok(v)
    }
}

/// Derived channels plus any channels supplied with the facts.
pub fn service_channels(s: &Service) -> ChannelSet {
    let mut set = ChannelSet::default();
    for e in s.elements() {
        if e.kind == ElementKind::Endpoint {
            set.channels.push(Channel {
                element: e.id.clone(),
                direction: Direction::In,
                protocol: Protocol::Http,
                identifier: e.name.clone(),
            });
            continue;
        }
        let Some((direction, protocol)) = callee_of(e)
            .and_then(|c| Intrinsic::from_callee(&c))
            .and_then(Intrinsic::channel)
        else {
            continue;
        };
        match channel_identifier(s, e) {
            Ok(identifier) => set.channels.push(Channel {
                element: e.id.clone(),
                direction,
                protocol,
                identifier,
            }),
            Err(reason) => set.diagnostics.push(ChannelDiagnostic::UnresolvedChannel {
                service: s.name().to_string(),
                element: e.id.clone(),
                reason,
            }),
        }
    }
    set.channels.extend(s.supplied_channels().iter().cloned());
    set.channels.sort();
    set.channels.dedup();
    set
}

pub fn q_inter(s: &Service) -> Vec<Channel> {
    service_channels(s).channels
}

/// Path part of an HTTP identifier: scheme, host and port, query and
/// fragment removed, no trailing slash.
pub fn normalize_http(id: &str) -> String {
    let mut rest = id.trim();
    if let Some(i) = rest.find("://") {
        let after = &rest[i + 3..];
        rest = after.find('/').map_or("", |j| &after[j..]);
    }
    if let Some(i) = rest.find(['?', '#']) {
        rest = &rest[..i];
    }
    let trimmed = rest.trim_end_matches('/');
    if trimmed.starts_with('/') {
        trimmed.to_string()
    } else {
        format!("/{trimmed}")
    }
}

fn is_wildcard(seg: &str) -> bool {
    (seg.starts_with('{') && seg.ends_with('}') && seg.len() > 2) || (seg.starts_with(':') && seg.len() > 1)
}

fn match_rule(out: &Channel, inn: &Channel) -> Option<MatchRule> {
    if out.protocol != inn.protocol {
        return None;
    }
    if out.protocol == Protocol::Topic {
        return (out.identifier == inn.identifier).then_some(MatchRule::Exact);
    }
    let (o, i) = (normalize_http(&out.identifier), normalize_http(&inn.identifier));
    let os: Vec<&str> = o.split('/').collect();
    let is: Vec<&str> = i.split('/').collect();
    if os.len() != is.len() {
        return None;
    }
    let mut rule = MatchRule::Exact;
    for (a, b) in os.iter().zip(&is) {
        if a == b {
            continue;
        }
        if is_wildcard(b) && !a.is_empty() {
            rule = MatchRule::Wildcard;
        } else {
            return None;
        }
    }
    Some(rule)
}

/// Links every out-channel to all matching in-channels of other services.
/// Returns the edges and all channel diagnostics (unresolved identifiers,
/// ambiguous matches), both in a stable order.
pub fn match_channels(program: &Program) -> (Vec<ChannelEdge>, Vec<ChannelDiagnostic>) {
    let sets: Vec<(&Service, ChannelSet)> = program.services.iter().map(|s| (s, service_channels(s))).collect();
    let mut edges = Vec::new();
    let mut diags = Vec::new();
    for (s, set) in &sets {
        diags.extend(set.diagnostics.iter().cloned());
        for out in set.channels.iter().filter(|c| c.direction == Direction::Out) {
            let mut hits = Vec::new();
            for (t, tset) in &sets {
                if t.name() == s.name() {
                    continue;
                }
                for inn in tset.channels.iter().filter(|c| c.direction == Direction::In) {
                    if let Some(rule) = match_rule(out, inn) {
                        hits.push(ChannelEdge {
                            from_service: s.name().to_string(),
                            from: out.clone(),
                            to_service: t.name().to_string(),
                            to: inn.clone(),
                            match_rule: rule,
                        });
                    }
                }
            }
            if hits.len() > 1 {
                diags.push(ChannelDiagnostic::AmbiguousChannel {
                    service: s.name().to_string(),
                    element: out.element.clone(),
                    identifier: out.identifier.clone(),
                    targets: hits.iter().map(ChannelEdge::to_node).collect(),
                });
            }
            edges.extend(hits);
        }
    }
    edges.sort();
    diags.sort();
    diags.dedup();
    (edges, diags)
}

/// Entry-service endpoints the gateway exposes to users, as confirmed by
/// the reasoner. Returned with the reasoner's rationale.
pub fn q_user(program: &Program, reasoner: &dyn Reasoner) -> Result<Vec<(NodeRef, String)>, CrossServiceError> {
    let entry = program.entry_service().ok_or(CrossServiceError::NoEntryService)?;
    let mut out = Vec::new();
    for e in q_source(entry).into_iter().filter(|e| e.kind == ElementKind::Endpoint) {
        let task = ReasonerTask::ConfirmUserSource {
            endpoint: ElementView::of(e),
            routes: program.manifest.gateway_routes.clone(),
        };
        if let ReasonerVerdict::UserSource {
            user_source: true,
            rationale,
        } = reasoner.reason(&task)?
        {
            out.push((NodeRef::new(entry.name(), e.id.clone()), rationale));
        }
    }
    Ok(out)
}
