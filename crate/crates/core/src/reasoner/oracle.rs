use std::collections::BTreeSet;

use super::rules::OracleRules;
use super::{
    AuthzSubtype, CgDirectionArg, CheckClass, CheckView, ConstraintAnswer, ElementView, NameModeArg, PrivCategory,
    Reasoner, ReasonerError, ReasonerTask, ReasonerVerdict, SearchAction, SearchState, Sufficiency,
};
use crate::callsite::{contains_word, name_tokens, parse_call_source};
use crate::constraints::translate_guards;
use crate::facts::GatewayRoute;
use crate::intrinsics::Intrinsic;
use crate::model::ElementKind;

/// Deterministic stand-in for model judgment: a pure function of the rules
/// and the task.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    rules: OracleRules,
}

impl Default for ScriptedOracle {
    fn default() -> Self {
        ScriptedOracle::new(OracleRules::defaults())
    }
}

/// Standard sink classification used in every mode (and alone under
/// `--basic-sink`). `None` for anything that is not a baseline sink.
pub fn baseline_sink(rules: &OracleRules, source: &str) -> Option<(PrivCategory, String)> {
    let shape = parse_call_source(source)?;
    let intr = Intrinsic::from_callee(&shape.callee)?;
    match intr {
        Intrinsic::DbWrite => Some((
            PrivCategory::SecurityCriticalAction,
            "db.write persists state and is a standard sink".into(),
        )),
        Intrinsic::Exec => Some((
            PrivCategory::SecurityCriticalAction,
            "exec runs a command and is a standard sink".into(),
        )),
        Intrinsic::HttpPost | Intrinsic::HttpGet => {
            let args = shape.args.join(" ").to_lowercase();
            let hit = rules.credential_keywords.iter().find(|k| args.contains(k.as_str()))?;
            Some((
                PrivCategory::SensitiveResource,
                format!("outbound {} carries credential material (`{hit}`)", shape.callee),
            ))
        }
        _ => None,
    }
}

/// Identifiers appearing in `text` outside string literals.
fn code_identifiers(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_str: Option<char> = None;
    for c in text.chars() {
        if let Some(q) = in_str {
            if c == q {
                in_str = None;
            }
            continue;
        }
        if c == '"' || c == '\'' {
            in_str = Some(c);
        }
        if c.is_alphanumeric() || c == '_' {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out.retain(|w| !w.starts_with(|c: char| c.is_ascii_digit()));
    out
}

/// Does `path` start with `prefix` on a segment boundary?
pub(crate) fn route_prefix_matches(prefix: &str, path: &str) -> bool {
    let prefix = prefix.trim_end_matches('/');
    if prefix.is_empty() {
        return true;
    }
    match path.strip_prefix(prefix) {
        Some(rest) => rest.is_empty() || rest.starts_with('/'),
        None => false,
    }
}

const STOP_TOKENS: [&str; 6] = ["get", "the", "for", "and", "new", "all"];

impl ScriptedOracle {
    pub fn new(rules: OracleRules) -> ScriptedOracle {
        ScriptedOracle { rules }
    }

    pub fn rules(&self) -> &OracleRules {
        &self.rules
    }

    fn verb_pattern(&self) -> String {
        let verbs: Vec<&str> = self.rules.verbs.keys().map(String::as_str).collect();
        format!("(?i).*({}).*", verbs.join("|"))
    }

    fn classify_privileged(&self, e: &ElementView) -> ReasonerVerdict {
        let none = |why: String| ReasonerVerdict::PrivilegedClass {
            category: None,
            rationale: why,
        };
        if e.kind != ElementKind::Call {
            return none(format!("{} is a {}, not a call site", e.id, e.kind));
        }
        let Some(shape) = parse_call_source(&e.source) else {
            return none(format!("cannot read a call shape from `{}`", e.source));
        };
        if Intrinsic::from_callee(&shape.callee).is_some() {
            return match baseline_sink(&self.rules, &e.source) {
                Some((category, why)) => ReasonerVerdict::PrivilegedClass {
                    category: Some(category),
                    rationale: why,
                },
                None => none(format!("{} is a built-in that is not a sink", shape.callee)),
            };
        }
        if self.rules.is_check_name(&shape.method) {
            return none(format!("`{}` names a check, not an operation", shape.method));
        }
        let tokens = name_tokens(&shape.method);
        let verb = tokens
            .iter()
            .find(|t| self.rules.verbs.contains_key(t.as_str()))
            .cloned()
            .or_else(|| {
                let whole = shape.method.to_lowercase();
                self.rules.verbs.contains_key(&whole).then_some(whole)
            });
        let Some(verb) = verb else {
            return none(format!("`{}` performs no privileged action", shape.method));
        };
        let source_tokens: BTreeSet<String> = name_tokens(&e.source).into_iter().collect();
        let noun = self
            .rules
            .resource_nouns
            .iter()
            .find(|n| source_tokens.contains(n.as_str()));
        match noun {
            Some(noun) => {
                let category = self.rules.verbs[&verb];
                ReasonerVerdict::PrivilegedClass {
                    category: Some(category),
                    rationale: format!(
                        "`{}` applies `{verb}` to a protected resource (`{noun}`): {category}",
                        shape.callee
                    ),
                }
            }
            None => none(format!(
                "`{}` has an action verb (`{verb}`) but touches no protected resource",
                shape.callee
            )),
        }
    }

    fn classify_check(&self, e: &ElementView, context: &str) -> ReasonerVerdict {
        let text = format!("{}\n{}", e.source, context);
        let tokens: BTreeSet<String> = name_tokens(&text).into_iter().collect();
        let hit = |list: &[String]| list.iter().find(|k| tokens.contains(k.as_str())).cloned();
        let (classification, authz_subtype, rationale) = if self.rules.has_ownership_pattern(&text) {
            (
                CheckClass::Authz,
                AuthzSubtype::Ownership,
                "compares the resource owner with the current user".to_string(),
            )
        } else if let Some(k) = hit(&self.rules.role_keywords) {
            (
                CheckClass::Authz,
                AuthzSubtype::Role,
                format!("decides on the caller's role (`{k}`)"),
            )
        } else if let Some(k) = hit(&self.rules.permission_keywords) {
            (
                CheckClass::Authz,
                AuthzSubtype::Permission,
                format!("decides on a permission (`{k}`)"),
            )
        } else {
            (
                CheckClass::Authn,
                AuthzSubtype::None,
                "only establishes who the caller is".to_string(),
            )
        };
        ReasonerVerdict::CheckClass {
            classification,
            authz_subtype,
            rationale: format!("check at {}: {rationale}", e.location),
        }
    }

    /// Identifier arguments of the operation that name a protected resource.
    fn resource_args(&self, privop: &ElementView) -> Vec<String> {
        let Some(shape) = parse_call_source(&privop.source) else {
            return Vec::new();
        };
        let mut out: Vec<String> = Vec::new();
        for arg in &shape.args {
            for id in code_identifiers(arg) {
                let named = name_tokens(&id).iter().any(|t| self.rules.resource_nouns.contains(t));
                if named && !out.contains(&id) {
                    out.push(id);
                }
            }
        }
        out
    }

    fn assess(&self, privop: &ElementView, checks: &[CheckView]) -> ReasonerVerdict {
        let verdict = |v: Sufficiency, r: String| ReasonerVerdict::Sufficiency {
            sufficiency: v,
            rationale: r,
        };
        let op = parse_call_source(&privop.source)
            .map(|s| s.callee)
            .unwrap_or_else(|| privop.source.clone());
        if checks.is_empty() {
            return verdict(
                Sufficiency::Unprotected,
                format!("no authentication or authorization check guards `{op}`"),
            );
        }
        let args = self.resource_args(privop);
        let authz: Vec<&CheckView> = checks
            .iter()
            .filter(|c| c.classification == CheckClass::Authz)
            .collect();
        if authz.is_empty() {
            let target = if args.is_empty() {
                "the affected resource".to_string()
            } else {
                format!("`{}`", args.join("`, `"))
            };
            return verdict(
                Sufficiency::MissingAuthz,
                format!(
                    "`{op}` is guarded by authentication only; no authorization or ownership check ties the caller to {target}"
                ),
            );
        }
        if args.is_empty() {
            return verdict(
                Sufficiency::Protected,
                format!("`{op}` takes no resource argument and an authorization check is present"),
            );
        }
        let suff = &self.rules.sufficiency;
        if suff.ownership_sufficient {
            if let Some(c) = authz.iter().find(|c| c.authz_subtype == AuthzSubtype::Ownership) {
                return verdict(
                    Sufficiency::Protected,
                    format!("ownership check at {} covers `{op}`", c.element.location),
                );
            }
        }
        if !suff.require_argument_reference {
            return verdict(
                Sufficiency::Protected,
                format!("authorization check present for `{op}`"),
            );
        }
        let unreferenced: Vec<&String> = args
            .iter()
            .filter(|a| {
                !authz
                    .iter()
                    .any(|c| contains_word(&c.element.source, a) || contains_word(&c.context, a))
            })
            .collect();
        if unreferenced.is_empty() {
            return verdict(
                Sufficiency::Protected,
                format!(
                    "authorization checks on the path validate `{}` for `{op}`",
                    args.join("`, `")
                ),
            );
        }
        let names: Vec<String> = authz
            .iter()
            .map(|c| {
                if c.element.kind == ElementKind::Decorator {
                    format!("`{}`", c.element.source.trim())
                } else if c.element.name.is_empty() {
                    c.element.location.to_string()
                } else {
                    format!("`{}`", c.element.name)
                }
            })
            .collect();
        verdict(
            Sufficiency::InsufficientAuthz,
            format!(
                "authorization check(s) {} never examine `{}`; the caller can pick any value for `{op}`",
                names.join(", "),
                unreferenced.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("`, `")
            ),
        )
    }

    fn confirm_user_source(&self, endpoint: &ElementView, routes: &[GatewayRoute]) -> ReasonerVerdict {
        match routes.iter().find(|r| route_prefix_matches(&r.prefix, &endpoint.name)) {
            Some(r) => ReasonerVerdict::UserSource {
                user_source: true,
                rationale: format!("gateway route `{}` exposes `{}`", r.prefix, endpoint.name),
            },
            None => ReasonerVerdict::UserSource {
                user_source: false,
                rationale: format!("no gateway route exposes `{}`", endpoint.name),
            },
        }
    }

    fn plan(&self, state: &SearchState) -> Vec<SearchAction> {
        let mut plan = Vec::new();
        if state.round <= 1 {
            let pattern = self.verb_pattern();
            for s in &state.services {
                plan.push(SearchAction::QName {
                    service: s.clone(),
                    pattern: pattern.clone(),
                    mode: NameModeArg::Regex,
                });
                plan.push(SearchAction::QAst {
                    service: s.clone(),
                    kind: ElementKind::Call,
                });
            }
        } else {
            let mut tokens = BTreeSet::new();
            for callee in &state.discovered {
                let method = callee.rsplit('.').next().unwrap_or(callee);
                for t in name_tokens(method) {
                    if t.len() >= 3 && !STOP_TOKENS.contains(&t.as_str()) {
                        tokens.insert(regex::escape(&t));
                    }
                }
            }
            if !tokens.is_empty() {
                let pattern = format!("(?i).*({}).*", tokens.into_iter().collect::<Vec<_>>().join("|"));
                for s in &state.services {
                    plan.push(SearchAction::QName {
                        service: s.clone(),
                        pattern: pattern.clone(),
                        mode: NameModeArg::Regex,
                    });
                }
            }
        }
        for (service, function) in &state.name_hits {
            plan.push(SearchAction::QCg {
                service: service.clone(),
                function: function.clone(),
                direction: CgDirectionArg::Callers,
                depth: 1,
            });
        }
        plan
    }

    fn next_action(&self, state: &SearchState) -> ReasonerVerdict {
        let next = self.plan(state).into_iter().find(|a| !state.done.contains(a));
        match next {
            Some(action) => {
                let rationale = match &action {
                    SearchAction::QName { service, .. } => {
                        format!("look for operation-like names in {service}")
                    }
                    SearchAction::QAst { service, .. } => format!("enumerate call sites in {service}"),
                    SearchAction::QCg { function, .. } => format!("find call sites of `{function}`"),
                    SearchAction::Finish => unreachable!("plans never contain finish"),
                };
                ReasonerVerdict::Action { action, rationale }
            }
            None => ReasonerVerdict::Action {
                action: SearchAction::Finish,
                rationale: format!("round {} searches exhausted", state.round.max(1)),
            },
        }
    }
}

impl Reasoner for ScriptedOracle {
    fn name(&self) -> &str {
        "scripted"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn reason(&self, task: &ReasonerTask) -> Result<ReasonerVerdict, ReasonerError> {
        Ok(match task {
            ReasonerTask::ClassifyPrivileged { element } => self.classify_privileged(element),
            ReasonerTask::ClassifyCheck { element, context } => self.classify_check(element, context),
            ReasonerTask::AssessSufficiency { privop, checks, .. } => self.assess(privop, checks),
            ReasonerTask::ExtractConstraints { guards, .. } => {
                let answer = translate_guards(guards);
                let rationale = match &answer {
                    ConstraintAnswer::Predicates { constraint } => {
                        format!("{} guard(s) translated: {}", guards.len(), constraint.formula)
                    }
                    ConstraintAnswer::Skipped { reason } => format!("conservatively skipped: {reason}"),
                };
                ReasonerVerdict::Constraints { answer, rationale }
            }
            ReasonerTask::ConfirmUserSource { endpoint, routes } => self.confirm_user_source(endpoint, routes),
            ReasonerTask::NextSearchAction { state } => self.next_action(state),
        })
    }
}
