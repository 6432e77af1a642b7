//! Semantic judgments behind one closed task set. Two backends: the
//! rules-driven [`ScriptedOracle`] and the chat-completion [`RemoteReasoner`].

mod oracle;
mod remote;
mod rules;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{GuardView, PathConstraint};
use crate::facts::GatewayRoute;
use crate::model::{Element, ElementId, ElementKind, Location};

pub use oracle::{baseline_sink, ScriptedOracle};
pub use remote::{RemoteConfig, RemoteReasoner, API_KEY_ENV};
pub use rules::{load_rules, OracleRules, RulesError, SufficiencyRules, DEFAULT_RULES};

/// Serialized snapshot of an element. Tasks never carry live references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementView {
    pub id: ElementId,
    pub service: String,
    pub kind: ElementKind,
    pub name: String,
    pub location: Location,
    pub source: String,
}

impl ElementView {
    pub fn of(e: &Element) -> ElementView {
        ElementView {
            id: e.id.clone(),
            service: e.service.clone(),
            kind: e.kind,
            name: e.name.clone(),
            location: e.location.clone(),
            source: e.source.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivCategory {
    SensitiveResource,
    SecurityCriticalAction,
    ProtectedState,
}

impl PrivCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            PrivCategory::SensitiveResource => "sensitive-resource",
            PrivCategory::SecurityCriticalAction => "security-critical-action",
            PrivCategory::ProtectedState => "protected-state",
        }
    }
}

impl fmt::Display for PrivCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckClass {
    Authn,
    Authz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthzSubtype {
    Role,
    Permission,
    Ownership,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attachment {
    Decorator,
    Middleware,
    Inline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sufficiency {
    Protected,
    Unprotected,
    MissingAuthz,
    InsufficientAuthz,
}

impl Sufficiency {
    pub fn as_str(self) -> &'static str {
        match self {
            Sufficiency::Protected => "protected",
            Sufficiency::Unprotected => "unprotected",
            Sufficiency::MissingAuthz => "missing_authz",
            Sufficiency::InsufficientAuthz => "insufficient_authz",
        }
    }
}

/// A located, classified check as presented to AssessSufficiency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckView {
    pub element: ElementView,
    pub classification: CheckClass,
    pub authz_subtype: AuthzSubtype,
    pub attachment: Attachment,
    /// Retrieved implementation text (check source plus followed callees).
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "answer", rename_all = "snake_case")]
pub enum ConstraintAnswer {
    Predicates { constraint: PathConstraint },
    Skipped { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NameModeArg {
    Exact,
    Regex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CgDirectionArg {
    Callers,
    Callees,
}

/// A code-search call proposed by the reasoner.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum SearchAction {
    QName {
        service: String,
        pattern: String,
        mode: NameModeArg,
    },
    QAst {
        service: String,
        kind: ElementKind,
    },
    QCg {
        service: String,
        function: String,
        direction: CgDirectionArg,
        depth: u32,
    },
    Finish,
}

/// What the search loop has seen so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SearchState {
    pub round: u32,
    pub services: Vec<String>,
    pub done: Vec<SearchAction>,
    /// `(service, function name)` pairs returned by name searches.
    pub name_hits: Vec<(String, String)>,
    /// Callee texts of privileged operations found so far.
    pub discovered: Vec<String>,
    pub tools: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ReasonerTask {
    ClassifyPrivileged {
        element: ElementView,
    },
    ClassifyCheck {
        element: ElementView,
        context: String,
    },
    AssessSufficiency {
        privop: ElementView,
        category: PrivCategory,
        checks: Vec<CheckView>,
        contexts: Vec<String>,
    },
    ExtractConstraints {
        path: Vec<ElementView>,
        guards: Vec<GuardView>,
    },
    ConfirmUserSource {
        endpoint: ElementView,
        routes: Vec<GatewayRoute>,
    },
    NextSearchAction {
        state: SearchState,
    },
}

impl ReasonerTask {
    pub fn kind(&self) -> &'static str {
        match self {
            ReasonerTask::ClassifyPrivileged { .. } => "classify_privileged",
            ReasonerTask::ClassifyCheck { .. } => "classify_check",
            ReasonerTask::AssessSufficiency { .. } => "assess_sufficiency",
            ReasonerTask::ExtractConstraints { .. } => "extract_constraints",
            ReasonerTask::ConfirmUserSource { .. } => "confirm_user_source",
            ReasonerTask::NextSearchAction { .. } => "next_search_action",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ReasonerVerdict {
    PrivilegedClass {
        category: Option<PrivCategory>,
        rationale: String,
    },
    CheckClass {
        classification: CheckClass,
        authz_subtype: AuthzSubtype,
        rationale: String,
    },
    Sufficiency {
        sufficiency: Sufficiency,
        rationale: String,
    },
    Constraints {
        answer: ConstraintAnswer,
        rationale: String,
    },
    UserSource {
        user_source: bool,
        rationale: String,
    },
    Action {
        action: SearchAction,
        rationale: String,
    },
}

impl ReasonerVerdict {
    pub fn rationale(&self) -> &str {
        match self {
            ReasonerVerdict::PrivilegedClass { rationale, .. }
            | ReasonerVerdict::CheckClass { rationale, .. }
            | ReasonerVerdict::Sufficiency { rationale, .. }
            | ReasonerVerdict::Constraints { rationale, .. }
            | ReasonerVerdict::UserSource { rationale, .. }
            | ReasonerVerdict::Action { rationale, .. } => rationale,
        }
    }

    /// Does this verdict answer `task`, and does it satisfy the verdict
    /// invariants (non-empty rationale, authn carries no subtype)?
    pub fn check_against(&self, task: &ReasonerTask) -> Result<(), String> {
        if self.rationale().trim().is_empty() {
            return Err("empty rationale".into());
        }
        let ok = matches!(
            (task, self),
            (
                ReasonerTask::ClassifyPrivileged { .. },
                ReasonerVerdict::PrivilegedClass { .. }
            ) | (ReasonerTask::ClassifyCheck { .. }, ReasonerVerdict::CheckClass { .. })
                | (
                    ReasonerTask::AssessSufficiency { .. },
                    ReasonerVerdict::Sufficiency { .. }
                )
                | (
                    ReasonerTask::ExtractConstraints { .. },
                    ReasonerVerdict::Constraints { .. }
                )
                | (
                    ReasonerTask::ConfirmUserSource { .. },
                    ReasonerVerdict::UserSource { .. }
                )
                | (ReasonerTask::NextSearchAction { .. }, ReasonerVerdict::Action { .. })
        );
        if !ok {
            return Err(format!("verdict does not answer a {} task", task.kind()));
        }
        if let ReasonerVerdict::CheckClass {
            classification,
            authz_subtype,
            ..
        } = self
        {
            if (*classification == CheckClass::Authn) != (*authz_subtype == AuthzSubtype::None) {
                return Err("authz_subtype must be none exactly for authn checks".into());
            }
        }
        if let ReasonerVerdict::Constraints {
            answer: ConstraintAnswer::Predicates { constraint },
            ..
        } = self
        {
            constraint.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReasonerError {
    #[error("reasoner backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("reasoner reply violates the response schema after {attempts} attempts: {detail}")]
    SchemaViolation { attempts: u32, detail: String },
}

pub trait Reasoner: Send + Sync {
    fn name(&self) -> &str;

    /// Deterministic backends may be called concurrently and in any order.
    fn deterministic(&self) -> bool;

    fn reason(&self, task: &ReasonerTask) -> Result<ReasonerVerdict, ReasonerError>;
}
