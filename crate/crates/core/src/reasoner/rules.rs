use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PrivCategory;

/// The rules file shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("../../rules/oracle.rules.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SufficiencyRules {
    /// An ownership comparison on the path protects any resource argument.
    pub ownership_sufficient: bool,
    /// Authz checks must mention each resource argument by name.
    pub require_argument_reference: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    version: u32,
    verbs: BTreeMap<String, PrivCategory>,
    resource_nouns: Vec<String>,
    credential_keywords: Vec<String>,
    check_name_patterns: Vec<String>,
    ownership_patterns: Vec<String>,
    role_keywords: Vec<String>,
    permission_keywords: Vec<String>,
    sufficiency: SufficiencyRules,
}

/// Validated keyword lists and compiled patterns.
#[derive(Debug, Clone)]
pub struct OracleRules {
    pub verbs: BTreeMap<String, PrivCategory>,
    pub resource_nouns: Vec<String>,
    pub credential_keywords: Vec<String>,
    pub check_name_patterns: Vec<Regex>,
    pub ownership_patterns: Vec<Regex>,
    pub role_keywords: Vec<String>,
    pub permission_keywords: Vec<String>,
    pub sufficiency: SufficiencyRules,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RulesError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for RulesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rules: {}: {}", self.field, self.reason)
    }
}

impl std::error::Error for RulesError {}

fn err(field: &str, reason: impl Into<String>) -> RulesError {
    RulesError {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn words(field: &str, list: Vec<String>) -> Result<Vec<String>, RulesError> {
    if list.is_empty() {
        return Err(err(field, "must not be empty"));
    }
    if let Some(i) = list.iter().position(|w| w.trim().is_empty()) {
        return Err(err(&format!("{field}[{i}]"), "empty keyword"));
    }
    Ok(list.into_iter().map(|w| w.to_lowercase()).collect())
}

fn patterns(field: &str, list: &[String]) -> Result<Vec<Regex>, RulesError> {
    if list.is_empty() {
        return Err(err(field, "must not be empty"));
    }
    list.iter()
        .enumerate()
        .map(|(i, p)| Regex::new(p).map_err(|e| err(&format!("{field}[{i}]"), e.to_string())))
        .collect()
}

impl OracleRules {
    pub fn parse(text: &str) -> Result<OracleRules, RulesError> {
        let f: RulesFile = serde_json::from_str(text).map_err(|e| err("file", e.to_string()))?;
        if f.version != 1 {
            return Err(err("version", format!("unsupported version {}", f.version)));
        }
        if f.verbs.is_empty() {
            return Err(err("verbs", "must not be empty"));
        }
        if f.verbs.keys().any(|v| v.trim().is_empty()) {
            return Err(err("verbs", "empty keyword"));
        }
        Ok(OracleRules {
            verbs: f.verbs.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
            resource_nouns: words("resource_nouns", f.resource_nouns)?,
            credential_keywords: words("credential_keywords", f.credential_keywords)?,
            check_name_patterns: patterns("check_name_patterns", &f.check_name_patterns)?,
            ownership_patterns: patterns("ownership_patterns", &f.ownership_patterns)?,
            role_keywords: words("role_keywords", f.role_keywords)?,
            permission_keywords: words("permission_keywords", f.permission_keywords)?,
            sufficiency: f.sufficiency,
        })
    }

    pub fn defaults() -> OracleRules {
        OracleRules::parse(DEFAULT_RULES).expect("shipped rules are valid")
    }

    pub fn is_check_name(&self, name: &str) -> bool {
        self.check_name_patterns.iter().any(|p| p.is_match(name))
    }

    pub fn has_ownership_pattern(&self, text: &str) -> bool {
        self.ownership_patterns.iter().any(|p| p.is_match(text))
    }
}

pub fn load_rules(file: &Path) -> Result<OracleRules, RulesError> {
    let text = std::fs::read_to_string(file).map_err(|e| err("file", format!("{}: {e}", file.display())))?;
    OracleRules::parse(&text)
}
