//! Scan reports: the JSON document (schema 1) and its Markdown rendering.
//! Markdown is always produced from the JSON value, never from the scan.

mod markdown;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cross_service::{ChannelDiagnostic, GlobalPath, MatchRule, NodeRef};
use crate::model::{ElementId, ElementKind, Location, Protocol};
use crate::pipeline::{CheckFinding, PrivilegedOperation, Snippet};
use crate::reasoner::{PrivCategory, Sufficiency};

pub use markdown::{render_markdown, render_markdown_value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Md,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub tool: String,
    pub reasoner: String,
    pub options: ReportOptions,
    pub program: ProgramSummary,
    pub privileged_operations: Vec<PrivilegedOperation>,
    pub diagnostics: Vec<ChannelDiagnostic>,
    pub funnel: Funnel,
    /// Every flow considered, sorted by path id.
    pub flows: Vec<FlowRecord>,
    /// Sorted by (service, file, line, path id).
    pub findings: Vec<Finding>,
    pub budget: BudgetUsage,
    pub trace: TraceSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub basic_sink: bool,
    pub no_odctx: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSummary {
    pub services: Vec<ServiceSummary>,
    pub elements: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSummary {
    pub name: String,
    pub entry: bool,
    pub elements: usize,
    pub edges: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub initial: usize,
    pub constraint_pruned: usize,
    pub protected_dropped: usize,
    pub budget_truncated: usize,
    #[serde(rename = "final")]
    pub final_: usize,
}

impl Funnel {
    /// initial = pruned + protected + final + truncated
    pub fn conserved(&self) -> bool {
        self.initial == self.constraint_pruned + self.protected_dropped + self.final_ + self.budget_truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowOutcome {
    ConstraintPruned,
    ProtectedDropped,
    Finding,
    BudgetTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    Feasible,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub path_id: String,
    pub source: NodeRef,
    pub sink: NodeRef,
    pub outcome: FlowOutcome,
    /// Rendered path constraint, when one was extracted.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub constraint: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "hop", rename_all = "snake_case")]
pub enum Hop {
    Element {
        service: String,
        element: ElementId,
        kind: ElementKind,
        location: Location,
        source: String,
    },
    Channel {
        protocol: Protocol,
        identifier: String,
        from_service: String,
        to_service: String,
        endpoint: String,
        match_rule: MatchRule,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: String,
    pub service: String,
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub verdict: Sufficiency,
    pub category: PrivCategory,
    pub feasibility: Feasibility,
    pub rationale: String,
    pub privop: PrivilegedOperation,
    pub checks: Vec<CheckFinding>,
    pub hops: Vec<Hop>,
    pub path: GlobalPath,
    pub evidence: Vec<Snippet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetUsage {
    pub max_calls_per_phase: u32,
    pub wall_clock_seconds: u64,
    pub max_flows: usize,
    pub calls: BTreeMap<String, u32>,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub events: usize,
    pub tools: BTreeMap<String, usize>,
}

/// Process exit status for a finished scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Clean = 0,
    Findings = 1,
    Error = 2,
    BudgetExhausted = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl Report {
    pub fn exit_status(&self) -> ExitStatus {
        if self.budget.exhausted {
            ExitStatus::BudgetExhausted
        } else if self.findings.is_empty() {
            ExitStatus::Clean
        } else {
            ExitStatus::Findings
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Report, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Md => render_markdown(self),
        }
    }
}
