use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One tool invocation. `t_ms` is the only field that varies between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ms: u64,
    pub phase: String,
    pub tool: String,
    pub args: Value,
    pub result: Value,
}

/// Per-scan audit log, written as JSON lines with `--trace`.
#[derive(Debug, Clone)]
pub struct Trace {
    start: Instant,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Trace {
        Trace::starting_at(Instant::now())
    }

    pub(crate) fn starting_at(start: Instant) -> Trace {
        Trace {
            start,
            events: Vec::new(),
        }
    }

    /// A log for work done elsewhere (a worker thread) sharing this clock.
    pub(crate) fn fork(&self) -> Trace {
        Trace::starting_at(self.start)
    }

    pub(crate) fn absorb(&mut self, other: Trace) {
        self.events.extend(other.events);
    }

    pub fn record(&mut self, phase: &str, tool: &str, args: Value, result: Value) {
        self.events.push(TraceEvent {
            t_ms: self.start.elapsed().as_millis() as u64,
            phase: phase.into(),
            tool: tool.into(),
            args,
            result,
        });
    }

    pub fn count_by_tool(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.events {
            *m.entry(e.tool.clone()).or_default() += 1;
        }
        m
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }
}

impl Default for Trace {
    fn default() -> Self {
        Trace::new()
    }
}
