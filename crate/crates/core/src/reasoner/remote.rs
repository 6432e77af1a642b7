use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Reasoner, ReasonerError, ReasonerTask, ReasonerVerdict};

pub const API_KEY_ENV: &str = "PRIVFLOW_API_KEY";

const SYSTEM_PROMPT: &str = include_str!("../../prompts/system.md");
const EXAMPLES: [&str; 2] = [
    include_str!("../../prompts/example_1.md"),
    include_str!("../../prompts/example_2.md"),
];
const TASK_TEMPLATE: &str = include_str!("../../prompts/task.md");

const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `http://localhost:8000/v1`.
    pub url: String,
    pub model: String,
    pub temperature: f64,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    /// Config with the API key taken from `PRIVFLOW_API_KEY`, if set.
    pub fn from_env(url: &str, model: &str, temperature: f64) -> RemoteConfig {
        RemoteConfig {
            url: url.to_string(),
            model: model.to_string(),
            temperature,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Chat-completion backend. Requests are serialized.
pub struct RemoteReasoner {
    config: RemoteConfig,
    agent: ureq::Agent,
    lock: Mutex<()>,
}

fn render_task(task: &ReasonerTask) -> String {
    let body = serde_json::to_string_pretty(task).expect("tasks serialize");
    TASK_TEMPLATE
        .replace("{{kind}}", task.kind())
        .replace("{{task}}", &body)
}

/// Pulls the first JSON object out of a reply, tolerating code fences and
/// surrounding prose.
fn extract_json(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (end > start).then(|| &reply[start..=end])
}

pub(crate) fn parse_reply(task: &ReasonerTask, reply: &str) -> Result<ReasonerVerdict, String> {
    let text = extract_json(reply).ok_or("reply contains no JSON object")?;
    let verdict: ReasonerVerdict = serde_json::from_str(text).map_err(|e| e.to_string())?;
    verdict.check_against(task)?;
    Ok(verdict)
}

impl RemoteReasoner {
    pub fn new(config: RemoteConfig) -> RemoteReasoner {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        RemoteReasoner {
            config,
            agent,
            lock: Mutex::new(()),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn messages(task: &ReasonerTask, retry_note: Option<&str>) -> Vec<Value> {
        let mut msgs = vec![json!({"role": "system", "content": SYSTEM_PROMPT})];
        for ex in EXAMPLES {
            let (q, a) = ex.split_once("\nReply:\n").expect("examples have a Reply section");
            msgs.push(json!({"role": "user", "content": q.trim()}));
            msgs.push(json!({"role": "assistant", "content": a.trim()}));
        }
        msgs.push(json!({"role": "user", "content": render_task(task)}));
        if let Some(note) = retry_note {
            msgs.push(json!({
                "role": "user",
                "content": format!("Your previous reply was rejected: {note}. Reply again with one valid JSON object."),
            }));
        }
        msgs
    }

    fn complete(&self, messages: Vec<Value>) -> Result<String, ReasonerError> {
        let url = format!("{}/chat/completions", self.config.url.trim_end_matches('/'));
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| ReasonerError::BackendUnavailable(format!("{url}: {e}")))?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ReasonerError::BackendUnavailable(format!("{url}: unreadable response: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ReasonerError::BackendUnavailable(format!("{url}: response has no message content")))
    }
}

impl Reasoner for RemoteReasoner {
    fn name(&self) -> &str {
        "remote"
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn reason(&self, task: &ReasonerTask) -> Result<ReasonerVerdict, ReasonerError> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut last = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            let note = (attempt > 0).then_some(last.as_str());
            let reply = self.complete(Self::messages(task, note))?;
            match parse_reply(task, &reply) {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
        }
        Err(ReasonerError::SchemaViolation {
            attempts: MAX_ATTEMPTS,
            detail: last,
        })
    }
}
