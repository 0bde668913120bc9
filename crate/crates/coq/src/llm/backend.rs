//! Backends behind the gateway: live HTTP, deterministic replay from
//! recordings, a scripted stand-in for tests, and a recording wrapper.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CoqError, Result};
use crate::llm::{LlmExchange, RoleTag};

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, role: RoleTag, prompt: &str) -> Result<String>;
}

/// Replay key: SHA-256 over the role tag and the prompt with whitespace
/// runs collapsed, so incidental formatting differences in embedded table
/// content do not break matching.
pub fn replay_key(role: RoleTag, prompt: &str) -> String {
    let mut normalized = String::with_capacity(prompt.len());
    let mut last_space = false;
    for ch in prompt.trim().chars() {
        if ch.is_whitespace() {
            if !last_space {
                normalized.push(' ');
                last_space = true;
            }
        } else {
            normalized.push(ch);
            last_space = false;
        }
    }
    let mut hasher = Sha256::new();
    hasher.update(role.as_str().as_bytes());
    hasher.update(b"\n");
    hasher.update(normalized.as_bytes());
    hex::encode(hasher.finalize())
}

/// Returns recorded responses keyed by (role, normalized prompt).
pub struct ReplayBackend {
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    /// Load a JSON-lines recording (one [`LlmExchange`] per line). Later
    /// recordings of an identical prompt overwrite earlier ones; under
    /// deterministic decoding they carry the same response.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut responses = HashMap::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let exchange: LlmExchange = serde_json::from_str(&line).map_err(|e| {
                CoqError::MalformedInput(format!("bad recording line: {e}"))
            })?;
            responses.insert(
                replay_key(exchange.role_tag, &exchange.prompt),
                exchange.response,
            );
        }
        Ok(ReplayBackend { responses })
    }

    pub fn from_exchanges(exchanges: &[LlmExchange]) -> Self {
        let responses = exchanges
            .iter()
            .map(|e| (replay_key(e.role_tag, &e.prompt), e.response.clone()))
            .collect();
        ReplayBackend { responses }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl LlmBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, role: RoleTag, prompt: &str) -> Result<String> {
        let key = replay_key(role, prompt);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| CoqError::ReplayMiss {
                role: role.as_str().to_string(),
                key,
            })
    }
}

type ScriptRule = Box<dyn Fn(RoleTag, &str) -> Option<String> + Send + Sync>;

/// Rule-driven backend for tests and offline smoke runs. Rules are tried in
/// order; the first one returning a response wins.
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend { rules }
    }

    /// A deterministic rule set that answers every prompt from its own
    /// content: identity decomposition, select-all query completion,
    /// immediate sufficiency, and result-passthrough answers.
    pub fn heuristic() -> Self {
        ScriptedBackend::new(vec![Box::new(heuristic_rule)])
    }
}

/// Pull the text of the block introduced by `marker` (up to the next blank
/// line) out of a rendered prompt.
fn prompt_section(prompt: &str, marker: &str) -> Option<String> {
    let start = prompt.rfind(marker)? + marker.len();
    let rest = &prompt[start..];
    let end = rest.find("\n\n").unwrap_or(rest.len());
    let text = rest[..end].trim();
    if text.is_empty() {
        None
    } else {
        Some(text.to_string())
    }
}

fn heuristic_rule(role: RoleTag, prompt: &str) -> Option<String> {
    match role {
        RoleTag::Decompose => {
            let question = prompt_section(prompt, "Question:\n")?;
            Some(format!(
                "Analysis:\n**single scope**\nSubquestions:\n```python\nsubquestions = [\n    {question:?},\n]\n```"
            ))
        }
        RoleTag::ClauseSelectFrom => {
            let skeleton = prompt_section(prompt, "Incomplete SQLite query:\n")?;
            let headers = prompt_section(prompt, "Headers: ")?;
            let columns: Vec<String> = headers
                .split("), (")
                .filter_map(|pair| {
                    let name = pair.trim_start_matches('(').split(',').next()?.trim();
                    if name.is_empty() {
                        None
                    } else {
                        Some(format!("\"{name}\""))
                    }
                })
                .collect();
            let filled = if columns.is_empty() {
                skeleton.replace("()", "*")
            } else {
                skeleton.replace("()", &columns.join(", "))
            };
            Some(format!("Analysis:\n**all columns**\nSQL:\n```sql\n{filled}\n```"))
        }
        RoleTag::PlanSufficient => Some("Analysis:\n**raw rows suffice**\nDecision:\nYes".into()),
        RoleTag::PlanWhereNeeded
        | RoleTag::PlanWithAsNeeded
        | RoleTag::PlanAggNeeded
        | RoleTag::PlanOrderByNeeded => Some("Analysis:\n**not needed**\nDecision:\nNo".into()),
        RoleTag::SubAnswer => {
            let result = prompt_section(prompt, "Execution result:\n");
            let answer = result
                .as_deref()
                .and_then(|r| r.lines().nth(1))
                .and_then(|row| row.split('|').next())
                .unwrap_or("unknown")
                .to_string();
            Some(format!("Analysis:\n**first value**\nAnswer:\n{answer}"))
        }
        RoleTag::FinalAnswer => {
            let subanswers = prompt_section(prompt, "Subanswers:\n")?;
            let joined = subanswers
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join("; ");
            Some(format!("Analysis:\n**combine**\nAnswer:\n{joined}"))
        }
        _ => None,
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, role: RoleTag, prompt: &str) -> Result<String> {
        for rule in &self.rules {
            if let Some(response) = rule(role, prompt) {
                return Ok(response);
            }
        }
        Err(CoqError::BackendUnavailable(format!(
            "no scripted rule matched role {}",
            role.as_str()
        )))
    }
}

/// Wraps another backend and appends every exchange to a JSON-lines file
/// for later replay.
pub struct RecordingBackend {
    inner: Arc<dyn LlmBackend>,
    sink: Mutex<File>,
    id: String,
}

impl RecordingBackend {
    pub fn create(inner: Arc<dyn LlmBackend>, path: &Path) -> Result<Self> {
        let id = format!("record({})", inner.id());
        Ok(RecordingBackend {
            inner,
            sink: Mutex::new(File::create(path)?),
            id,
        })
    }
}

impl LlmBackend for RecordingBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, role: RoleTag, prompt: &str) -> Result<String> {
        let response = self.inner.complete(role, prompt)?;
        let exchange = LlmExchange {
            role_tag: role,
            prompt: prompt.to_string(),
            response: response.clone(),
            backend_id: self.inner.id().to_string(),
            sequence_no: 0,
        };
        let line = serde_json::to_string(&exchange)
            .map_err(|e| CoqError::BackendUnavailable(format!("recording failed: {e}")))?;
        let mut sink = self.sink.lock().expect("recording lock poisoned");
        writeln!(sink, "{line}")?;
        sink.flush()?;
        Ok(response)
    }
}

/// HTTP chat-completion backend with deterministic decoding. Transport
/// errors are retried twice with exponential backoff; anything else is not.
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    api_key: String,
    temperature: f64,
    top_p: f64,
    id: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

impl LiveBackend {
    pub fn new(base_url: &str, model: &str, api_key: &str, temperature: f64, top_p: f64) -> Self {
        LiveBackend {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            temperature,
            top_p,
            id: format!("live({model})"),
        }
    }

    fn call_once(&self, prompt: &str) -> std::result::Result<String, reqwest::Error> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "messages": [{"role": "user", "content": prompt}],
        });
        let response: ChatResponse = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()?
            .error_for_status()?
            .json()?;
        Ok(response
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .unwrap_or_default())
    }
}

impl LlmBackend for LiveBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _role: RoleTag, prompt: &str) -> Result<String> {
        let mut delay = Duration::from_millis(500);
        let mut last_err = String::new();
        for attempt in 0..3 {
            match self.call_once(prompt) {
                Ok(content) if !content.is_empty() => return Ok(content),
                Ok(_) => last_err = "empty completion".to_string(),
                Err(e) => {
                    last_err = e.to_string();
                    // only transport-level failures are worth retrying
                    if e.status().is_some_and(|s| s.is_client_error()) {
                        break;
                    }
                }
            }
            if attempt < 2 {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(CoqError::BackendUnavailable(last_err))
    }
}
