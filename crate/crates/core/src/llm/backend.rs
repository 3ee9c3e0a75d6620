//! Completion backends: the scripted transcript replayer, an HTTP chat
//! backend, and an auditing wrapper that logs every call.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlmRequest {
    pub template_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub text: String,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl LlmRequest {
    /// A pipeline request: temperature 0, no system text.
    pub fn new(template_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            template_id: template_id.into(),
            system: None,
            text: text.into(),
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LlmResponse {
    pub text: String,
    pub backend_id: String,
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone)]
pub enum Matcher {
    Literal(String),
    Pattern(Regex),
}

impl Matcher {
    pub fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Literal(s) => prompt.contains(s.as_str()),
            Matcher::Pattern(re) => re.is_match(prompt),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub matcher: Matcher,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MissPolicy {
    Error,
    Fallback(String),
}

#[derive(Deserialize)]
struct RuleRow {
    #[serde(rename = "match")]
    pattern: String,
    response: String,
    #[serde(default)]
    regex: bool,
}

/// Replays a prompt/response transcript. Rules are tried in order and the
/// first whose matcher accepts the rendered prompt answers it.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    rules: Vec<ScriptRule>,
    on_miss: MissPolicy,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>, on_miss: MissPolicy) -> Self {
        Self {
            id: "scripted".into(),
            rules,
            on_miss,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Convenience constructor for literal-substring rules.
    pub fn from_pairs<S: AsRef<str>, R: AsRef<str>>(pairs: &[(S, R)], on_miss: MissPolicy) -> Self {
        Self::new(
            pairs
                .iter()
                .map(|(m, r)| ScriptRule {
                    matcher: Matcher::Literal(m.as_ref().to_string()),
                    response: r.as_ref().to_string(),
                })
                .collect(),
            on_miss,
        )
    }

    /// Parses a JSONL transcript of `{"match": ..., "response": ..., "regex": bool}`.
    pub fn parse(text: &str, origin: &Path, on_miss: MissPolicy) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: RuleRow = serde_json::from_str(line)
                .map_err(|e| Error::malformed(origin, i + 1, e.to_string()))?;
            let matcher = if row.regex {
                Matcher::Pattern(
                    Regex::new(&row.pattern)
                        .map_err(|e| Error::malformed(origin, i + 1, e.to_string()))?,
                )
            } else {
                Matcher::Literal(row.pattern)
            };
            rules.push(ScriptRule {
                matcher,
                response: row.response,
            });
        }
        Ok(Self::new(rules, on_miss))
    }

    pub fn load(path: &Path, on_miss: MissPolicy) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, on_miss)
    }

    /// Number of completion calls served so far, misses included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = match self.rules.iter().find(|r| r.matcher.matches(&request.text)) {
            Some(rule) => rule.response.clone(),
            None => match &self.on_miss {
                MissPolicy::Error => {
                    return Err(Error::ScriptMiss {
                        template: request.template_id.clone(),
                    })
                }
                MissPolicy::Fallback(text) => text.clone(),
            },
        };
        Ok(LlmResponse {
            text,
            backend_id: self.id.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Chat-completions endpoint.
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_retries() -> u32 {
    3
}

fn default_timeout() -> u64 {
    120
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

/// OpenAI-style chat-completions client. Requests are idempotent at
/// temperature 0, so failures are retried with exponential backoff.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    id: String,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self {
            id: format!("remote:{}", config.model),
            config,
            agent,
        }
    }

    fn try_complete(&self, request: &LlmRequest) -> std::result::Result<String, String> {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &request.system {
            messages.push(ChatMessage {
                role: "system",
                content: system,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: &request.text,
        });
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut req = self.agent.post(&self.config.url);
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| e.to_string())?;
        let parsed: ChatResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "response has no choices".to_string())
    }
}

impl LlmBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse> {
        let mut attempt = 0;
        loop {
            match self.try_complete(request) {
                Ok(text) => {
                    return Ok(LlmResponse {
                        text,
                        backend_id: self.id.clone(),
                    })
                }
                Err(reason) if attempt < self.config.retries => {
                    log::warn!("{} attempt {} failed: {reason}", self.id, attempt + 1);
                    thread::sleep(Duration::from_millis(500 << attempt));
                    attempt += 1;
                }
                Err(reason) => {
                    return Err(Error::Backend {
                        backend: self.id.clone(),
                        reason,
                    })
                }
            }
        }
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize)]
struct CallRecord<'a> {
    template_id: &'a str,
    prompt_sha256: String,
    backend: &'a str,
    latency_ms: u128,
    ok: bool,
    #[serde(rename = "match", skip_serializing_if = "Option::is_none")]
    prompt: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<&'a str>,
}

/// Writes one JSON line per completion call. With `capture_text` on, lines also
/// carry the prompt (as `match`) and the response, which makes a log of a live
/// run loadable as a scripted transcript.
pub struct AuditedBackend<B> {
    inner: B,
    sink: Mutex<Box<dyn Write + Send>>,
    capture_text: bool,
}

impl<B: LlmBackend> AuditedBackend<B> {
    pub fn new(inner: B, sink: Box<dyn Write + Send>, capture_text: bool) -> Self {
        Self {
            inner,
            sink: Mutex::new(sink),
            capture_text,
        }
    }
}

impl<B: LlmBackend> LlmBackend for AuditedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse> {
        let started = Instant::now();
        let result = self.inner.complete(request);
        let record = CallRecord {
            template_id: &request.template_id,
            prompt_sha256: sha256_hex(&request.text),
            backend: self.inner.id(),
            latency_ms: started.elapsed().as_millis(),
            ok: result.is_ok(),
            prompt: self.capture_text.then_some(request.text.as_str()),
            response: match (&result, self.capture_text) {
                (Ok(r), true) => Some(r.text.as_str()),
                _ => None,
            },
        };
        let line = serde_json::to_string(&record).expect("call records serialize");
        let mut sink = self.sink.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = writeln!(sink, "{line}") {
            log::warn!("could not write call log: {e}");
        }
        result
    }
}
