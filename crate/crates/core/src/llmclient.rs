//! Chat completion and continuation scoring over an OpenAI-compatible endpoint, plus an
//! offline deterministic mock.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::LlmError;

pub const ENV_BASE_URL: &str = "ADAPT_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "ADAPT_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(c: impl Into<String>) -> Self {
        Message { role: Role::System, content: c.into() }
    }
    pub fn user(c: impl Into<String>) -> Self {
        Message { role: Role::User, content: c.into() }
    }
    pub fn assistant(c: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: c.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { temperature: 0.0, max_tokens: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub sampling: Sampling,
    /// Grammar text forwarded as a decoding constraint when the backend supports it.
    pub grammar: Option<String>,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>) -> Self {
        ChatRequest { messages, sampling: Sampling::default(), grammar: None }
    }

    pub fn last_content(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or_default()
    }

    pub fn joined(&self) -> String {
        render_messages(&self.messages)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: String,
    pub usage: Usage,
}

impl ChatResponse {
    pub fn stop(text: impl Into<String>) -> Self {
        ChatResponse { text: text.into(), finish_reason: "stop".into(), usage: Usage::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    #[default]
    Linear,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub token_probs: Vec<f64>,
    pub mean_prob: f64,
    pub sum_logprob: f64,
}

impl SequenceScore {
    pub fn from_probs(token_probs: Vec<f64>) -> Result<Self, LlmError> {
        if token_probs.is_empty() {
            return Err(LlmError::Malformed("empty continuation".into()));
        }
        if let Some(p) = token_probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(LlmError::Malformed(format!("token probability {p} outside (0,1]")));
        }
        let mean_prob = token_probs.iter().sum::<f64>() / token_probs.len() as f64;
        let sum_logprob = token_probs.iter().map(|p| p.ln()).sum();
        Ok(SequenceScore { token_probs, mean_prob, sum_logprob })
    }

    pub fn from_logprobs(lps: &[f64]) -> Result<Self, LlmError> {
        Self::from_probs(lps.iter().map(|l| l.exp().min(1.0)).collect())
    }

    /// exp of the mean log-probability.
    pub fn geometric_mean(&self) -> f64 {
        (self.sum_logprob / self.token_probs.len() as f64).exp()
    }

    pub fn value(&self, mode: ScoringMode) -> f64 {
        match mode {
            ScoringMode::Linear => self.mean_prob,
            ScoringMode::Geometric => self.geometric_mean(),
        }
    }
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Per-token probabilities of `continuation` forced after `context`.
    fn score(&self, context: &[Message], continuation: &str) -> Result<SequenceScore, LlmError>;

    fn supports_grammar(&self) -> bool {
        false
    }
}

/// Plain transcript used as the scoring context and for logging.
pub fn render_messages(messages: &[Message]) -> String {
    let mut s = String::new();
    for m in messages {
        s.push_str("Source: ");
        s.push_str(m.role.as_str());
        s.push('\n');
        s.push_str(&m.content);
        s.push_str("\n\n");
    }
    s
}

fn sha_words(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// Deterministic pseudo-probabilities in [0.05, 1] keyed by context and continuation, one per
/// whitespace word.
pub fn hashed_probs(context: &[Message], continuation: &str) -> Vec<f64> {
    let ctx = render_messages(context);
    continuation
        .split_whitespace()
        .enumerate()
        .map(|(i, w)| {
            let d = sha_words(&format!("{ctx}\u{0}{i}\u{0}{w}"));
            let v = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
            0.05 + 0.95 * ((v >> 11) as f64 / (1u64 << 53) as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRule {
    /// Substring that must occur in the rendered context; empty matches everything.
    pub context_contains: String,
    pub continuation: String,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplyRule {
    pub last_contains: String,
    pub reply: String,
}

/// Offline client: queued replies first, then substring rules on the last message, then
/// the default reply. Scores come from the rule table, else from a content hash.
#[derive(Debug, Default)]
pub struct MockClient {
    queue: Mutex<VecDeque<String>>,
    pub reply_rules: Vec<ReplyRule>,
    pub default_reply: String,
    pub score_rules: Vec<ScoreRule>,
    pub scoring: bool,
    log: Mutex<Vec<ChatRequest>>,
}

impl MockClient {
    pub fn new() -> Self {
        MockClient { default_reply: "Action: Declare Done".into(), scoring: true, ..Default::default() }
    }

    pub fn with_queue<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Self {
        let m = Self::new();
        m.queue.lock().expect("mock lock").extend(items.into_iter().map(Into::into));
        m
    }

    pub fn push(&self, reply: impl Into<String>) {
        self.queue.lock().expect("mock lock").push_back(reply.into());
    }

    pub fn rule(mut self, last_contains: impl Into<String>, reply: impl Into<String>) -> Self {
        self.reply_rules.push(ReplyRule { last_contains: last_contains.into(), reply: reply.into() });
        self
    }

    pub fn score_rule(mut self, context_contains: impl Into<String>, continuation: impl Into<String>, probs: Vec<f64>) -> Self {
        self.score_rules.push(ScoreRule {
            context_contains: context_contains.into(),
            continuation: continuation.into().trim_end().to_string(),
            probs,
        });
        self
    }

    pub fn without_scoring(mut self) -> Self {
        self.scoring = false;
        self
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("mock lock").clone()
    }
}

impl LlmClient for MockClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if req.messages.is_empty() {
            return Err(LlmError::Config("empty message list".into()));
        }
        self.log.lock().expect("mock lock").push(req.clone());
        if let Some(r) = self.queue.lock().expect("mock lock").pop_front() {
            return Ok(ChatResponse::stop(r));
        }
        let last = req.last_content();
        let text = self
            .reply_rules
            .iter()
            .find(|r| last.contains(&r.last_contains))
            .map(|r| r.reply.clone())
            .unwrap_or_else(|| self.default_reply.clone());
        Ok(ChatResponse::stop(text))
    }

    fn score(&self, context: &[Message], continuation: &str) -> Result<SequenceScore, LlmError> {
        if !self.scoring {
            return Err(LlmError::Capability("logprob scoring".into()));
        }
        let cont = continuation.trim_end();
        let ctx = render_messages(context);
        if let Some(r) = self.score_rules.iter().find(|r| r.continuation == cont && ctx.contains(&r.context_contains)) {
            return SequenceScore::from_probs(r.probs.clone());
        }
        SequenceScore::from_probs(hashed_probs(context, cont))
    }
}

type ReplyFn = dyn Fn(&ChatRequest) -> String + Send + Sync;
type ScoreFn = dyn Fn(&[Message], &str) -> Vec<f64> + Send + Sync;

/// Client backed by closures; replies and scores are pure functions of the request.
pub struct FnClient {
    reply: Box<ReplyFn>,
    scorer: Option<Box<ScoreFn>>,
}

impl FnClient {
    pub fn new(reply: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        FnClient { reply: Box::new(reply), scorer: None }
    }

    pub fn with_scores(mut self, f: impl Fn(&[Message], &str) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.scorer = Some(Box::new(f));
        self
    }
}

impl LlmClient for FnClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if req.messages.is_empty() {
            return Err(LlmError::Config("empty message list".into()));
        }
        Ok(ChatResponse::stop((self.reply)(req)))
    }

    fn score(&self, context: &[Message], continuation: &str) -> Result<SequenceScore, LlmError> {
        let cont = continuation.trim_end();
        match &self.scorer {
            Some(f) => SequenceScore::from_probs(f(context, cont)),
            None => SequenceScore::from_probs(hashed_probs(context, cont)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    pub max_concurrency: usize,
    pub trace: bool,
    pub supports_grammar: bool,
}

impl HttpConfig {
    /// Reads the endpoint from `base_url` or the environment; the key always comes from the
    /// environment.
    pub fn from_env(base_url: Option<&str>, model: &str) -> Result<Self, LlmError> {
        let base_url = match base_url {
            Some(u) if !u.is_empty() => u.to_string(),
            _ => std::env::var(ENV_BASE_URL)
                .ok()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| LlmError::Config(format!("{ENV_BASE_URL} is not set")))?,
        };
        Ok(HttpConfig {
            base_url,
            model: model.to_string(),
            api_key: std::env::var(ENV_API_KEY).ok().filter(|v| !v.is_empty()),
            max_retries: 3,
            backoff_ms: 500,
            timeout_s: 120,
            max_concurrency: 4,
            trace: false,
            supports_grammar: false,
        })
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut f = self.free.lock().expect("semaphore lock");
        while *f == 0 {
            f = self.cv.wait(f).expect("semaphore lock");
        }
        *f -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpClient {
    cfg: HttpConfig,
    agent: ureq::Agent,
    slots: Semaphore,
}

impl HttpClient {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .build()
            .into();
        let slots = Semaphore::new(cfg.max_concurrency);
        HttpClient { cfg, agent, slots }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn redact(&self, text: &str) -> String {
        match &self.cfg.api_key {
            Some(k) if !k.is_empty() => text.replace(k.as_str(), "[REDACTED]"),
            _ => text.to_string(),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, LlmError> {
        let url = format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path);
        let payload = body.to_string();
        if self.cfg.trace {
            eprintln!("[llm] POST {url} {}", self.redact(&payload));
        }
        let _permit = self.slots.acquire();
        let mut attempt = 0u32;
        loop {
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(k) = &self.cfg.api_key {
                req = req.header("Authorization", &format!("Bearer {k}"));
            }
            let outcome = match req.send(payload.as_bytes()) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().map_err(|e| LlmError::Transport(e.to_string()))?;
                    if self.cfg.trace {
                        eprintln!("[llm] {status} {}", self.redact(&text));
                    }
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()));
                    }
                    let err = LlmError::Http { status, body: self.redact(&text) };
                    if status == 429 || status >= 500 {
                        Err(err)
                    } else {
                        return Err(err);
                    }
                }
                Err(e) => Err(LlmError::Transport(e.to_string())),
            };
            if attempt >= self.cfg.max_retries {
                return outcome;
            }
            std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16))));
            attempt += 1;
        }
    }
}

impl LlmClient for HttpClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if req.messages.is_empty() {
            return Err(LlmError::Config("empty message list".into()));
        }
        let mut body = json!({
            "model": self.cfg.model,
            "messages": req.messages,
            "temperature": req.sampling.temperature,
            "max_tokens": req.sampling.max_tokens,
        });
        if let (true, Some(g)) = (self.cfg.supports_grammar, &req.grammar) {
            body["guided_grammar"] = Value::String(g.clone());
        }
        let v = self.post("/v1/chat/completions", &body)?;
        let choice = v.get("choices").and_then(|c| c.get(0)).ok_or_else(|| LlmError::Malformed("no choices".into()))?;
        let text = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Malformed("no message content".into()))?;
        let finish = choice.get("finish_reason").and_then(Value::as_str).unwrap_or("stop");
        let usage = Usage {
            prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        };
        Ok(ChatResponse { text: text.to_string(), finish_reason: finish.to_string(), usage })
    }

    fn score(&self, context: &[Message], continuation: &str) -> Result<SequenceScore, LlmError> {
        let prefix = render_messages(context);
        let cont = continuation.trim_end();
        let body = json!({
            "model": self.cfg.model,
            "prompt": format!("{prefix}{cont}"),
            "echo": true,
            "logprobs": 1,
            "max_tokens": 0,
        });
        let v = self.post("/v1/completions", &body)?;
        let lp = v
            .pointer("/choices/0/logprobs")
            .filter(|l| !l.is_null())
            .ok_or_else(|| LlmError::Capability("echo logprobs".into()))?;
        let offsets = lp.get("text_offset").and_then(Value::as_array);
        let lps = lp
            .get("token_logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::Capability("token_logprobs".into()))?;
        let start = prefix.len() as u64;
        let picked: Vec<f64> = lps
            .iter()
            .enumerate()
            .filter(|(i, _)| match offsets {
                Some(o) => o.get(*i).and_then(Value::as_u64).is_some_and(|x| x >= start),
                None => true,
            })
            .filter_map(|(_, l)| l.as_f64())
            .collect();
        SequenceScore::from_logprobs(&picked)
    }

    fn supports_grammar(&self) -> bool {
        self.cfg.supports_grammar
    }
}
