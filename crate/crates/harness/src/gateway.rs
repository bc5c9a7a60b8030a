//! Chat-completion backends and the experts built on them.
//!
//! [`Gateway::complete`] is the only way a request leaves the process. It
//! caps concurrent requests per backend, retries a failed transport once
//! after a backoff, and counts requests and tokens. Authentication and
//! configuration failures are never retried.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use council_core::expert::{ExpertDescriptor, ExpertError, ExpertKind, ProposalRequest};
use council_core::prompt::{compose_prompt, parse_score, PromptMode, PromptTemplates};
use council_core::{Action, DecisionContext, Expert, TaskSpec};
use serde::{Deserialize, Serialize};

use crate::config::BackendConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub backend_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => Err(GatewayError::Config(
                "a chat request needs at least one message".into(),
            )),
            Some(m) if m.role != Role::System => Err(GatewayError::Config(
                "the first message must be the system prompt".into(),
            )),
            _ if !(self.temperature >= 0.0 && self.temperature.is_finite()) => Err(
                GatewayError::Config("generation temperature must be non-negative".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub text: String,
    /// Tokens billed for the request, when the backend reports them.
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    fn retriable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Timeout)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("expert unavailable: {0}")]
    Unavailable(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub trait Backend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<Reply, BackendError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendUsage {
    pub requests: u64,
    pub tokens: u64,
}

struct Slot {
    backend: Arc<dyn Backend>,
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    requests: AtomicU64,
    tokens: AtomicU64,
}

impl Slot {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut n = self.in_flight.lock().expect("slot lock");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("slot lock");
        }
        *n += 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slot);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("slot lock") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    slots: BTreeMap<String, Slot>,
    backoff: Duration,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new(Duration::from_millis(500))
    }
}

impl Gateway {
    /// `backoff` is the wait before the retry.
    pub fn new(backoff: Duration) -> Self {
        Self {
            slots: BTreeMap::new(),
            backoff,
        }
    }

    pub fn register(&mut self, backend_id: &str, backend: Arc<dyn Backend>, request_cap: usize) {
        self.slots.insert(
            backend_id.to_string(),
            Slot {
                backend,
                cap: request_cap.max(1),
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                requests: AtomicU64::new(0),
                tokens: AtomicU64::new(0),
            },
        );
    }

    pub fn from_config(backends: &[BackendConfig]) -> Self {
        let mut g = Self::default();
        for b in backends {
            g.register(
                &b.backend_id,
                Arc::new(OpenAiBackend::new(b)),
                b.request_cap,
            );
        }
        g
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let slot = self
            .slots
            .get(&request.backend_id)
            .ok_or_else(|| GatewayError::Config(format!("no backend '{}'", request.backend_id)))?;
        let mut last = None;
        for attempt in 0..2u32 {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let result = {
                let _guard = slot.acquire();
                slot.requests.fetch_add(1, Ordering::Relaxed);
                slot.backend.send(request)
            };
            match result {
                Ok(reply) => {
                    slot.tokens.fetch_add(reply.tokens, Ordering::Relaxed);
                    return Ok(Completion {
                        text: reply.text,
                        retries: attempt,
                    });
                }
                Err(BackendError::Auth(m)) => return Err(GatewayError::Auth(m)),
                Err(BackendError::Config(m)) => return Err(GatewayError::Config(m)),
                Err(e) => {
                    debug_assert!(e.retriable());
                    last = Some(e);
                }
            }
        }
        Err(GatewayError::Unavailable(format!(
            "backend '{}' failed twice, last error: {}",
            request.backend_id,
            last.expect("two failed attempts")
        )))
    }

    pub fn usage(&self) -> BTreeMap<String, BackendUsage> {
        self.slots
            .iter()
            .map(|(id, s)| {
                let u = BackendUsage {
                    requests: s.requests.load(Ordering::Relaxed),
                    tokens: s.tokens.load(Ordering::Relaxed),
                };
                (id.clone(), u)
            })
            .collect()
    }
}

/// An OpenAI-compatible `/chat/completions` endpoint over blocking HTTP.
pub struct OpenAiBackend {
    url: String,
    model: String,
    credential_env: Option<String>,
    timeout: Duration,
    agent: ureq::Agent,
}

impl OpenAiBackend {
    pub fn new(config: &BackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
            model: config.model.clone(),
            credential_env: config.credential_env.clone(),
            timeout: Duration::from_secs(config.timeout_secs),
            agent,
        }
    }
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: Message,
}

#[derive(Deserialize)]
struct WireUsage {
    total_tokens: u64,
}

impl Backend for OpenAiBackend {
    fn send(&self, request: &ChatRequest) -> Result<Reply, BackendError> {
        let mut call = self.agent.post(&self.url);
        if let Some(var) = &self.credential_env {
            // the value is only ever placed in the header
            let key = std::env::var(var).map_err(|_| {
                BackendError::Auth(format!("environment variable {var} is not set"))
            })?;
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let timeout = request.timeout.min(self.timeout);
        let response = call
            .config()
            .timeout_global(Some(timeout))
            .build()
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => BackendError::Timeout,
                ureq::Error::BadUri(m) => {
                    BackendError::Config(format!("bad endpoint address: {m}"))
                }
                other => BackendError::Transport(other.to_string()),
            })?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(format!("HTTP {status}"))),
            400 | 404 | 422 => return Err(BackendError::Config(format!("HTTP {status}"))),
            _ => return Err(BackendError::Transport(format!("HTTP {status}"))),
        }
        let reply: WireReply = response
            .into_body()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("unreadable reply: {e}")))?;
        let text = reply
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport("reply without choices".into()))?;
        Ok(Reply {
            text,
            tokens: reply.usage.map_or(0, |u| u.total_tokens),
        })
    }
}

/// Canned replies for tests and offline dry runs. Each call pops the next
/// scripted result; once the script runs out every call gets `fallback`.
pub struct StubBackend {
    script: Mutex<VecDeque<Result<String, BackendError>>>,
    fallback: Option<String>,
    calls: AtomicU64,
}

impl StubBackend {
    pub fn echo(reply: &str) -> Self {
        Self {
            script: Mutex::new(VecDeque::new()),
            fallback: Some(reply.into()),
            calls: AtomicU64::new(0),
        }
    }

    pub fn scripted(replies: Vec<Result<String, BackendError>>) -> Self {
        Self {
            script: Mutex::new(replies.into()),
            fallback: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Backend for StubBackend {
    fn send(&self, _: &ChatRequest) -> Result<Reply, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let next = self.script.lock().expect("stub lock").pop_front();
        let text = match next {
            Some(r) => r?,
            None => self
                .fallback
                .clone()
                .ok_or_else(|| BackendError::Transport("stub script exhausted".into()))?,
        };
        let tokens = text.split_whitespace().count() as u64;
        Ok(Reply { text, tokens })
    }
}

/// A council member that asks a chat model for actions and scores.
pub struct LlmExpert {
    descriptor: ExpertDescriptor,
    gateway: Arc<Gateway>,
    backend_id: String,
    templates: PromptTemplates,
    pub act_temperature: f64,
    pub eval_temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
}

impl LlmExpert {
    pub fn new(
        id: &str,
        gateway: Arc<Gateway>,
        backend_id: &str,
        templates: PromptTemplates,
    ) -> council_core::Result<Self> {
        Ok(Self {
            descriptor: ExpertDescriptor::new(id, ExpertKind::LlmBacked)?,
            gateway,
            backend_id: backend_id.into(),
            templates,
            act_temperature: 0.7,
            eval_temperature: 0.0,
            max_tokens: 256,
            timeout: Duration::from_secs(60),
        })
    }

    fn ask(&self, user: String, temperature: f64) -> Result<String, ExpertError> {
        let request = ChatRequest {
            backend_id: self.backend_id.clone(),
            messages: vec![
                Message::new(Role::System, self.templates.system.clone()),
                Message::new(Role::User, user),
            ],
            temperature,
            max_tokens: self.max_tokens,
            timeout: self.timeout,
        };
        self.gateway
            .complete(&request)
            .map(|c| c.text)
            .map_err(|e| ExpertError::Unavailable(e.to_string()))
    }
}

/// One action per non-empty line, with list markers and `ACT:` stripped.
pub fn parse_actions(text: &str) -> Vec<Action> {
    text.lines()
        .map(|l| {
            let l = l.trim().trim_start_matches(['-', '*', '•']).trim_start();
            let l = l.strip_prefix("ACT:").unwrap_or(l);
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            let l = match l[digits..].strip_prefix(['.', ')']) {
                Some(rest) if digits > 0 && rest.starts_with(' ') => rest,
                _ => l,
            };
            l.trim().to_string()
        })
        .filter_map(|l| Action::new(l).ok())
        .collect()
}

impl Expert for LlmExpert {
    fn descriptor(&self) -> &ExpertDescriptor {
        &self.descriptor
    }

    fn propose(&self, req: &ProposalRequest<'_>) -> Result<Vec<Action>, ExpertError> {
        let mut bundle =
            compose_prompt(req.context, req.exemplar, PromptMode::Act, &self.templates);
        if req.k > 1 {
            bundle.directive = format!(
                "{}\nGive up to {} different candidates, one per line.",
                bundle.directive, req.k
            );
        }
        let text = self.ask(bundle.render(&self.templates), self.act_temperature)?;
        let actions = parse_actions(&text);
        if actions.is_empty() {
            return Err(ExpertError::Malformed("no action in reply".into()));
        }
        Ok(actions)
    }

    fn evaluate(
        &self,
        _: &TaskSpec,
        context: &DecisionContext,
        _: u64,
    ) -> Result<f64, ExpertError> {
        let bundle = compose_prompt(context, None, PromptMode::Evaluate, &self.templates);
        let text = self.ask(bundle.render(&self.templates), self.eval_temperature)?;
        parse_score(&text).map_err(|e| ExpertError::Malformed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(backend: &str) -> ChatRequest {
        ChatRequest {
            backend_id: backend.into(),
            messages: vec![
                Message::new(Role::System, "sys"),
                Message::new(Role::User, "hi"),
            ],
            temperature: 0.0,
            max_tokens: 16,
            timeout: Duration::from_secs(1),
        }
    }

    fn gateway(stub: Arc<StubBackend>) -> Gateway {
        let mut g = Gateway::new(Duration::ZERO);
        g.register("stub", stub, 4);
        g
    }

    #[test]
    fn canned_reply_passes_through() {
        let g = gateway(Arc::new(StubBackend::echo("1+2=3")));
        assert_eq!(
            g.complete(&request("stub")).unwrap(),
            Completion {
                text: "1+2=3".into(),
                retries: 0
            }
        );
        assert_eq!(
            g.usage()["stub"],
            BackendUsage {
                requests: 1,
                tokens: 1
            }
        );
    }

    #[test]
    fn one_retry_after_a_timeout() {
        let stub = Arc::new(StubBackend::scripted(vec![
            Err(BackendError::Timeout),
            Ok("ok".into()),
        ]));
        let g = gateway(stub.clone());
        assert_eq!(g.complete(&request("stub")).unwrap().retries, 1);
        assert_eq!(stub.calls(), 2);
    }

    #[test]
    fn two_failures_make_the_expert_unavailable() {
        let stub = Arc::new(StubBackend::scripted(vec![
            Err(BackendError::Timeout),
            Err(BackendError::Transport("reset".into())),
        ]));
        let g = gateway(stub.clone());
        assert!(matches!(
            g.complete(&request("stub")),
            Err(GatewayError::Unavailable(_))
        ));
        assert_eq!(stub.calls(), 2);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let stub = Arc::new(StubBackend::scripted(vec![
            Err(BackendError::Auth("HTTP 401".into())),
            Ok("ok".into()),
        ]));
        let g = gateway(stub.clone());
        assert!(matches!(
            g.complete(&request("stub")),
            Err(GatewayError::Auth(_))
        ));
        assert_eq!(stub.calls(), 1);
        assert!(matches!(
            g.complete(&request("missing")),
            Err(GatewayError::Config(_))
        ));
    }

    #[test]
    fn requests_must_open_with_a_system_prompt() {
        let g = gateway(Arc::new(StubBackend::echo("x")));
        let mut r = request("stub");
        r.messages.remove(0);
        assert!(matches!(g.complete(&r), Err(GatewayError::Config(_))));
        r.messages.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn missing_credential_is_an_auth_error() {
        let b = OpenAiBackend::new(&BackendConfig {
            backend_id: "x".into(),
            endpoint: "http://127.0.0.1:9".into(),
            model: "m".into(),
            credential_env: Some("COUNCIL_TEST_SURELY_UNSET_KEY".into()),
            request_cap: 1,
            timeout_secs: 1,
        });
        assert!(matches!(b.send(&request("x")), Err(BackendError::Auth(_))));
    }

    #[test]
    fn action_lines_are_cleaned() {
        let got: Vec<String> = parse_actions("1. 4+4=8\n- ACT: 8*3=24\n\n  10-4=6  \n")
            .into_iter()
            .map(|a| a.as_str().to_string())
            .collect();
        assert_eq!(got, ["4+4=8", "8*3=24", "10-4=6"]);
    }
}
