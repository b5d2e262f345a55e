use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::JudgeRequest;
use super::verdict::{parse_verdict, JudgeVerdict, VerdictError};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum JudgeError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Response(String),
    #[error(transparent)]
    Verdict(#[from] VerdictError),
    #[error("{0}")]
    Scripted(String),
}

/// Outcome of one judge call. Latency is reported even on failure.
#[derive(Clone, Debug, PartialEq)]
pub struct JudgeReply {
    pub result: Result<JudgeVerdict, JudgeError>,
    pub latency_ms: u64,
}

pub trait Judge {
    fn judge(&mut self, request: &JudgeRequest) -> JudgeReply;
}

impl<J: Judge + ?Sized> Judge for &mut J {
    fn judge(&mut self, request: &JudgeRequest) -> JudgeReply {
        (**self).judge(request)
    }
}

impl<J: Judge + ?Sized> Judge for Box<J> {
    fn judge(&mut self, request: &JudgeRequest) -> JudgeReply {
        (**self).judge(request)
    }
}

/// One scripted reply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MockEntry {
    /// Raw reply text, run through the verdict parser.
    Raw(String),
    Verdict(JudgeVerdict),
    /// Simulated transport failure.
    Error(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub responses: Vec<MockEntry>,
}

/// Replays a script in order; once exhausted the last entry repeats.
/// Reports zero latency so logs are reproducible.
#[derive(Clone, Debug)]
pub struct MockJudge {
    script: Vec<MockEntry>,
    calls: usize,
    requests: Vec<JudgeRequest>,
}

impl MockJudge {
    pub fn new(script: Vec<MockEntry>) -> Result<Self, JudgeError> {
        if script.is_empty() {
            return Err(JudgeError::Scripted("mock script has no responses".into()));
        }
        Ok(Self {
            script,
            calls: 0,
            requests: Vec::new(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, JudgeError> {
        let s: MockScript = serde_json::from_str(text)
            .map_err(|e| JudgeError::Scripted(format!("mock script: {e}")))?;
        Self::new(s.responses)
    }

    fn verdict(collision: bool) -> JudgeVerdict {
        JudgeVerdict {
            collision_likely: collision,
            confidence: if collision { 0.9 } else { 0.3 },
            first_collision_frame: if collision { 1 } else { 0 },
            explanation: if collision {
                "scripted collision"
            } else {
                "scripted clear"
            }
            .into(),
        }
    }

    pub fn always_accept() -> Self {
        Self::new(vec![MockEntry::Verdict(Self::verdict(false))]).expect("non-empty")
    }

    pub fn always_reject() -> Self {
        Self::new(vec![MockEntry::Verdict(Self::verdict(true))]).expect("non-empty")
    }

    /// `true` entries reject (collision), `false` entries accept.
    pub fn from_flags(collisions: &[bool]) -> Result<Self, JudgeError> {
        Self::new(
            collisions
                .iter()
                .map(|&c| MockEntry::Verdict(Self::verdict(c)))
                .collect(),
        )
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn requests(&self) -> &[JudgeRequest] {
        &self.requests
    }
}

impl Judge for MockJudge {
    fn judge(&mut self, request: &JudgeRequest) -> JudgeReply {
        let entry = &self.script[self.calls.min(self.script.len() - 1)];
        self.calls += 1;
        self.requests.push(request.clone());
        let result = match entry {
            MockEntry::Raw(raw) => parse_verdict(raw).map_err(JudgeError::from),
            MockEntry::Verdict(v) => Ok(v.clone()),
            MockEntry::Error(e) => Err(JudgeError::Scripted(e.clone())),
        };
        JudgeReply {
            result,
            latency_ms: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpJudgeConfig {
    /// Chat-completions style endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding a bearer token; no header if unset.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub temperature: f64,
}

impl Default for HttpJudgeConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "judge".into(),
            api_key_env: "DREAMKIT_JUDGE_API_KEY".into(),
            timeout_ms: 30_000,
            temperature: 0.0,
        }
    }
}

/// Posts the prompt and base64 PNG attachments as one user message. No
/// retries: every failure is returned to the caller.
pub struct HttpJudge {
    cfg: HttpJudgeConfig,
    agent: ureq::Agent,
}

impl HttpJudge {
    pub fn new(cfg: HttpJudgeConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .redirects(0)
            .build();
        Self { cfg, agent }
    }

    pub fn request_body(&self, request: &JudgeRequest) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.text})];
        for a in &request.attachments {
            content.push(json!({"type": "image_url", "image_url": {"url": a.data_url()}}));
        }
        json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": content}],
        })
    }

    fn call(&self, request: &JudgeRequest) -> Result<JudgeVerdict, JudgeError> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Ok(key) = std::env::var(&self.cfg.api_key_env) {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(self.request_body(request)) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(JudgeError::Status { status, body });
            }
            Err(e) => return Err(JudgeError::Transport(e.to_string())),
        };
        let body: Value = resp
            .into_json()
            .map_err(|e| JudgeError::Response(e.to_string()))?;
        let text = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| JudgeError::Response("no choices[0].message.content string".into()))?;
        Ok(parse_verdict(text)?)
    }
}

impl Judge for HttpJudge {
    fn judge(&mut self, request: &JudgeRequest) -> JudgeReply {
        let t0 = Instant::now();
        let result = self.call(request);
        JudgeReply {
            result,
            latency_ms: t0.elapsed().as_millis() as u64,
        }
    }
}
