use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{cache_key, ChatRequest, LlmConfig, LlmError};

/// A chat-completion provider.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Sends one request and returns the raw completion text.
    fn send(&self, req: &ChatRequest) -> Result<String, LlmError>;

    /// Number of requests that reached the provider.
    fn calls(&self) -> usize;
}

/// OpenAI-style `chat/completions` endpoint over HTTPS.
pub struct HttpBackend {
    id: String,
    endpoint: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
    calls: AtomicUsize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl HttpBackend {
    /// Reads the bearer token from `config.api_key_env`, if set.
    pub fn new(config: &LlmConfig) -> Result<Self, LlmError> {
        let token = std::env::var(&config.api_key_env).ok().filter(|t| !t.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            id: format!("http:{}", config.model_name),
            endpoint: config.endpoint.clone(),
            token,
            client,
            calls: AtomicUsize::new(0),
        })
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, req: &ChatRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = json!({
            "model": req.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut rb = self.client.post(&self.endpoint).json(&body);
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        let resp = rb.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited);
        }
        if status.is_server_error() {
            return Err(LlmError::Transport(format!("server error {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(LlmError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let text = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Malformed("response has no choices".into()))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Serves nothing; every cache miss is a missing fixture.
#[derive(Debug, Default)]
pub struct ReplayBackend;

impl Backend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn send(&self, req: &ChatRequest) -> Result<String, LlmError> {
        Err(LlmError::MissingFixture {
            key: cache_key(req),
            tag: req.tag.clone(),
        })
    }

    fn calls(&self) -> usize {
        0
    }
}

type Responder = Box<dyn Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync>;

/// Scriptable test double that counts calls.
pub struct MockBackend {
    responder: Responder,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        Self {
            responder: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    /// Always answers `text`.
    pub fn constant(text: &str) -> Self {
        let text = text.to_string();
        Self::new(move |_| Ok(text.clone()))
    }

    /// Answers by request tag; unknown tags get `default`, or an error when
    /// `default` is `None`.
    pub fn scripted(script: HashMap<String, String>, default: Option<String>) -> Self {
        Self::new(move |req| match script.get(&req.tag).or(default.as_ref()) {
            Some(t) => Ok(t.clone()),
            None => Err(LlmError::Unscripted(req.tag.clone())),
        })
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn send(&self, req: &ChatRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.responder)(req)
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}
