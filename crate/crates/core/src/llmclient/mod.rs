//! Chat-completion access: live HTTP, cache-only replay and a scriptable
//! mock, behind a content-addressed disk cache.

mod backend;
mod cache;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use backend::{Backend, HttpBackend, MockBackend, ReplayBackend};
pub use cache::{cache_key, CacheEntry, DiskCache};

use crate::promptkit::RenderedPrompt;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("missing replay fixture for {tag} (key {key})")]
    MissingFixture { key: String, tag: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
    #[error("cache {path}: {msg}")]
    Cache { path: PathBuf, msg: String },
    #[error("no scripted response for {0}")]
    Unscripted(String),
    #[error("invalid LLM config: {0}")]
    Config(String),
    #[error("not attempted: batch aborted after an earlier failure")]
    Aborted,
}

impl LlmError {
    fn retriable(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::RateLimited)
    }

    /// True for failures of the network path (as opposed to data problems).
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            LlmError::Transport(_)
                | LlmError::RateLimited
                | LlmError::Http { .. }
                | LlmError::Malformed(_)
                | LlmError::Exhausted { .. }
                | LlmError::Aborted
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
    pub parallelism: usize,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model_name: "llama-2-13b-chat".into(),
            temperature: 1e-4,
            max_tokens: 100,
            timeout_s: 60.0,
            max_retries: 3,
            backoff_ms: 1000,
            parallelism: 4,
            api_key_env: "EMOPROMPT_API_KEY".into(),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(LlmError::Config("parallelism must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be finite and >= 0".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(LlmError::Config("timeout_s must be positive".into()));
        }
        Ok(())
    }
}

/// Wire-level request. `tag` identifies the item in logs and mock scripts
/// and is not part of the cache key.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: String,
}

impl ChatRequest {
    pub fn new(prompt: &RenderedPrompt, config: &LlmConfig) -> Self {
        Self {
            system: prompt.system_text.clone(),
            user: prompt.user_text.clone(),
            model: config.model_name.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            tag: format!("{}/{}", prompt.prompt_id, prompt.utterance_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    /// Completion text exactly as received.
    pub raw_text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub cached: bool,
}

pub struct LlmClient {
    backend: Box<dyn Backend>,
    cache: Option<DiskCache>,
    config: LlmConfig,
}

impl LlmClient {
    pub fn new(
        backend: Box<dyn Backend>,
        cache: Option<DiskCache>,
        config: LlmConfig,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Self {
            backend,
            cache,
            config,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    pub fn complete(&self, prompt: &RenderedPrompt) -> Result<LlmResponse, LlmError> {
        self.complete_request(&ChatRequest::new(prompt, &self.config))
    }

    pub fn complete_request(&self, req: &ChatRequest) -> Result<LlmResponse, LlmError> {
        let start = Instant::now();
        let key = cache_key(req);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                return Ok(LlmResponse {
                    raw_text: hit.raw_text,
                    backend_id: hit.backend_id,
                    latency_ms: start.elapsed().as_millis() as u64,
                    cached: true,
                });
            }
        }
        let raw_text = self.send_with_retries(req)?;
        if let Some(cache) = &self.cache {
            cache.put(&CacheEntry {
                key,
                model: req.model.clone(),
                temperature: req.temperature,
                max_tokens: req.max_tokens,
                system: req.system.clone(),
                user: req.user.clone(),
                backend_id: self.backend.id().to_string(),
                raw_text: raw_text.clone(),
            })?;
        }
        Ok(LlmResponse {
            raw_text,
            backend_id: self.backend.id().to_string(),
            latency_ms: start.elapsed().as_millis() as u64,
            cached: false,
        })
    }

    fn send_with_retries(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let mut attempt = 0u32;
        loop {
            match self.backend.send(req) {
                Ok(text) => return Ok(text),
                Err(e) if e.retriable() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("{}: {e}; retrying in {delay} ms", req.tag);
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) if e.retriable() => {
                    return Err(LlmError::Exhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Completes every prompt with at most `parallelism` requests in
    /// flight. Results are in input order. Successful responses are cached
    /// as they arrive, so an interrupted batch resumes from the cache. With
    /// `fail_fast`, items not yet started after the first failure are
    /// reported as [`LlmError::Aborted`].
    pub fn batch(
        &self,
        prompts: &[RenderedPrompt],
        fail_fast: bool,
    ) -> Vec<Result<LlmResponse, LlmError>> {
        let reqs: Vec<ChatRequest> = prompts
            .iter()
            .map(|p| ChatRequest::new(p, &self.config))
            .collect();
        self.batch_requests(&reqs, fail_fast)
    }

    pub fn batch_requests(
        &self,
        reqs: &[ChatRequest],
        fail_fast: bool,
    ) -> Vec<Result<LlmResponse, LlmError>> {
        let slots: Vec<Mutex<Option<Result<LlmResponse, LlmError>>>> =
            reqs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let workers = self.config.parallelism.min(reqs.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let result = if stop.load(Ordering::SeqCst) {
                        Err(LlmError::Aborted)
                    } else {
                        self.complete_request(&reqs[i])
                    };
                    if fail_fast && result.is_err() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .unwrap_or_else(|p| p.into_inner())
                    .expect("every slot filled")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn prompt(i: usize) -> RenderedPrompt {
        RenderedPrompt {
            prompt_id: "1".into(),
            utterance_id: format!("u{i}"),
            system_text: "sys".into(),
            user_text: format!("user {i}"),
            resolved_placeholders: Default::default(),
        }
    }

    fn fast() -> LlmConfig {
        LlmConfig {
            backoff_ms: 1,
            ..LlmConfig::default()
        }
    }

    #[test]
    fn defaults() {
        let c = LlmConfig::default();
        assert_eq!(c.temperature, 1e-4);
        assert_eq!(c.max_tokens, 100);
    }

    #[test]
    fn key_ignores_tag_but_not_content() {
        let c = LlmConfig::default();
        let a = ChatRequest::new(&prompt(1), &c);
        let mut b = a.clone();
        b.tag = "other".into();
        assert_eq!(cache_key(&a), cache_key(&b));
        b.max_tokens = 101;
        assert_ne!(cache_key(&a), cache_key(&b));
        let mut d = a.clone();
        d.temperature = 0.0;
        assert_ne!(cache_key(&a), cache_key(&d));
    }

    #[test]
    fn mock_scripted() {
        let mut script = HashMap::new();
        script.insert("1/u0".to_string(), "happy".to_string());
        let client =
            LlmClient::new(Box::new(MockBackend::scripted(script, None)), None, fast()).unwrap();
        assert_eq!(client.complete(&prompt(0)).unwrap().raw_text, "happy");
        assert!(matches!(
            client.complete(&prompt(1)),
            Err(LlmError::Unscripted(_))
        ));
    }

    #[test]
    fn second_call_is_cached() {
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(
            Box::new(MockBackend::constant(" Sad.\n")),
            Some(DiskCache::open(dir.path()).unwrap()),
            fast(),
        )
        .unwrap();
        let a = client.complete(&prompt(0)).unwrap();
        let b = client.complete(&prompt(0)).unwrap();
        assert!(!a.cached && b.cached);
        assert_eq!(a.raw_text, " Sad.\n");
        assert_eq!(a.raw_text, b.raw_text);
        assert_eq!(client.backend().calls(), 1);
    }

    #[test]
    fn replay_miss_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(
            Box::new(ReplayBackend),
            Some(DiskCache::open(dir.path()).unwrap()),
            fast(),
        )
        .unwrap();
        assert!(matches!(
            client.complete(&prompt(0)),
            Err(LlmError::MissingFixture { .. })
        ));
    }

    #[test]
    fn retries_rate_limits_then_succeeds() {
        let n = AtomicUsize::new(0);
        let backend = MockBackend::new(move |_| {
            if n.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(LlmError::RateLimited)
            } else {
                Ok("neutral".into())
            }
        });
        let client = LlmClient::new(Box::new(backend), None, fast()).unwrap();
        assert_eq!(client.complete(&prompt(0)).unwrap().raw_text, "neutral");
        assert_eq!(client.backend().calls(), 3);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let backend = MockBackend::new(|_| Err(LlmError::Transport("down".into())));
        let client = LlmClient::new(Box::new(backend), None, fast()).unwrap();
        match client.complete(&prompt(0)) {
            Err(LlmError::Exhausted { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(client.backend().calls(), 4);
    }

    #[test]
    fn non_retriable_errors_fail_immediately() {
        let backend = MockBackend::new(|_| Err(LlmError::Malformed("x".into())));
        let client = LlmClient::new(Box::new(backend), None, fast()).unwrap();
        assert!(matches!(client.complete(&prompt(0)), Err(LlmError::Malformed(_))));
        assert_eq!(client.backend().calls(), 1);
    }

    fn echo_with_concurrency(max_seen: &'static AtomicUsize) -> MockBackend {
        static IN_FLIGHT: AtomicUsize = AtomicUsize::new(0);
        MockBackend::new(move |req| {
            let now = IN_FLIGHT.fetch_add(1, Ordering::SeqCst) + 1;
            max_seen.fetch_max(now, Ordering::SeqCst);
            // later items finish first
            let i: u64 = req.tag.trim_start_matches("1/u").parse().unwrap();
            std::thread::sleep(Duration::from_millis(20 - i % 20));
            IN_FLIGHT.fetch_sub(1, Ordering::SeqCst);
            Ok(req.user.clone())
        })
    }

    #[test]
    fn batch_order_and_bound() {
        static MAX: AtomicUsize = AtomicUsize::new(0);
        let prompts: Vec<_> = (0..10).map(prompt).collect();
        for p in [1, 4, 16] {
            MAX.store(0, Ordering::SeqCst);
            let cfg = LlmConfig {
                parallelism: p,
                ..fast()
            };
            let client = LlmClient::new(Box::new(echo_with_concurrency(&MAX)), None, cfg).unwrap();
            let out: Vec<String> = client
                .batch(&prompts, false)
                .into_iter()
                .map(|r| r.unwrap().raw_text)
                .collect();
            let want: Vec<String> = prompts.iter().map(|p| p.user_text.clone()).collect();
            assert_eq!(out, want);
            assert!(MAX.load(Ordering::SeqCst) <= p.min(10));
            if p == 1 {
                assert_eq!(MAX.load(Ordering::SeqCst), 1);
            }
        }
        let client = LlmClient::new(Box::new(MockBackend::constant("x")), None, fast()).unwrap();
        assert!(client.batch(&[], false).is_empty());
    }

    #[test]
    fn interrupted_batch_resumes_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let prompts: Vec<_> = (0..10).map(prompt).collect();
        let failing = MockBackend::new(|req| {
            if req.tag == "1/u7" {
                Err(LlmError::Http {
                    status: 400,
                    body: "interrupted".into(),
                })
            } else {
                Ok("angry".into())
            }
        });
        let cfg = LlmConfig {
            parallelism: 1,
            ..fast()
        };
        let client = LlmClient::new(
            Box::new(failing),
            Some(DiskCache::open(dir.path()).unwrap()),
            cfg.clone(),
        )
        .unwrap();
        let first = client.batch(&prompts, true);
        assert!(first[..7].iter().all(|r| r.is_ok()));
        assert!(first[7].is_err());
        assert!(first[8..].iter().all(|r| matches!(r, Err(LlmError::Aborted))));

        let client = LlmClient::new(
            Box::new(MockBackend::constant("angry")),
            Some(DiskCache::open(dir.path()).unwrap()),
            cfg,
        )
        .unwrap();
        let second = client.batch(&prompts, true);
        let cached: Vec<bool> = second.iter().map(|r| r.as_ref().unwrap().cached).collect();
        assert!(cached[..7].iter().all(|&c| c));
        assert!(cached[7..].iter().all(|&c| !c));
        assert_eq!(client.backend().calls(), 3);
    }
}
