//! Language-model backends: scripted files for offline runs, or a
//! chat-completions HTTP endpoint.

use std::path::PathBuf;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::config::{BackendConfig, BackendMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

/// One completion request. `key`, `step` and `turn` identify the request for
/// scripted backends; HTTP backends only send the messages.
#[derive(Debug, Clone)]
pub struct Request {
    pub key: String,
    pub step: String,
    pub turn: u32,
    pub messages: Vec<Message>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("no scripted response {0}")]
    Missing(String),
    #[error("backend request failed: {0}")]
    Http(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &Request) -> Result<String, BackendError>;
}

/// Returns `<dir>/<key>.<step>.<turn>.txt` verbatim.
pub struct MockBackend {
    dir: PathBuf,
}

impl MockBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn file_name(key: &str, step: &str, turn: u32) -> String {
        format!("{key}.{step}.{turn}.txt")
    }
}

impl Backend for MockBackend {
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        let name = Self::file_name(&req.key, &req.step, req.turn);
        std::fs::read_to_string(self.dir.join(&name)).map_err(|_| BackendError::Missing(name))
    }
}

/// Adapts a closure; handy for tests and in-process generators.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&Request) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        (self.0)(req)
    }
}

/// Counting semaphore bounding concurrent requests.
pub struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    pub fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.cv.wait_while(self.free.lock().unwrap(), |n| *n == 0).unwrap();
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
        out
    }
}

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::*;

    pub struct HttpBackend {
        cfg: BackendConfig,
        client: reqwest::blocking::Client,
        limiter: Limiter,
    }

    #[derive(Serialize)]
    struct Body<'a> {
        model: &'a str,
        messages: &'a [Message],
        temperature: f64,
        max_tokens: u32,
    }

    #[derive(Deserialize)]
    struct Reply {
        choices: Vec<Choice>,
    }

    #[derive(Deserialize)]
    struct Choice {
        message: Message,
    }

    impl HttpBackend {
        pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(cfg.timeout_secs))
                .build()
                .map_err(|e| BackendError::Unavailable(e.to_string()))?;
            Ok(Self { cfg: cfg.clone(), client, limiter: Limiter::new(cfg.max_in_flight) })
        }

        fn attempt(&self, url: &str, body: &Body<'_>) -> Result<String, BackendError> {
            let mut req = self.client.post(url).json(body);
            if let Some(key) = self.cfg.api_key_env.as_deref().and_then(|v| std::env::var(v).ok()) {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| BackendError::Http(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(BackendError::Http(format!("status {status}")));
            }
            let reply: Reply = resp.json().map_err(|e| BackendError::Http(e.to_string()))?;
            reply
                .choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .ok_or_else(|| BackendError::Http("empty choices".into()))
        }
    }

    impl Backend for HttpBackend {
        fn complete(&self, req: &Request) -> Result<String, BackendError> {
            let url = self.cfg.endpoint_url.as_deref().unwrap_or_default();
            let body = Body {
                model: &self.cfg.model_name,
                messages: &req.messages,
                temperature: req.temperature.unwrap_or(self.cfg.temperature),
                max_tokens: self.cfg.max_tokens,
            };
            let policy = &self.cfg.retry;
            let mut last = BackendError::Http("no attempts made".into());
            for attempt in 0..policy.max_attempts.max(1) {
                if attempt > 0 {
                    let delay = policy.base_secs * policy.factor.powi(attempt as i32 - 1);
                    std::thread::sleep(Duration::from_secs_f64(delay));
                }
                match self.limiter.run(|| self.attempt(url, &body)) {
                    Ok(text) => return Ok(text),
                    Err(e) => {
                        log::warn!("backend attempt {} failed: {e}", attempt + 1);
                        last = e;
                    }
                }
            }
            Err(last)
        }
    }
}

#[cfg(feature = "http")]
pub use http::HttpBackend;

pub fn build_backend(cfg: &BackendConfig) -> Result<Box<dyn Backend>, BackendError> {
    match cfg.mode {
        BackendMode::Mock => {
            let dir = cfg.script_dir.clone().ok_or_else(|| BackendError::Unavailable("mock backend without script_dir".into()))?;
            Ok(Box::new(MockBackend::new(dir)))
        }
        #[cfg(feature = "http")]
        BackendMode::Http => Ok(Box::new(HttpBackend::new(cfg)?)),
        #[cfg(not(feature = "http"))]
        BackendMode::Http => Err(BackendError::Unavailable("built without http support".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_lookup() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("r1.S5.0.txt"), "hello").unwrap();
        let b = MockBackend::new(dir.path());
        let mut req = Request { key: "r1".into(), step: "S5".into(), turn: 0, messages: vec![], temperature: None };
        assert_eq!(b.complete(&req).unwrap(), "hello");
        req.turn = 1;
        assert_eq!(b.complete(&req), Err(BackendError::Missing("r1.S5.1.txt".into())));
    }

    #[test]
    fn limiter_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let lim = Limiter::new(2);
        let active = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    lim.run(|| {
                        let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        std::thread::sleep(std::time::Duration::from_millis(5));
                        active.fetch_sub(1, Ordering::SeqCst);
                    })
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
