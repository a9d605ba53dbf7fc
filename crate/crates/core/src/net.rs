//! Blocking HTTP plumbing for the remote service clients.
//!
//! Every request goes through [`HttpClient`], which applies bounded retries
//! with exponential backoff and jitter, a per-request timeout and a cap on
//! in-flight requests. A process-wide counter records each attempted
//! request so offline runs can prove they never touched the network.

use rand::Rng;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

static NETWORK_OPERATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of HTTP requests attempted by this process.
pub fn network_operations() -> usize {
    NETWORK_OPERATIONS.load(Ordering::SeqCst)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("service returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
}

impl HttpError {
    fn retryable(&self) -> bool {
        match self {
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Transport(_) => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HttpConfig {
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub retries: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
    pub max_body_bytes: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 4,
            max_body_bytes: 64 << 20,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    config: HttpConfig,
    gate: Arc<Gate>,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("config", &self.config).finish()
    }
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Arc::new(Gate { free: Mutex::new(config.max_in_flight.max(1)), cv: Condvar::new() });
        Self { agent, config, gate }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// POSTs a body and returns the response bytes of the first 2xx answer.
    pub fn post(&self, url: &str, content_type: &str, bearer: Option<&str>, body: &[u8]) -> Result<Vec<u8>, HttpError> {
        let mut attempt = 0;
        loop {
            let result = self.post_once(url, content_type, bearer, body);
            match result {
                Err(e) if e.retryable() && attempt < self.config.retries => {
                    let base = self.config.backoff_base.as_secs_f64() * 2f64.powi(attempt as i32);
                    let jitter = rand::rng().random_range(0.0..=base * 0.25);
                    log::warn!("request to {url} failed ({e}); retry {} in {:.2}s", attempt + 1, base + jitter);
                    std::thread::sleep(Duration::from_secs_f64(base + jitter));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    pub fn post_json<T: serde::Serialize>(&self, url: &str, bearer: Option<&str>, body: &T) -> Result<Vec<u8>, HttpError> {
        let bytes = serde_json::to_vec(body).map_err(|e| HttpError::Transport(e.to_string()))?;
        self.post(url, "application/json", bearer, &bytes)
    }

    fn post_once(&self, url: &str, content_type: &str, bearer: Option<&str>, body: &[u8]) -> Result<Vec<u8>, HttpError> {
        let _slot = self.gate.acquire();
        NETWORK_OPERATIONS.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.post(url).header("Content-Type", content_type);
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| HttpError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(self.config.max_body_bytes)
            .read_to_vec()
            .map_err(|e| HttpError::Transport(e.to_string()))?;
        if (200..300).contains(&status) {
            Ok(bytes)
        } else {
            let body = String::from_utf8_lossy(&bytes[..bytes.len().min(512)]).into_owned();
            Err(HttpError::Status { status, body })
        }
    }
}

/// Hex SHA-256 of a byte string; the content key for images.
pub fn content_hash(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
