//! Semantic similarity: cosine between image embeddings.
//!
//! Embeddings come from an [`EmbeddingProvider`]. No network model runs in
//! process; vectors are either precomputed in a [`FileStore`] keyed by the
//! SHA-256 of the image bytes, or fetched from a [`RemoteService`].

use crate::net::{content_hash, HttpClient, HttpError};
use crate::scalar::Scalar;
use serde::Deserialize;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

pub const EMBED_URL_ENV: &str = "CGVM_EMBED_URL";
pub const EMBED_TOKEN_ENV: &str = "CGVM_EMBED_TOKEN";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticError {
    #[error("embedding lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("embeddings come from different models: {0} vs {1}")]
    ModelMismatch(String, String),
    #[error("embedding is the zero vector")]
    ZeroVector,
    #[error("embedding is empty")]
    Empty,
    #[error("embedding has a non-finite component")]
    NonFinite,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("no stored embedding for image {0}")]
    EmbeddingMissing(String),
    #[error("embedding store {path}:{line}: {reason}")]
    StoreFormat { path: PathBuf, line: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T> {
    values: Vec<T>,
    model_id: String,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>, model_id: impl Into<String>) -> Result<Self, SemanticError> {
        if values.is_empty() {
            return Err(SemanticError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SemanticError::NonFinite);
        }
        if values.iter().all(|v| v.is_zero()) {
            return Err(SemanticError::ZeroVector);
        }
        Ok(Self { values, model_id: model_id.into() })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `dot(a, b) / (|a| |b|)`, accumulated in `f64`.
pub fn cosine<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<f64, SemanticError> {
    if a.len() != b.len() {
        return Err(SemanticError::LengthMismatch(a.len(), b.len()));
    }
    if a.model_id != b.model_id {
        return Err(SemanticError::ModelMismatch(a.model_id.clone(), b.model_id.clone()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        let (x, y) = (x.as_f64(), y.as_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SemanticError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Source of image embeddings. Implementations must return the same
/// embedding for the same bytes and be safe for concurrent reads.
pub trait EmbeddingProvider: Send + Sync {
    /// Model identifier recorded in reports.
    fn model_id(&self) -> String;

    fn embed(&self, image_bytes: &[u8]) -> Result<Embedding<f32>, SemanticError>;
}

/// Precomputed embeddings, one text line per vector:
/// `sha256  model_id  dim  v1 v2 ... vdim`.
#[derive(Clone, Debug, Default)]
pub struct FileStore {
    model_id: String,
    entries: BTreeMap<String, Embedding<f32>>,
}

impl FileStore {
    /// An empty store: every lookup is [`SemanticError::EmbeddingMissing`].
    pub fn empty(model_id: impl Into<String>) -> Self {
        Self { model_id: model_id.into(), entries: BTreeMap::new() }
    }

    /// Loads a store. With `model_id == None` the file must hold exactly one
    /// model; otherwise only that model's lines are kept.
    pub fn open(path: impl AsRef<Path>, model_id: Option<&str>) -> Result<Self, SemanticError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SemanticError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path, model_id)
    }

    pub fn parse(text: &str, path: &Path, model_id: Option<&str>) -> Result<Self, SemanticError> {
        let fail = |line: usize, reason: String| SemanticError::StoreFormat { path: path.to_path_buf(), line, reason };
        let mut by_model: BTreeMap<String, BTreeMap<String, Embedding<f32>>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (hash, model, dim) = match (parts.next(), parts.next(), parts.next()) {
                (Some(h), Some(m), Some(d)) => (h, m, d),
                _ => return Err(fail(line_no, "expected `hash model_id dim values...`".into())),
            };
            if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(fail(line_no, format!("bad sha256 {hash:?}")));
            }
            let dim: usize = dim.parse().map_err(|e| fail(line_no, format!("bad dim: {e}")))?;
            let values = parts.map(str::parse::<f32>).collect::<Result<Vec<_>, _>>().map_err(|e| fail(line_no, format!("bad value: {e}")))?;
            if values.len() != dim {
                return Err(fail(line_no, format!("declared dim {dim} but found {} values", values.len())));
            }
            let emb = Embedding::new(values, model).map_err(|e| fail(line_no, e.to_string()))?;
            by_model.entry(model.to_string()).or_default().insert(hash.to_ascii_lowercase(), emb);
        }
        let (model_id, entries) = match model_id {
            Some(m) => (m.to_string(), by_model.remove(m).unwrap_or_default()),
            None => match by_model.len() {
                0 => (String::from("none"), BTreeMap::new()),
                1 => by_model.into_iter().next().expect("one model"),
                _ => {
                    let models: Vec<_> = by_model.keys().cloned().collect();
                    return Err(fail(0, format!("store holds several models {models:?}; choose one")));
                }
            },
        };
        Ok(Self { model_id, entries })
    }

    pub fn insert(&mut self, hash: impl Into<String>, embedding: Embedding<f32>) {
        self.entries.insert(hash.into(), embedding);
    }

    pub fn get(&self, hash: &str) -> Option<&Embedding<f32>> {
        self.entries.get(hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serialises in hash order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (hash, emb) in &self.entries {
            out.push_str(&format!("{hash}  {}  {}", emb.model_id(), emb.len()));
            for v in emb.values() {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

impl EmbeddingProvider for FileStore {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn embed(&self, image_bytes: &[u8]) -> Result<Embedding<f32>, SemanticError> {
        let hash = content_hash(image_bytes);
        self.entries.get(&hash).cloned().ok_or(SemanticError::EmbeddingMissing(hash))
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    model_id: String,
    vector: Vec<f32>,
}

/// `POST <base>/embed` with the raw image bytes; answer
/// `{"model_id": "...", "vector": [...]}`. Responses are memoised by content
/// hash so repeated images cost one request.
pub struct RemoteService {
    url: String,
    token: Option<String>,
    http: HttpClient,
    cache: Mutex<HashMap<String, Embedding<f32>>>,
    model_id: Mutex<Option<String>>,
}

impl RemoteService {
    pub fn new(base_url: &str, token: Option<String>, http: HttpClient) -> Self {
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/embed") { base.to_string() } else { format!("{base}/embed") };
        Self { url, token, http, cache: Mutex::new(HashMap::new()), model_id: Mutex::new(None) }
    }

    /// Reads `CGVM_EMBED_URL` / `CGVM_EMBED_TOKEN`; `None` if the URL is unset.
    pub fn from_env(http: HttpClient) -> Option<Self> {
        let url = std::env::var(EMBED_URL_ENV).ok().filter(|u| !u.is_empty())?;
        Some(Self::new(&url, std::env::var(EMBED_TOKEN_ENV).ok(), http))
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl EmbeddingProvider for RemoteService {
    fn model_id(&self) -> String {
        self.model_id.lock().unwrap_or_else(|e| e.into_inner()).clone().unwrap_or_else(|| format!("remote:{}", self.url))
    }

    fn embed(&self, image_bytes: &[u8]) -> Result<Embedding<f32>, SemanticError> {
        let hash = content_hash(image_bytes);
        if let Some(e) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&hash) {
            return Ok(e.clone());
        }
        let body = self
            .http
            .post(&self.url, "application/octet-stream", self.token.as_deref(), image_bytes)
            .map_err(|e: HttpError| SemanticError::ProviderUnavailable(e.to_string()))?;
        let resp: EmbedResponse =
            serde_json::from_slice(&body).map_err(|e| SemanticError::ProviderUnavailable(format!("bad response: {e}")))?;
        let emb = Embedding::new(resp.vector, resp.model_id.clone())?;
        *self.model_id.lock().unwrap_or_else(|e| e.into_inner()) = Some(resp.model_id);
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).insert(hash, emb.clone());
        Ok(emb)
    }
}

/// Cosine similarity of two images' embeddings with a score cache keyed by
/// `(hash(y), hash(yhat), model_id)`.
pub struct ClipScorer<'a> {
    provider: &'a dyn EmbeddingProvider,
    scores: Mutex<HashMap<(String, String, String), f64>>,
}

impl<'a> ClipScorer<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider) -> Self {
        Self { provider, scores: Mutex::new(HashMap::new()) }
    }

    pub fn model_id(&self) -> String {
        self.provider.model_id()
    }

    pub fn score(&self, y_bytes: &[u8], yhat_bytes: &[u8]) -> Result<f64, SemanticError> {
        let key = (content_hash(y_bytes), content_hash(yhat_bytes), self.provider.model_id());
        if let Some(v) = self.scores.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(*v);
        }
        let a = self.provider.embed(y_bytes)?;
        let b = self.provider.embed(yhat_bytes)?;
        let value = cosine(&a, &b)?;
        self.scores.lock().unwrap_or_else(|e| e.into_inner()).insert(key, value);
        Ok(value)
    }
}

/// One-shot form of [`ClipScorer::score`].
pub fn clip_score(y_bytes: &[u8], yhat_bytes: &[u8], provider: &dyn EmbeddingProvider) -> Result<f64, SemanticError> {
    ClipScorer::new(provider).score(y_bytes, yhat_bytes)
}
