//! Service seams for the three pipeline stages, each with a stored (offline)
//! and a remote (HTTP) implementation.

use super::run::{ClientSpec, RunLayout};
use super::{write_atomic, PipelineError};
use crate::dataset::Sample;
use crate::imaging::{decode_bytes, encode_png, RgbImage};
use crate::metrics::element::DetectionFile;
use crate::net::HttpClient;
use serde::Deserialize;
use serde_json::json;

pub const LLM_URL_ENV: &str = "CGVM_LLM_URL";
pub const LLM_KEY_ENV: &str = "CGVM_LLM_KEY";
pub const LLM_MODEL_ENV: &str = "CGVM_LLM_MODEL";
pub const T2I_URL_ENV: &str = "CGVM_T2I_URL";
pub const T2I_KEY_ENV: &str = "CGVM_T2I_KEY";
pub const DET_URL_ENV: &str = "CGVM_DET_URL";

/// Service endpoints that, when set, select a remote client.
pub const SERVICE_URL_ENVS: [&str; 4] = [LLM_URL_ENV, T2I_URL_ENV, DET_URL_ENV, crate::metrics::semantic::EMBED_URL_ENV];

pub(crate) fn env_nonempty(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

pub trait Summarizer: Send + Sync {
    fn spec(&self) -> ClientSpec;

    /// Description of the conversation prefix `1..=k`.
    fn summarize(&self, sample: &Sample, k: usize) -> Result<String, PipelineError>;
}

fn check_hop(sample: &Sample, k: usize) -> Result<(), PipelineError> {
    if k == 0 || k > sample.hops.len() {
        return Err(PipelineError::HopOutOfRange { sample: sample.id.clone(), hop: k, hops: sample.hops.len() });
    }
    Ok(())
}

/// Replays the dataset's `llm_desc` entries.
#[derive(Clone, Copy, Debug, Default)]
pub struct StoredSummaries;

impl Summarizer for StoredSummaries {
    fn spec(&self) -> ClientSpec {
        ClientSpec::Stored
    }

    fn summarize(&self, sample: &Sample, k: usize) -> Result<String, PipelineError> {
        check_hop(sample, k)?;
        sample
            .summaries
            .get(k - 1)
            .cloned()
            .ok_or_else(|| PipelineError::MissingStoredSummary { sample: sample.id.clone(), hop: k })
    }
}

/// Chat-completion endpoint: `{model, messages}` in,
/// `choices[0].message.content` out.
#[derive(Clone, Debug)]
pub struct RemoteTextService {
    url: String,
    key: Option<String>,
    model: String,
    http: HttpClient,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl RemoteTextService {
    pub fn new(url: impl Into<String>, key: Option<String>, model: impl Into<String>, http: HttpClient) -> Self {
        Self { url: url.into(), key, model: model.into(), http }
    }

    pub fn from_env(http: HttpClient) -> Option<Self> {
        let url = env_nonempty(LLM_URL_ENV)?;
        let model = env_nonempty(LLM_MODEL_ENV).unwrap_or_else(|| "gpt-3.5-turbo".into());
        Some(Self::new(url, env_nonempty(LLM_KEY_ENV), model, http))
    }
}

impl Summarizer for RemoteTextService {
    fn spec(&self) -> ClientSpec {
        ClientSpec::Remote { url: self.url.clone(), model: Some(self.model.clone()) }
    }

    fn summarize(&self, sample: &Sample, k: usize) -> Result<String, PipelineError> {
        check_hop(sample, k)?;
        let prompt = super::build_prompt(sample, k).expect("hop checked");
        let body = json!({ "model": self.model, "messages": [{ "role": "user", "content": prompt }] });
        let bytes = self.http.post_json(&self.url, self.key.as_deref(), &body)?;
        let resp: ChatResponse = serde_json::from_slice(&bytes).map_err(|e| PipelineError::BadResponse(e.to_string()))?;
        let text = resp.choices.into_iter().next().map(|c| c.message.content.trim().to_string()).unwrap_or_default();
        if text.is_empty() {
            return Err(PipelineError::EmptySummary { sample: sample.id.clone(), hop: k });
        }
        Ok(text)
    }
}

#[derive(Clone, Debug)]
pub struct GenerationRequest<'a> {
    pub sample_id: &'a str,
    pub hop: usize,
    pub prompt: &'a str,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

pub trait Generator: Send + Sync {
    fn spec(&self) -> ClientSpec;

    /// PNG bytes of the image for `req`, already present at the run
    /// layout's `hop_<K>.png` when this returns.
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Vec<u8>, PipelineError>;
}

/// Decoded form of [`Generator::generate`].
pub fn generate_image(client: &dyn Generator, req: &GenerationRequest<'_>) -> Result<RgbImage, PipelineError> {
    if req.prompt.trim().is_empty() {
        return Err(PipelineError::EmptySummary { sample: req.sample_id.to_string(), hop: req.hop });
    }
    Ok(decode_bytes(&client.generate(req)?)?)
}

/// Per-request seed derived from the run seed, stable across runs and
/// independent of processing order. Kept below 2^32 since image services
/// commonly take 32-bit seeds.
pub fn derive_seed(run_seed: u64, sample_id: &str, hop: usize) -> u64 {
    let mut key = run_seed.to_le_bytes().to_vec();
    key.extend_from_slice(sample_id.as_bytes());
    key.extend_from_slice(&(hop as u64).to_le_bytes());
    let h = crate::net::content_hash(&key);
    u64::from_str_radix(&h[..8], 16).expect("hex digest")
}

#[derive(Clone, Debug)]
pub struct StoredImages {
    layout: RunLayout,
}

impl StoredImages {
    pub fn new(layout: RunLayout) -> Self {
        Self { layout }
    }
}

impl Generator for StoredImages {
    fn spec(&self) -> ClientSpec {
        ClientSpec::Stored
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Vec<u8>, PipelineError> {
        let path = self.layout.image(req.sample_id, req.hop);
        std::fs::read(&path).map_err(|_| PipelineError::MissingStoredImage(path))
    }
}

/// `{prompt, width, height, seed}` in, image bytes out. Non-PNG answers are
/// re-encoded so the run always holds PNG.
#[derive(Clone, Debug)]
pub struct RemoteImageService {
    url: String,
    key: Option<String>,
    http: HttpClient,
    layout: RunLayout,
}

impl RemoteImageService {
    pub fn new(url: impl Into<String>, key: Option<String>, http: HttpClient, layout: RunLayout) -> Self {
        Self { url: url.into(), key, http, layout }
    }

    pub fn from_env(http: HttpClient, layout: RunLayout) -> Option<Self> {
        Some(Self::new(env_nonempty(T2I_URL_ENV)?, env_nonempty(T2I_KEY_ENV), http, layout))
    }
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

impl Generator for RemoteImageService {
    fn spec(&self) -> ClientSpec {
        ClientSpec::Remote { url: self.url.clone(), model: None }
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Vec<u8>, PipelineError> {
        let body = json!({ "prompt": req.prompt, "width": req.width, "height": req.height, "seed": req.seed });
        let bytes = self.http.post_json(&self.url, self.key.as_deref(), &body)?;
        let decoded = decode_bytes(&bytes).map_err(|e| PipelineError::BadResponse(format!("image service answer: {e}")))?;
        let png = if bytes.starts_with(PNG_MAGIC) { bytes } else { encode_png(&decoded)? };
        write_atomic(&self.layout.image(req.sample_id, req.hop), &png)?;
        Ok(png)
    }
}

pub trait Detector: Send + Sync {
    fn spec(&self) -> ClientSpec;

    /// Detections for the standardised image `image_png`, already present at
    /// the run layout's `det_<K>.json` when this returns.
    fn detect(&self, sample_id: &str, hop: usize, image_png: &[u8]) -> Result<DetectionFile, PipelineError>;
}

pub fn read_detection_file(path: &std::path::Path) -> Result<DetectionFile, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingStoredDetections(path.to_path_buf()))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::BadResponse(format!("{}: {e}", path.display())))
}

pub fn write_detection_file(path: &std::path::Path, file: &DetectionFile) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(file).expect("detections serialise");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Clone, Debug)]
pub struct StoredDetections {
    layout: RunLayout,
}

impl StoredDetections {
    pub fn new(layout: RunLayout) -> Self {
        Self { layout }
    }
}

impl Detector for StoredDetections {
    fn spec(&self) -> ClientSpec {
        ClientSpec::Stored
    }

    fn detect(&self, sample_id: &str, hop: usize, _image_png: &[u8]) -> Result<DetectionFile, PipelineError> {
        read_detection_file(&self.layout.detections(sample_id, hop))
    }
}

/// Image bytes in, a detection file out.
#[derive(Clone, Debug)]
pub struct RemoteDetector {
    url: String,
    http: HttpClient,
    layout: RunLayout,
    side: u32,
}

impl RemoteDetector {
    pub fn new(url: impl Into<String>, http: HttpClient, layout: RunLayout, side: u32) -> Self {
        Self { url: url.into(), http, layout, side }
    }

    pub fn from_env(http: HttpClient, layout: RunLayout, side: u32) -> Option<Self> {
        Some(Self::new(env_nonempty(DET_URL_ENV)?, http, layout, side))
    }
}

impl Detector for RemoteDetector {
    fn spec(&self) -> ClientSpec {
        ClientSpec::Remote { url: self.url.clone(), model: None }
    }

    fn detect(&self, sample_id: &str, hop: usize, image_png: &[u8]) -> Result<DetectionFile, PipelineError> {
        let bytes = self.http.post(&self.url, "image/png", None, image_png)?;
        let mut file: DetectionFile =
            serde_json::from_slice(&bytes).map_err(|e| PipelineError::BadResponse(format!("detector answer: {e}")))?;
        file.side.get_or_insert(self.side);
        file.image_id = format!("{sample_id}/hop_{hop}");
        write_detection_file(&self.layout.detections(sample_id, hop), &file)?;
        Ok(file)
    }
}
