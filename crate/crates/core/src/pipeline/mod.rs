//! Summarise, generate, detect, evaluate.
//!
//! Each stage reads and writes a run directory so any stage can be resumed
//! or replayed offline from stored artifacts.

pub mod clients;
pub mod eval;
pub mod prompt;
pub mod run;
pub mod stages;

pub use clients::{Detector, Generator, Summarizer};
pub use eval::{evaluate_run, write_report, EvalConfig, EvalReport, MetricFamily};
pub use prompt::{build_prompt, SUMMARY_PROMPT};
pub use run::{RunConfig, RunLayout, RunRecord};

use crate::dataset::DatasetError;
use crate::imaging::ImageError;
use crate::metrics::element::ElementError;
use crate::net::HttpError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("service error: {0}")]
    Service(#[from] HttpError),
    #[error("malformed service response: {0}")]
    BadResponse(String),
    #[error("sample {sample} has no stored summary for hop {hop}")]
    MissingStoredSummary { sample: String, hop: usize },
    #[error("no stored image at {}", .0.display())]
    MissingStoredImage(PathBuf),
    #[error("no stored detections at {}", .0.display())]
    MissingStoredDetections(PathBuf),
    #[error("hop {hop} is outside 1..={hops} for sample {sample}")]
    HopOutOfRange { sample: String, hop: usize, hops: usize },
    #[error("empty summary for sample {sample} hop {hop}")]
    EmptySummary { sample: String, hop: usize },
    #[error("run is incomplete; missing: {}", .0.join(", "))]
    IncompleteRun(Vec<String>),
    #[error("run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}
