//! Resumable stage runners. Artifacts already on disk are reused; workers
//! hand results back by value and only the calling thread touches the run
//! record.

use super::clients::{derive_seed, Detector, GenerationRequest, Generator, Summarizer};
use super::run::{RunLayout, RunRecord, Stage};
use super::{io_err, write_atomic, PipelineError};
use crate::dataset::{Dataset, Sample};
use crate::imaging::{decode_bytes, encode_png, standardize};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageFailure {
    pub sample_id: String,
    pub hop: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub produced: usize,
    pub reused: usize,
    pub failures: Vec<StageFailure>,
}

#[derive(Default)]
struct SampleOutcome {
    produced: usize,
    reused: usize,
    failures: Vec<StageFailure>,
}

/// Runs `f` on a pool of `jobs` threads (0 = one per logical core).
pub fn with_pool<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

fn run_stage(
    stage: Stage,
    dataset: &Dataset,
    layout: &RunLayout,
    record: &mut RunRecord,
    jobs: usize,
    hop_fn: impl Fn(&Sample, usize) -> Result<bool, PipelineError> + Sync,
) -> Result<StageReport, PipelineError> {
    let outcomes: Vec<(String, SampleOutcome)> = with_pool(jobs, || {
        dataset
            .samples
            .par_iter()
            .map(|s| {
                let mut out = SampleOutcome::default();
                for k in 1..=s.hop_count() {
                    match hop_fn(s, k) {
                        Ok(true) => out.produced += 1,
                        Ok(false) => out.reused += 1,
                        Err(e) => {
                            log::warn!("{stage:?} failed for {} hop {k}: {e}", s.id);
                            out.failures.push(StageFailure { sample_id: s.id.clone(), hop: k, error: e.to_string() });
                        }
                    }
                }
                (s.id.clone(), out)
            })
            .collect()
    })?;

    record.refresh(layout, dataset);
    let mut report = StageReport { stage, produced: 0, reused: 0, failures: Vec::new() };
    for (id, out) in outcomes {
        report.produced += out.produced;
        report.reused += out.reused;
        if let Some(first) = out.failures.first() {
            record.mark_failed(&id, stage, format!("hop {}: {}", first.hop, first.error));
        }
        report.failures.extend(out.failures);
    }
    record.save(layout)?;
    Ok(report)
}

/// Writes `summary_<K>.txt` for every hop prefix.
pub fn run_summarize(
    dataset: &Dataset,
    layout: &RunLayout,
    record: &mut RunRecord,
    client: &dyn Summarizer,
    jobs: usize,
) -> Result<StageReport, PipelineError> {
    run_stage(Stage::Summarize, dataset, layout, record, jobs, |s, k| {
        let path = layout.summary(&s.id, k);
        if path.is_file() {
            return Ok(false);
        }
        let text = client.summarize(s, k)?;
        write_atomic(&path, text.as_bytes())?;
        Ok(true)
    })
}

/// Renders `hop_<K>.png` from each stored summary.
pub fn run_generate(
    dataset: &Dataset,
    layout: &RunLayout,
    record: &mut RunRecord,
    client: &dyn Generator,
    jobs: usize,
) -> Result<StageReport, PipelineError> {
    let cfg = record.config.clone();
    let stored = !client.spec().is_remote();
    run_stage(Stage::Generate, dataset, layout, record, jobs, |s, k| {
        let path = layout.image(&s.id, k);
        if path.is_file() {
            return Ok(false);
        }
        if stored {
            return Err(PipelineError::MissingStoredImage(path));
        }
        let summary_path = layout.summary(&s.id, k);
        let prompt = std::fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
        let req = GenerationRequest {
            sample_id: &s.id,
            hop: k,
            prompt: prompt.trim(),
            width: cfg.image_width,
            height: cfg.image_height,
            seed: derive_seed(cfg.seed, &s.id, k),
        };
        super::clients::generate_image(client, &req)?;
        Ok(true)
    })
}

/// Writes `det_<K>.json` for each generated image, standardised to the
/// run's detection side first.
pub fn run_detect(
    dataset: &Dataset,
    layout: &RunLayout,
    record: &mut RunRecord,
    client: &dyn Detector,
    jobs: usize,
) -> Result<StageReport, PipelineError> {
    let side = record.config.detection_side;
    let stored = !client.spec().is_remote();
    run_stage(Stage::Detect, dataset, layout, record, jobs, |s, k| {
        let path = layout.detections(&s.id, k);
        if path.is_file() {
            return Ok(false);
        }
        if stored {
            return Err(PipelineError::MissingStoredDetections(path));
        }
        let img_path = layout.image(&s.id, k);
        let bytes = std::fs::read(&img_path).map_err(|_| PipelineError::MissingStoredImage(img_path.clone()))?;
        let png = encode_png(&standardize(&decode_bytes(&bytes)?, side)?)?;
        client.detect(&s.id, k, &png)?;
        Ok(true)
    })
}
