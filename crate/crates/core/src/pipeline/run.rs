//! Run directory layout and the `run.json` record.
//!
//! ```text
//! <run dir>/run.json
//! <run dir>/<sample id>/summary_<K>.txt
//! <run dir>/<sample id>/hop_<K>.png
//! <run dir>/<sample id>/det_<K>.json
//! ```

use super::{io_err, write_atomic, PipelineError};
use crate::dataset::Dataset;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const RECORD_FILE: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLayout {
    dir: PathBuf,
}

impl RunLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `<runs root>/<run id>`.
    pub fn under(runs_root: impl AsRef<Path>, run_id: &str) -> Self {
        Self::new(runs_root.as_ref().join(run_id))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn run_id(&self) -> String {
        self.dir.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned())
    }

    pub fn record(&self) -> PathBuf {
        self.dir.join(RECORD_FILE)
    }

    pub fn sample_dir(&self, sample: &str) -> PathBuf {
        self.dir.join(sample)
    }

    pub fn summary(&self, sample: &str, hop: usize) -> PathBuf {
        self.sample_dir(sample).join(format!("summary_{hop}.txt"))
    }

    pub fn image(&self, sample: &str, hop: usize) -> PathBuf {
        self.sample_dir(sample).join(format!("hop_{hop}.png"))
    }

    pub fn detections(&self, sample: &str, hop: usize) -> PathBuf {
        self.sample_dir(sample).join(format!("det_{hop}.json"))
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }
}

/// Which implementation backs a pipeline stage. Credentials are never stored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientSpec {
    Stored,
    Remote {
        url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
    },
}

impl ClientSpec {
    pub fn is_remote(&self) -> bool {
        matches!(self, ClientSpec::Remote { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub summarizer: ClientSpec,
    pub generator: ClientSpec,
    pub detector: ClientSpec,
    pub image_width: u32,
    pub image_height: u32,
    pub seed: u64,
    /// Images are standardised to this side before detection.
    pub detection_side: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            summarizer: ClientSpec::Stored,
            generator: ClientSpec::Stored,
            detector: ClientSpec::Stored,
            image_width: 512,
            image_height: 512,
            seed: 0,
            detection_side: crate::imaging::DEFAULT_SIDE,
        }
    }
}

impl RunConfig {
    /// Whether re-running generation is expected to give the same pixels.
    /// Remote services may ignore the seed.
    pub fn generation_reproducible(&self) -> bool {
        !self.generator.is_remote()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Summarize,
    Generate,
    Detect,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Summarize, Stage::Generate, Stage::Detect];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Complete,
    Failed { error: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopArtifacts {
    pub hop: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub hops: usize,
    pub stages: BTreeMap<Stage, StageStatus>,
    pub artifacts: Vec<HopArtifacts>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub dataset_hash: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub config: RunConfig,
    pub samples: BTreeMap<String, SampleRecord>,
}

impl RunRecord {
    pub fn load(layout: &RunLayout) -> Result<Self, PipelineError> {
        let path = layout.record();
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Opens the record for `layout`, creating it if absent. An existing
    /// record must have been made for the same dataset and configuration.
    pub fn open_or_create(layout: &RunLayout, dataset: &Dataset, config: &RunConfig) -> Result<Self, PipelineError> {
        let hash = dataset.content_hash()?;
        if layout.record().exists() {
            let rec = Self::load(layout)?;
            if rec.dataset_hash != hash {
                return Err(PipelineError::Config(format!("run {} was created for a different dataset", rec.run_id)));
            }
            if &rec.config != config {
                return Err(PipelineError::Config(format!(
                    "run {} was created with a different configuration; start a new run id",
                    rec.run_id
                )));
            }
            return Ok(rec);
        }
        let created_at = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let mut rec = Self { run_id: layout.run_id(), dataset_hash: hash, created_at, config: config.clone(), samples: BTreeMap::new() };
        rec.refresh(layout, dataset);
        rec.save(layout)?;
        Ok(rec)
    }

    /// Re-derives artifact paths and stage status from the files on disk.
    /// Failures recorded earlier are kept until the stage completes.
    pub fn refresh(&mut self, layout: &RunLayout, dataset: &Dataset) {
        for s in &dataset.samples {
            let t = s.hop_count();
            let present = |p: PathBuf| p.is_file().then(|| layout.relative(&p));
            let artifacts: Vec<HopArtifacts> = (1..=t)
                .map(|k| HopArtifacts {
                    hop: k,
                    summary: present(layout.summary(&s.id, k)),
                    image: present(layout.image(&s.id, k)),
                    detections: present(layout.detections(&s.id, k)),
                })
                .collect();
            let entry = self.samples.entry(s.id.clone()).or_insert_with(|| SampleRecord {
                hops: t,
                stages: Stage::ALL.iter().map(|&st| (st, StageStatus::Pending)).collect(),
                artifacts: Vec::new(),
            });
            for st in Stage::ALL {
                let done = artifacts.iter().all(|a| match st {
                    Stage::Summarize => a.summary.is_some(),
                    Stage::Generate => a.image.is_some(),
                    Stage::Detect => a.detections.is_some(),
                });
                let status = entry.stages.entry(st).or_insert(StageStatus::Pending);
                if done {
                    *status = StageStatus::Complete;
                } else if *status == StageStatus::Complete {
                    *status = StageStatus::Pending;
                }
            }
            entry.hops = t;
            entry.artifacts = artifacts;
        }
    }

    pub fn mark_failed(&mut self, sample: &str, stage: Stage, error: String) {
        if let Some(s) = self.samples.get_mut(sample) {
            s.stages.insert(stage, StageStatus::Failed { error });
        }
    }

    pub fn save(&self, layout: &RunLayout) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("record serialises");
        text.push('\n');
        write_atomic(&layout.record(), text.as_bytes())
    }
}
