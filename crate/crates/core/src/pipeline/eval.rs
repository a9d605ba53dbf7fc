//! Metric evaluation over a completed run and report emission.

use super::clients::read_detection_file;
use super::run::{RunConfig, RunLayout, RunRecord};
use super::stages::with_pool;
use super::{io_err, write_atomic, PipelineError};
use crate::dataset::{Category, Dataset, Sample};
use crate::hops::{aggregate_lenient, normalize_hops, Aggregation, GroupBy, MetricSeries, DEFAULT_GRID_SIZE};
use crate::imaging::{decode_bytes, standardize, to_luma, DEFAULT_SIDE};
use crate::metrics::brisque::{brisque_score, SvrModel};
use crate::metrics::computational::{mse_with, psnr_with, ssim, uqi, FormulaMode, PsnrValue, SsimParams, SsimWindow, UqiMode};
use crate::metrics::element::{
    ep_scores, iou_variants, DetectionOrigin, DetectionSet, ElementInstance, IouOptions, IouVariant, LabelNormalizer,
    DEFAULT_DETECTION_THRESHOLD,
};
use crate::metrics::semantic::{ClipScorer, EmbeddingProvider, FileStore};
use crate::Plane;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const REPORT_CSV: &str = "report.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";
pub const PLOTDATA_CSV: &str = "plotdata.csv";
pub const ERRORS_JSON: &str = "errors.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricFamily {
    Psnr,
    Ssim,
    Uqi,
    Brisque,
    Clip,
    Ep,
    Iou,
}

impl MetricFamily {
    pub const ALL: [MetricFamily; 7] = [
        MetricFamily::Psnr,
        MetricFamily::Ssim,
        MetricFamily::Uqi,
        MetricFamily::Brisque,
        MetricFamily::Clip,
        MetricFamily::Ep,
        MetricFamily::Iou,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricFamily::Psnr => "psnr",
            MetricFamily::Ssim => "ssim",
            MetricFamily::Uqi => "uqi",
            MetricFamily::Brisque => "brisque",
            MetricFamily::Clip => "clip",
            MetricFamily::Ep => "ep",
            MetricFamily::Iou => "iou",
        }
    }

    /// Report column names produced by this family, in emission order.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            MetricFamily::Psnr => &["mse", "psnr"],
            MetricFamily::Ssim => &["ssim", "ssim_luminance", "ssim_contrast", "ssim_structure"],
            MetricFamily::Uqi => &["uqi"],
            MetricFamily::Brisque => &["brisque"],
            MetricFamily::Clip => &["clip_score"],
            MetricFamily::Ep => &["ep_precision", "ep_recall", "ep_f1"],
            MetricFamily::Iou => &["iou_common", "iou_precision", "iou_recall"],
        }
    }

    fn needs_detections(self) -> bool {
        matches!(self, MetricFamily::Ep | MetricFamily::Iou)
    }

    /// Parses a comma-separated list such as `psnr,ssim,iou`.
    pub fn parse_list(s: &str) -> Result<BTreeSet<MetricFamily>, String> {
        let set = s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect::<Result<BTreeSet<_>, _>>()?;
        if set.is_empty() {
            return Err("no metrics selected".into());
        }
        Ok(set)
    }
}

impl fmt::Display for MetricFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        MetricFamily::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric {s:?}; expected one of psnr, ssim, uqi, brisque, clip, ep, iou"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub metrics: BTreeSet<MetricFamily>,
    pub side: u32,
    pub grid: usize,
    pub ssim_window: SsimWindow,
    pub uqi_mode: UqiMode,
    pub iou: IouOptions,
    pub detection_threshold: f64,
    pub formulas: FormulaMode,
    /// Worker threads; 0 means one per logical core. Not part of the snapshot.
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: MetricFamily::ALL.into_iter().collect(),
            side: DEFAULT_SIDE,
            grid: DEFAULT_GRID_SIZE,
            ssim_window: SsimWindow::default(),
            uqi_mode: UqiMode::default(),
            iou: IouOptions::default(),
            detection_threshold: DEFAULT_DETECTION_THRESHOLD,
            formulas: FormulaMode::Standard,
            jobs: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.side < 8 {
            return Err(PipelineError::Config(format!("side must be at least 8, got {}", self.side)));
        }
        if self.grid < 2 {
            return Err(PipelineError::Config(format!("grid must have at least 2 points, got {}", self.grid)));
        }
        if !(0.0..=1.0).contains(&self.detection_threshold) {
            return Err(PipelineError::Config(format!("detection threshold {} is outside [0, 1]", self.detection_threshold)));
        }
        if self.metrics.is_empty() {
            return Err(PipelineError::Config("no metrics selected".into()));
        }
        Ok(())
    }

    fn outputs(&self) -> Vec<&'static str> {
        self.metrics.iter().flat_map(|m| m.outputs().iter().copied()).collect()
    }
}

/// Everything that determines report contents. Reports are only merged when
/// their snapshots agree (ignoring the run id).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub run_id: String,
    pub dataset_hash: String,
    pub run: RunConfig,
    pub generation_reproducible: bool,
    pub eval: EvalConfig,
    pub brisque_model: Option<String>,
    pub embedding_model: Option<String>,
    pub std_convention: String,
    pub corpus_grouping: String,
    pub category_grouping: String,
}

impl ConfigSnapshot {
    pub fn mergeable_with(&self, other: &ConfigSnapshot) -> bool {
        ConfigSnapshot { run_id: String::new(), dataset_hash: String::new(), ..self.clone() }
            == ConfigSnapshot { run_id: String::new(), dataset_hash: String::new(), ..other.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    #[serde(rename = "")]
    Ok,
    Infinite,
    Undefined,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sample_id: String,
    pub category: Category,
    pub hop: usize,
    pub hops: usize,
    pub normalized_hop: f64,
    pub metric: String,
    /// Empty for infinite, undefined and failed values.
    #[serde(with = "opt_value")]
    pub value: Option<f64>,
    pub flag: Flag,
}

impl ReportRow {
    /// Value as it enters aggregation: `+inf` when infinite, NaN otherwise
    /// missing.
    pub fn numeric(&self) -> f64 {
        match (self.value, self.flag) {
            (Some(v), _) => v,
            (None, Flag::Infinite) => f64::INFINITY,
            _ => f64::NAN,
        }
    }
}

mod opt_value {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_str(&x.to_string()),
            None => s.serialize_str(""),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let s = String::deserialize(d)?;
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub sample_id: String,
    pub hop: Option<usize>,
    pub metric: String,
    /// Error variant name, e.g. `EmbeddingMissing`.
    pub kind: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub snapshot: ConfigSnapshot,
    pub rows: Vec<ReportRow>,
    pub series: Vec<MetricSeries>,
    pub corpus: Aggregation,
    pub category: Aggregation,
    pub grid: Aggregation,
    pub errors: Vec<ErrorEntry>,
}

impl EvalReport {
    /// Rebuilds series and aggregates from per-hop rows.
    pub fn from_rows(snapshot: ConfigSnapshot, rows: Vec<ReportRow>, mut errors: Vec<ErrorEntry>) -> Result<Self, PipelineError> {
        // (sample, metric) -> series, in first-seen order
        let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
        let mut series: Vec<MetricSeries> = Vec::new();
        for r in &rows {
            let key = (r.sample_id.clone(), r.metric.clone());
            let i = *index.entry(key).or_insert_with(|| {
                series.push(MetricSeries::new(&r.sample_id, &r.metric, Some(r.category), Vec::new()));
                series.len() - 1
            });
            series[i].per_hop.push((r.hop, r.numeric()));
        }
        let series = series
            .iter()
            .map(|s| normalize_hops(s, snapshot.eval.grid))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        errors.sort();
        Ok(Self {
            corpus: aggregate_lenient(&series, GroupBy::Corpus),
            category: aggregate_lenient(&series, GroupBy::Category),
            grid: aggregate_lenient(&series, GroupBy::GridPoint),
            snapshot,
            rows,
            series,
            errors,
        })
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }
}

/// Optional heavy inputs for the metric families that need them.
#[derive(Default, Clone, Copy)]
pub struct EvalInputs<'a> {
    /// Defaults to the built-in model when BRISQUE is enabled.
    pub brisque_model: Option<&'a SvrModel>,
    /// When absent, every CLIP lookup fails with a missing embedding.
    pub embeddings: Option<&'a dyn EmbeddingProvider>,
}

struct Shared<'a> {
    dataset: &'a Dataset,
    layout: &'a RunLayout,
    config: &'a EvalConfig,
    brisque: Option<&'a SvrModel>,
    clip: Option<ClipScorer<'a>>,
    normalizer: LabelNormalizer,
}

struct Reference {
    bytes: Vec<u8>,
    luma: Plane,
    elements: DetectionSet,
}

fn sample_reference(sh: &Shared<'_>, s: &Sample) -> Result<Reference, PipelineError> {
    let path = sh.dataset.image_path(s);
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    let rgb = decode_bytes(&bytes)?;
    let side = f64::from(sh.config.side);
    let (sx, sy) = (side / f64::from(rgb.width()), side / f64::from(rgb.height()));
    let instances = s
        .metadata
        .elements
        .iter()
        .map(|e| Ok(ElementInstance::new(sh.normalizer.normalize(&e.label)?, e.bbox.map(|b| b.scaled(sx, sy)))))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let luma = to_luma(&standardize(&rgb, sh.config.side)?);
    Ok(Reference { bytes, luma, elements: DetectionSet { image_id: s.id.clone(), instances, origin: DetectionOrigin::HumanAnnotation } })
}

/// Values for one hop in `config.outputs()` order.
fn evaluate_hop(sh: &Shared<'_>, s: &Sample, gt: &Reference, k: usize, errors: &mut Vec<ErrorEntry>) -> Vec<(f64, Flag)> {
    let mut out = Vec::new();
    let mut fail = |metric: MetricFamily, e: &dyn Failure, out: &mut Vec<(f64, Flag)>| {
        errors.push(ErrorEntry { sample_id: s.id.clone(), hop: Some(k), metric: metric.name().into(), kind: e.kind(), error: e.to_string() });
        out.extend(metric.outputs().iter().map(|_| (f64::NAN, Flag::Error)));
    };
    let img_path = sh.layout.image(&s.id, k);
    let generated = std::fs::read(&img_path)
        .map_err(io_err(&img_path))
        .and_then(|b| {
            let luma: Plane = to_luma(&standardize(&decode_bytes(&b)?, sh.config.side)?);
            Ok((b, luma))
        });
    let detections = || -> Result<DetectionSet, PipelineError> {
        let file = read_detection_file(&sh.layout.detections(&s.id, k))?;
        Ok(file.into_set(sh.config.detection_threshold, &sh.normalizer, sh.config.side)?)
    };
    let detections = sh.config.metrics.iter().any(|m| m.needs_detections()).then(detections);

    for &family in &sh.config.metrics {
        let (bytes, yhat) = match &generated {
            Ok((b, l)) => (b, l),
            Err(e) => {
                fail(family, &e, &mut out);
                continue;
            }
        };
        let y = &gt.luma;
        match family {
            MetricFamily::Psnr => match (mse_with(y, yhat, sh.config.formulas), psnr_with(y, yhat, sh.config.formulas)) {
                (Ok(m), Ok(p)) => {
                    out.push(value(m));
                    out.push(match p {
                        PsnrValue::Finite(v) => value(v),
                        PsnrValue::Infinite => (f64::INFINITY, Flag::Infinite),
                    });
                }
                (Err(e), _) | (_, Err(e)) => fail(family, &e, &mut out),
            },
            MetricFamily::Ssim => match ssim(y, yhat, &SsimParams::with_window(sh.config.ssim_window)) {
                Ok(b) => out.extend([b.ssim, b.luminance, b.contrast, b.structure].map(value)),
                Err(e) => fail(family, &e, &mut out),
            },
            MetricFamily::Uqi => match uqi(y, yhat, sh.config.uqi_mode) {
                Ok(v) => out.push(value(v)),
                Err(e) => fail(family, &e, &mut out),
            },
            MetricFamily::Brisque => match brisque_score(yhat, sh.brisque.expect("model resolved when enabled")) {
                Ok(v) => out.push(value(v)),
                Err(e) => fail(family, &e, &mut out),
            },
            MetricFamily::Clip => match sh.clip.as_ref().expect("scorer built when enabled").score(&gt.bytes, bytes) {
                Ok(v) => out.push(value(v)),
                Err(e) => fail(family, &e, &mut out),
            },
            MetricFamily::Ep => match detections.as_ref().expect("detections loaded") {
                Ok(d) => {
                    let ep = ep_scores(&gt.elements, d);
                    out.extend([ep.precision, ep.recall, ep.f1].map(value));
                }
                Err(e) => fail(family, &e, &mut out),
            },
            MetricFamily::Iou => match detections.as_ref().expect("detections loaded") {
                Ok(d) => match iou_variants(&gt.elements, d, sh.config.iou) {
                    Ok(v) => out.extend(IouVariant::ALL.map(|var| match v[&var] {
                        Some(x) => value(x),
                        None => (f64::NAN, Flag::Undefined),
                    })),
                    Err(e) => fail(family, &e, &mut out),
                },
                Err(e) => fail(family, &e, &mut out),
            },
        }
    }
    out
}

trait Failure: fmt::Display + fmt::Debug {
    /// Innermost variant name from the `Debug` form, so `Element(MissingBoxes(..))`
    /// gives `MissingBoxes`.
    fn kind(&self) -> String {
        let dbg = format!("{self:?}");
        let mut rest = dbg.as_str();
        let mut name = "";
        loop {
            let end = rest.find(|c: char| !c.is_alphanumeric() && c != '_').unwrap_or(rest.len());
            name = if end > 0 { &rest[..end] } else { name };
            match rest[end..].strip_prefix('(') {
                Some(next) if next.starts_with(|c: char| c.is_ascii_uppercase()) => rest = next,
                _ => return name.to_string(),
            }
        }
    }
}

impl<E: fmt::Display + fmt::Debug> Failure for E {}

fn value(v: f64) -> (f64, Flag) {
    if v.is_nan() {
        (v, Flag::Undefined)
    } else if v.is_infinite() {
        (v, Flag::Infinite)
    } else {
        (v, Flag::Ok)
    }
}

fn missing_artifacts(dataset: &Dataset, layout: &RunLayout, config: &EvalConfig) -> Vec<String> {
    let dets = config.metrics.iter().any(|m| m.needs_detections());
    let mut missing = Vec::new();
    if !layout.record().is_file() {
        missing.push(layout.record().display().to_string());
    }
    for s in &dataset.samples {
        for k in 1..=s.hop_count() {
            let mut check = |p: PathBuf| {
                if !p.is_file() {
                    missing.push(p.display().to_string());
                }
            };
            check(layout.image(&s.id, k));
            if dets {
                check(layout.detections(&s.id, k));
            }
        }
    }
    missing
}

/// Computes every enabled metric for every `(sample, hop)` of the run.
///
/// Missing artifacts abort with [`PipelineError::IncompleteRun`]; metric
/// failures are collected in [`EvalReport::errors`] and leave the run's other
/// values intact.
pub fn evaluate_run(dataset: &Dataset, layout: &RunLayout, config: &EvalConfig, inputs: EvalInputs<'_>) -> Result<EvalReport, PipelineError> {
    config.validate()?;
    let missing = missing_artifacts(dataset, layout, config);
    if !missing.is_empty() {
        return Err(PipelineError::IncompleteRun(missing));
    }
    let record = RunRecord::load(layout)?;
    let dataset_hash = dataset.content_hash()?;
    if record.dataset_hash != dataset_hash {
        return Err(PipelineError::Config(format!("run {} was produced from a different dataset", record.run_id)));
    }

    let builtin;
    let brisque = if config.metrics.contains(&MetricFamily::Brisque) {
        Some(match inputs.brisque_model {
            Some(m) => m,
            None => {
                builtin = SvrModel::builtin();
                &builtin
            }
        })
    } else {
        None
    };
    let no_store = FileStore::empty("none");
    let provider: &dyn EmbeddingProvider = inputs.embeddings.unwrap_or(&no_store);
    let clip = config.metrics.contains(&MetricFamily::Clip).then(|| ClipScorer::new(provider));

    let snapshot = ConfigSnapshot {
        run_id: record.run_id.clone(),
        dataset_hash,
        generation_reproducible: record.config.generation_reproducible(),
        run: record.config.clone(),
        eval: config.clone(),
        brisque_model: brisque.map(|m| m.id.clone()),
        embedding_model: clip.as_ref().map(|c| c.model_id()),
        std_convention: "population".into(),
        corpus_grouping: "all per-hop values of all samples".into(),
        category_grouping: "final-hop value of each sample".into(),
    };

    let shared = Shared { dataset, layout, config, brisque, clip, normalizer: LabelNormalizer::new() };
    let outputs = config.outputs();
    let per_sample: Vec<(Vec<ReportRow>, Vec<ErrorEntry>)> = with_pool(config.jobs, || {
        dataset
            .samples
            .par_iter()
            .map(|s| {
                let mut errors = Vec::new();
                let t = s.hop_count();
                let gt = match sample_reference(&shared, s) {
                    Ok(gt) => Some(gt),
                    Err(e) => {
                        errors.push(ErrorEntry {
                            sample_id: s.id.clone(),
                            hop: None,
                            metric: "reference".into(),
                            kind: e.kind(),
                            error: e.to_string(),
                        });
                        None
                    }
                };
                let mut rows = Vec::with_capacity(t * outputs.len());
                for k in 1..=t {
                    let values = match &gt {
                        Some(gt) => evaluate_hop(&shared, s, gt, k, &mut errors),
                        None => vec![(f64::NAN, Flag::Error); outputs.len()],
                    };
                    debug_assert_eq!(values.len(), outputs.len());
                    let normalized_hop = if t == 1 { 0.0 } else { (k - 1) as f64 / (t - 1) as f64 };
                    for (&metric, (v, flag)) in outputs.iter().zip(values) {
                        rows.push(ReportRow {
                            sample_id: s.id.clone(),
                            category: s.category,
                            hop: k,
                            hops: t,
                            normalized_hop,
                            metric: metric.to_string(),
                            value: (flag == Flag::Ok).then_some(v),
                            flag,
                        });
                    }
                }
                (rows, errors)
            })
            .collect()
    })?;

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (r, e) in per_sample {
        rows.extend(r);
        errors.extend(e);
    }
    EvalReport::from_rows(snapshot, rows, errors)
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    metric: String,
    title: String,
    mean: f64,
    std: f64,
    maximum: f64,
    n: usize,
}

#[derive(Serialize)]
struct AggregateDoc<'a> {
    config: &'a ConfigSnapshot,
    samples: usize,
    rows: usize,
    /// Mean, Std and Maximum per IoU variant over all evaluated hops.
    table: Vec<TableRow>,
    corpus: &'a Aggregation,
    category: &'a Aggregation,
    grid: &'a Aggregation,
    errors: usize,
}

#[derive(Deserialize)]
struct AggregateConfigOnly {
    config: ConfigSnapshot,
}

fn table_rows(report: &EvalReport) -> Vec<TableRow> {
    IouVariant::ALL
        .iter()
        .filter_map(|v| {
            let metric = format!("iou_{}", serde_json::to_value(v).ok()?.as_str()?);
            let row = report.corpus.rows.iter().find(|r| r.metric == metric)?;
            Some(TableRow { metric, title: v.title().into(), mean: row.mean, std: row.std, maximum: row.max, n: row.n })
        })
        .collect()
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>, PipelineError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w).map_err(|e| PipelineError::Config(format!("csv: {e}")))?;
    w.into_inner().map_err(|e| PipelineError::Config(format!("csv: {e}")))
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.csv`, `aggregate.json`, `plotdata.csv` and `errors.json`.
pub fn write_report(report: &EvalReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, PipelineError> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(io_err(out))?;

    let report_csv = csv_bytes(|w| {
        for r in &report.rows {
            w.serialize(r)?;
        }
        if report.rows.is_empty() {
            w.write_record(["sample_id", "category", "hop", "hops", "normalized_hop", "metric", "value", "flag"])?;
        }
        Ok(())
    })?;

    let plot_csv = csv_bytes(|w| {
        w.write_record(["metric", "group", "grid_point", "mean", "std", "max", "n"])?;
        for agg in [&report.corpus, &report.category, &report.grid] {
            for r in &agg.rows {
                w.write_record([
                    r.metric.clone(),
                    r.group.clone(),
                    opt_num(r.grid_point),
                    r.mean.to_string(),
                    r.std.to_string(),
                    r.max.to_string(),
                    r.n.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;

    let samples: BTreeSet<&str> = report.rows.iter().map(|r| r.sample_id.as_str()).collect();
    let doc = AggregateDoc {
        config: &report.snapshot,
        samples: samples.len(),
        rows: report.rows.len(),
        table: table_rows(report),
        corpus: &report.corpus,
        category: &report.category,
        grid: &report.grid,
        errors: report.errors.len(),
    };
    let mut aggregate = serde_json::to_string_pretty(&doc).expect("aggregate serialises");
    aggregate.push('\n');
    let mut errors = serde_json::to_string_pretty(&report.errors).expect("errors serialise");
    errors.push('\n');

    let files = [
        (REPORT_CSV, report_csv),
        (AGGREGATE_JSON, aggregate.into_bytes()),
        (PLOTDATA_CSV, plot_csv),
        (ERRORS_JSON, errors.into_bytes()),
    ];
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let p = out.join(name);
        write_atomic(&p, &bytes)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Loads a report directory written by [`write_report`].
pub fn read_report(dir: impl AsRef<Path>) -> Result<EvalReport, PipelineError> {
    let dir = dir.as_ref();
    let agg_path = dir.join(AGGREGATE_JSON);
    let text = std::fs::read_to_string(&agg_path).map_err(io_err(&agg_path))?;
    let snapshot = serde_json::from_str::<AggregateConfigOnly>(&text)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", agg_path.display())))?
        .config;
    let csv_path = dir.join(REPORT_CSV);
    let mut rdr = csv::Reader::from_path(&csv_path).map_err(|e| PipelineError::Config(format!("{}: {e}", csv_path.display())))?;
    let rows = rdr
        .deserialize()
        .collect::<Result<Vec<ReportRow>, _>>()
        .map_err(|e| PipelineError::Config(format!("{}: {e}", csv_path.display())))?;
    let err_path = dir.join(ERRORS_JSON);
    let errors = match std::fs::read_to_string(&err_path) {
        Ok(t) => serde_json::from_str(&t).map_err(|e| PipelineError::Config(format!("{}: {e}", err_path.display())))?,
        Err(_) => Vec::new(),
    };
    EvalReport::from_rows(snapshot, rows, errors)
}

/// Combines reports over disjoint samples. Refuses reports whose
/// configuration snapshots differ.
pub fn merge_reports(reports: Vec<EvalReport>) -> Result<EvalReport, PipelineError> {
    let mut iter = reports.into_iter();
    let first = iter.next().ok_or_else(|| PipelineError::Config("nothing to merge".into()))?;
    let mut snapshot = first.snapshot;
    let mut rows = first.rows;
    let mut errors = first.errors;
    let mut seen: BTreeSet<String> = rows.iter().map(|r| r.sample_id.clone()).collect();
    for r in iter {
        if !snapshot.mergeable_with(&r.snapshot) {
            return Err(PipelineError::Config(format!(
                "run {} was evaluated with a different configuration than run {}; refusing to merge",
                r.snapshot.run_id, snapshot.run_id
            )));
        }
        let ids: BTreeSet<String> = r.rows.iter().map(|x| x.sample_id.clone()).collect();
        if let Some(dup) = ids.intersection(&seen).next() {
            return Err(PipelineError::Config(format!("sample {dup} appears in more than one report")));
        }
        seen.extend(ids);
        snapshot.run_id = format!("{}+{}", snapshot.run_id, r.snapshot.run_id);
        if snapshot.dataset_hash != r.snapshot.dataset_hash {
            snapshot.dataset_hash = "mixed".into();
        }
        rows.extend(r.rows);
        errors.extend(r.errors);
    }
    EvalReport::from_rows(snapshot, rows, errors)
}
