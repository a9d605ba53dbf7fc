//! Per-hop metric series, normalisation onto a common hop axis and
//! cross-sample aggregation.
//!
//! Values are `f64`. A NaN marks an undefined value (for instance Common-IoU
//! with no shared label) and `+inf` an infinite PSNR; neither enters an
//! aggregate, both are counted.

use crate::dataset::Category;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_GRID_SIZE: usize = 11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopError {
    #[error("metric series for sample {0:?} has no hops")]
    EmptySeries(String),
    #[error("grid size must be at least 2, got {0}")]
    InvalidGrid(usize),
    #[error("series {sample:?}/{metric}: hop indices must be 1..T in order")]
    NonContiguous { sample: String, metric: String },
    #[error("no finite values for {metric} in group {group}")]
    EmptyGroup { metric: String, group: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSeries {
    pub sample_id: String,
    pub metric_name: String,
    pub category: Option<Category>,
    /// `(K, value)` for K = 1..T.
    pub per_hop: Vec<(usize, f64)>,
    /// `(grid point, value)`; empty until [`normalize_hops`] runs.
    pub normalized: Vec<(f64, f64)>,
}

impl MetricSeries {
    pub fn new(sample_id: impl Into<String>, metric_name: impl Into<String>, category: Option<Category>, values: Vec<f64>) -> Self {
        Self {
            sample_id: sample_id.into(),
            metric_name: metric_name.into(),
            category,
            per_hop: values.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect(),
            normalized: Vec::new(),
        }
    }

    pub fn hop_count(&self) -> usize {
        self.per_hop.len()
    }

    pub fn final_value(&self) -> Option<f64> {
        self.per_hop.last().map(|p| p.1)
    }
}

/// The grid `{0, 1/(g-1), ..., 1}`.
pub fn grid_points(grid_size: usize) -> Result<Vec<f64>, HopError> {
    if grid_size < 2 {
        return Err(HopError::InvalidGrid(grid_size));
    }
    let d = (grid_size - 1) as f64;
    Ok((0..grid_size).map(|j| j as f64 / d).collect())
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        return f64::NAN;
    }
    if a.is_infinite() || b.is_infinite() {
        return match (a.is_infinite(), b.is_infinite()) {
            (true, true) if a != b => f64::NAN,
            (true, _) => a,
            _ => b,
        };
    }
    let v = a + t * (b - a);
    v.clamp(a.min(b), a.max(b))
}

/// Resamples `series` onto a uniform grid of `grid_size` points, hop K of T
/// sitting at `(K-1)/(T-1)`.
///
/// Positions are computed as integer ratios, so grid points that coincide
/// with a hop reproduce its value exactly.
pub fn normalize_hops(series: &MetricSeries, grid_size: usize) -> Result<MetricSeries, HopError> {
    let points = grid_points(grid_size)?;
    let t = series.per_hop.len();
    if t == 0 {
        return Err(HopError::EmptySeries(series.sample_id.clone()));
    }
    if series.per_hop.iter().enumerate().any(|(i, &(k, _))| k != i + 1) {
        return Err(HopError::NonContiguous { sample: series.sample_id.clone(), metric: series.metric_name.clone() });
    }
    let v: Vec<f64> = series.per_hop.iter().map(|p| p.1).collect();
    let den = grid_size - 1;
    let normalized = points
        .iter()
        .enumerate()
        .map(|(j, &g)| {
            if t == 1 {
                return (g, v[0]);
            }
            let num = j * (t - 1);
            let (k0, rem) = (num / den, num % den);
            let value = if rem == 0 { v[k0] } else { lerp(v[k0], v[k0 + 1], rem as f64 / den as f64) };
            (g, value)
        })
        .collect();
    Ok(MetricSeries { normalized, ..series.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    /// Every per-hop value of every sample.
    Corpus,
    /// Final-hop value of each sample, grouped by category.
    Category,
    /// Normalised values at each grid point.
    GridPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub metric: String,
    pub group: String,
    pub grid_point: Option<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub n: usize,
    pub excluded_infinite: usize,
    pub excluded_undefined: usize,
}

/// A group whose values were all infinite or undefined.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedGroup {
    pub metric: String,
    pub group: String,
    pub grid_point: Option<f64>,
    pub excluded_infinite: usize,
    pub excluded_undefined: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Aggregation {
    pub rows: Vec<AggregateRow>,
    pub skipped: Vec<SkippedGroup>,
}

#[derive(Default)]
struct Bucket {
    group: String,
    grid_point: Option<f64>,
    values: Vec<f64>,
}

/// `(mean, population std, max)` of a non-empty finite sample.
pub fn summary_stats(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt(), max)
}

/// Groups series by metric and `group_by`, keeping groups with no finite
/// values in [`Aggregation::skipped`].
pub fn aggregate_lenient(all: &[MetricSeries], group_by: GroupBy) -> Aggregation {
    // (metric, ordering key) -> bucket
    let mut buckets: BTreeMap<(String, usize), Bucket> = BTreeMap::new();
    for s in all {
        let mut put = |key: usize, group: String, grid_point: Option<f64>, v: f64| {
            let b = buckets.entry((s.metric_name.clone(), key)).or_insert_with(|| Bucket { group, grid_point, values: Vec::new() });
            b.values.push(v);
        };
        match group_by {
            GroupBy::Corpus => s.per_hop.iter().for_each(|&(_, v)| put(0, "corpus".into(), None, v)),
            GroupBy::Category => {
                if let (Some(c), Some(v)) = (s.category, s.final_value()) {
                    put(c as usize, c.to_string(), None, v);
                }
            }
            GroupBy::GridPoint => {
                s.normalized.iter().enumerate().for_each(|(j, &(g, v))| put(j, "grid".into(), Some(g), v));
            }
        }
    }
    let mut out = Aggregation::default();
    for ((metric, _), b) in buckets {
        let excluded_infinite = b.values.iter().filter(|v| v.is_infinite()).count();
        let excluded_undefined = b.values.iter().filter(|v| v.is_nan()).count();
        let finite: Vec<f64> = b.values.into_iter().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            out.skipped.push(SkippedGroup { metric, group: b.group, grid_point: b.grid_point, excluded_infinite, excluded_undefined });
            continue;
        }
        let (mean, std, max) = summary_stats(&finite);
        out.rows.push(AggregateRow {
            metric,
            group: b.group,
            grid_point: b.grid_point,
            mean,
            std,
            max,
            n: finite.len(),
            excluded_infinite,
            excluded_undefined,
        });
    }
    out
}

/// Like [`aggregate_lenient`] but fails on the first group without a finite
/// value, or when there is nothing to aggregate.
pub fn aggregate(all: &[MetricSeries], group_by: GroupBy) -> Result<Vec<AggregateRow>, HopError> {
    let agg = aggregate_lenient(all, group_by);
    if let Some(s) = agg.skipped.first() {
        return Err(HopError::EmptyGroup { metric: s.metric.clone(), group: s.group.clone() });
    }
    if agg.rows.is_empty() {
        return Err(HopError::EmptyGroup { metric: String::new(), group: format!("{group_by:?}").to_lowercase() });
    }
    Ok(agg.rows)
}
