//! BRISQUE no-reference quality score.
//!
//! The plane is transformed into mean-subtracted contrast-normalised (MSCN)
//! coefficients; a generalised Gaussian is fitted to the coefficients and an
//! asymmetric generalised Gaussian to each of four neighbour products
//! (horizontal, vertical and both diagonals). The same is repeated on a
//! half-scale copy, giving 36 features that an RBF support-vector regressor
//! maps to a score. Lower scores mean better perceptual quality.
//!
//! Shape parameters are found by moment matching against a precomputed
//! table of gamma-function ratios over shapes `0.2..=10` in steps of `1e-3`,
//! interpolated linearly between table nodes.

use crate::imaging::{downsample_half, filter_reflect, gaussian_kernel, Grid, ImagePlane};
use crate::scalar::Scalar;
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

pub const FEATURE_COUNT: usize = 36;

/// Identifier reported for the bundled model.
pub const BUILTIN_MODEL_ID: &str = "builtin:brisque-live";

/// Environment variable naming a model file that overrides the bundled one.
pub const MODEL_ENV: &str = "CGVM_BRISQUE_MODEL";

const BUILTIN_MODEL: &str = include_str!("../../models/brisque_live.txt");

const MSCN_WINDOW: usize = 7;
const MSCN_SIGMA: f64 = 7.0 / 6.0;
const MSCN_C: f64 = 1.0;
const MIN_FEATURE_SIDE: usize = 16;
const SCORE_CLAMP: (f64, f64) = (0.0, 150.0);

/// Neighbour offsets `(dy, dx)` for the pairwise products.
const SHIFTS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (-1, 1)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrisqueError {
    #[error("{width}x{height} plane is smaller than the required {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("distribution fit is degenerate: {0}")]
    DegenerateFit(String),
    #[error("cannot load BRISQUE model: {0}")]
    ModelLoad(String),
}

/// The 36-value feature vector, two scales of
/// `[ggd shape, ggd variance]` followed by four
/// `[aggd shape, aggd mean, left variance, right variance]` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BrisqueFeatures {
    pub values: [f64; FEATURE_COUNT],
}

/// MSCN coefficients `(I - mu) / (sigma + 1)` over a 7x7 Gaussian window
/// (sigma 7/6) with reflect-101 borders.
pub fn mscn<T: Scalar>(plane: &ImagePlane<T>) -> Result<Grid<f64>, BrisqueError> {
    if plane.width() < MSCN_WINDOW || plane.height() < MSCN_WINDOW {
        return Err(BrisqueError::TooSmall { width: plane.width(), height: plane.height(), min: MSCN_WINDOW });
    }
    Ok(mscn_grid(&plane.to_f64_grid()))
}

fn mscn_grid(img: &Grid<f64>) -> Grid<f64> {
    let kernel = gaussian_kernel(MSCN_WINDOW, MSCN_SIGMA);
    let mu = filter_reflect(img, &kernel);
    let sq = img.map(|v| v * v);
    let mu_sq = filter_reflect(&sq, &kernel);
    let data = img
        .data()
        .iter()
        .zip(mu.data())
        .zip(mu_sq.data())
        .map(|((&i, &m), &m2)| {
            let sigma = (m2 - m * m).abs().sqrt();
            (i - m) / (sigma + MSCN_C)
        })
        .collect();
    Grid::new(img.width(), img.height(), data).expect("shape preserved")
}

struct ShapeTables {
    shapes: Vec<f64>,
    /// Gamma(1/a) Gamma(3/a) / Gamma(2/a)^2, decreasing in a.
    ggd: Vec<f64>,
    /// Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)), increasing in a.
    aggd: Vec<f64>,
}

fn tables() -> &'static ShapeTables {
    static TABLES: OnceLock<ShapeTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let shapes: Vec<f64> = (200..=10_000).map(|i| f64::from(i) / 1000.0).collect();
        let g = libm::tgamma;
        let ggd = shapes.iter().map(|&a| g(1.0 / a) * g(3.0 / a) / g(2.0 / a).powi(2)).collect();
        let aggd = shapes.iter().map(|&a| g(2.0 / a).powi(2) / (g(1.0 / a) * g(3.0 / a))).collect();
        ShapeTables { shapes, ggd, aggd }
    })
}

/// Inverts a monotone ratio table by linear interpolation, clamping to the
/// table ends.
fn invert_ratio(ratios: &[f64], shapes: &[f64], target: f64) -> f64 {
    let increasing = ratios[0] < ratios[ratios.len() - 1];
    let key = |r: f64| if increasing { r } else { -r };
    let t = key(target);
    let n = ratios.len();
    if t <= key(ratios[0]) {
        return shapes[0];
    }
    if t >= key(ratios[n - 1]) {
        return shapes[n - 1];
    }
    // first index whose key exceeds the target
    let hi = ratios.partition_point(|&r| key(r) <= t);
    let lo = hi - 1;
    let (x0, x1) = (key(ratios[lo]), key(ratios[hi]));
    shapes[lo] + (t - x0) * (shapes[hi] - shapes[lo]) / (x1 - x0)
}

fn fit_ggd(values: &[f64]) -> Result<(f64, f64), BrisqueError> {
    let n = values.len() as f64;
    let sigma_sq = values.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    if mean_abs.is_nan() || mean_abs <= 1e-9 || !sigma_sq.is_finite() {
        return Err(BrisqueError::DegenerateFit("MSCN coefficients are all zero".into()));
    }
    let rho = sigma_sq / (mean_abs * mean_abs);
    let t = tables();
    Ok((invert_ratio(&t.ggd, &t.shapes, rho), sigma_sq))
}

fn fit_aggd(values: &[f64]) -> Result<[f64; 4], BrisqueError> {
    let (mut left_sum, mut left_n, mut right_sum, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &v in values {
        if v < 0.0 {
            left_sum += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sum += v * v;
            right_n += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    if left_n == 0 || right_n == 0 {
        return Err(BrisqueError::DegenerateFit("neighbour products are one-signed".into()));
    }
    let n = values.len() as f64;
    let left_std = (left_sum / left_n as f64).sqrt();
    let right_std = (right_sum / right_n as f64).sqrt();
    let gamma_hat = left_std / right_std;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let r_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0) / (gamma_hat * gamma_hat + 1.0).powi(2);
    if !r_norm.is_finite() {
        return Err(BrisqueError::DegenerateFit("non-finite AGGD moment ratio".into()));
    }
    let t = tables();
    let shape = invert_ratio(&t.aggd, &t.shapes, r_norm);
    let g = libm::tgamma;
    let mean = (right_std - left_std) * (g(2.0 / shape) / g(1.0 / shape)) * (g(1.0 / shape) / g(3.0 / shape)).sqrt();
    Ok([shape, mean, left_std * left_std, right_std * right_std])
}

fn neighbour_products(coeffs: &Grid<f64>, dy: isize, dx: isize) -> Vec<f64> {
    let (w, h) = (coeffs.width(), coeffs.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        // circular shift: the neighbour of (x, y) is (x - dx, y - dy) wrapped
        let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
        for x in 0..w {
            let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
            out.push(coeffs.get(x, y) * coeffs.get(sx, sy));
        }
    }
    out
}

/// Extracts the 36 BRISQUE features.
pub fn brisque_features<T: Scalar>(plane: &ImagePlane<T>) -> Result<BrisqueFeatures, BrisqueError> {
    if plane.width() < MIN_FEATURE_SIDE || plane.height() < MIN_FEATURE_SIDE {
        return Err(BrisqueError::TooSmall { width: plane.width(), height: plane.height(), min: MIN_FEATURE_SIDE });
    }
    let mut img = plane.to_f64_grid();
    let (lo, hi) = img.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return Err(BrisqueError::DegenerateFit("constant image".into()));
    }
    let mut values = [0.0; FEATURE_COUNT];
    let mut k = 0;
    for scale in 0..2 {
        let coeffs = mscn_grid(&img);
        let (shape, var) = fit_ggd(coeffs.data())?;
        values[k] = shape;
        values[k + 1] = var;
        k += 2;
        for (dy, dx) in SHIFTS {
            let fit = fit_aggd(&neighbour_products(&coeffs, dy, dx))?;
            values[k..k + 4].copy_from_slice(&fit);
            k += 4;
        }
        if scale == 0 {
            img = downsample_half(&img);
        }
    }
    debug_assert_eq!(k, FEATURE_COUNT);
    Ok(BrisqueFeatures { values })
}

/// Epsilon-SVR with an RBF kernel over range-scaled features.
///
/// Text format, blank lines and `#` comments ignored:
///
/// ```text
/// GAMMA
/// 0.05
/// RHO
/// -153.591
/// RANGES
/// <min> <max>      (36 lines)
/// SV
/// <coef> <v1> ... <v36>   (one line per support vector)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SvrModel {
    pub id: String,
    pub gamma: f64,
    pub rho: f64,
    pub ranges: Vec<(f64, f64)>,
    pub coefficients: Vec<f64>,
    pub support_vectors: Vec<[f64; FEATURE_COUNT]>,
}

impl SvrModel {
    /// The model converted from the public LIVE release.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_MODEL, BUILTIN_MODEL_ID).expect("bundled model parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BrisqueError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BrisqueError::ModelLoad(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// `path` if given, else `$CGVM_BRISQUE_MODEL`, else the bundled model.
    pub fn resolve(path: Option<&Path>) -> Result<Self, BrisqueError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(MODEL_ENV) {
                Some(p) if !p.is_empty() => Self::load(p),
                _ => Ok(Self::builtin()),
            },
        }
    }

    pub fn parse(text: &str, id: &str) -> Result<Self, BrisqueError> {
        let err = |m: String| BrisqueError::ModelLoad(format!("{id}: {m}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| err(format!("bad number {s:?}: {e}")));
        let expect = |lines: &mut dyn Iterator<Item = &str>, name: &str| -> Result<(), BrisqueError> {
            match lines.next() {
                Some(l) if l == name => Ok(()),
                other => Err(err(format!("expected section {name}, found {other:?}"))),
            }
        };
        expect(&mut lines, "GAMMA")?;
        let gamma = parse_f(lines.next().ok_or_else(|| err("missing GAMMA value".into()))?)?;
        expect(&mut lines, "RHO")?;
        let rho = parse_f(lines.next().ok_or_else(|| err("missing RHO value".into()))?)?;
        expect(&mut lines, "RANGES")?;
        let mut ranges = Vec::with_capacity(FEATURE_COUNT);
        for i in 0..FEATURE_COUNT {
            let line = lines.next().ok_or_else(|| err(format!("RANGES has only {i} rows")))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(err(format!("range row {i} needs two values")));
            }
            let (lo, hi) = (parse_f(parts[0])?, parse_f(parts[1])?);
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(err(format!("range row {i} has min >= max")));
            }
            ranges.push((lo, hi));
        }
        expect(&mut lines, "SV")?;
        let mut coefficients = Vec::new();
        let mut support_vectors = Vec::new();
        for line in lines {
            let nums = line.split_whitespace().map(parse_f).collect::<Result<Vec<_>, _>>()?;
            if nums.len() != FEATURE_COUNT + 1 {
                return Err(err(format!("support vector row has {} values, expected {}", nums.len(), FEATURE_COUNT + 1)));
            }
            coefficients.push(nums[0]);
            let mut sv = [0.0; FEATURE_COUNT];
            sv.copy_from_slice(&nums[1..]);
            support_vectors.push(sv);
        }
        if support_vectors.is_empty() {
            return Err(err("no support vectors".into()));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(err(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { id: id.to_string(), gamma, rho, ranges, coefficients, support_vectors })
    }

    /// Maps raw features to `[-1, 1]` using the model's ranges.
    pub fn scale(&self, f: &BrisqueFeatures) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for (o, (v, (lo, hi))) in out.iter_mut().zip(f.values.iter().zip(&self.ranges)) {
            *o = -1.0 + 2.0 * (v - lo) / (hi - lo);
        }
        out
    }

    /// Raw regression output, unclamped.
    pub fn predict(&self, f: &BrisqueFeatures) -> f64 {
        let x = self.scale(f);
        let sum: f64 = self
            .coefficients
            .iter()
            .zip(&self.support_vectors)
            .map(|(c, sv)| {
                let d2: f64 = sv.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                c * (-self.gamma * d2).exp()
            })
            .sum();
        sum - self.rho
    }
}

/// BRISQUE score clamped to `[0, 150]`.
pub fn brisque_score<T: Scalar>(plane: &ImagePlane<T>, model: &SvrModel) -> Result<f64, BrisqueError> {
    let features = brisque_features(plane)?;
    Ok(model.predict(&features).clamp(SCORE_CLAMP.0, SCORE_CLAMP.1))
}
