//! Full-reference computational metrics: MSE, PSNR, UQI and SSIM.
//!
//! All functions take two planes of equal shape and accumulate in `f64`.

use super::MetricError;
use crate::imaging::{filter_valid, gaussian_kernel, Grid, ImagePlane};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which MSE/PSNR formulas to evaluate.
///
/// `LiteralPaper` drops the squaring from the MSE (mean signed difference)
/// and the factor 10 from PSNR. PSNR keeps the squared error internally in
/// both modes so that its logarithm stays defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaMode {
    #[default]
    Standard,
    LiteralPaper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "db", rename_all = "snake_case")]
pub enum PsnrValue {
    Finite(f64),
    Infinite,
}

impl PsnrValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            PsnrValue::Finite(v) => Some(v),
            PsnrValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, PsnrValue::Infinite)
    }
}

impl fmt::Display for PsnrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsnrValue::Finite(v) => write!(f, "{v}"),
            PsnrValue::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UqiMode {
    Global,
    /// 8x8 uniform window, stride 1, averaged over all window positions.
    #[default]
    Windowed8x8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    /// 11x11 Gaussian, sigma 1.5, evaluated at every fully contained position.
    #[default]
    Gaussian11x11Sigma1_5,
    /// Whole-plane statistics, a single window.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub window: SsimWindow,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { k1: 0.01, k2: 0.03, dynamic_range: 255.0, alpha: 1.0, beta: 1.0, gamma: 1.0, window: SsimWindow::default() }
    }
}

impl SsimParams {
    pub fn with_window(window: SsimWindow) -> Self {
        Self { window, ..Self::default() }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn c3(&self) -> f64 {
        self.c2() / 2.0
    }

    fn validate(&self) -> Result<(), MetricError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.k1) && ok(self.k2) && ok(self.dynamic_range)) {
            return Err(MetricError::InvalidParameter(format!(
                "ssim needs k1, k2, L > 0 (got {}, {}, {})",
                self.k1, self.k2, self.dynamic_range
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimBreakdown {
    pub ssim: f64,
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

fn check_shape<T: Scalar>(y: &ImagePlane<T>, yhat: &ImagePlane<T>) -> Result<(), MetricError> {
    if !y.same_shape(yhat) {
        return Err(MetricError::DimensionMismatch {
            left: (y.width(), y.height()),
            right: (yhat.width(), yhat.height()),
        });
    }
    Ok(())
}

fn check_window<T: Scalar>(y: &ImagePlane<T>, side: usize) -> Result<(), MetricError> {
    if y.width() < side || y.height() < side {
        return Err(MetricError::TooSmallForWindow { window: side, width: y.width(), height: y.height() });
    }
    Ok(())
}

/// Mean squared error `(1/MN) sum (Y - Yhat)^2`.
pub fn mse<T: Scalar>(y: &ImagePlane<T>, yhat: &ImagePlane<T>) -> Result<f64, MetricError> {
    mse_with(y, yhat, FormulaMode::Standard)
}

pub fn mse_with<T: Scalar>(y: &ImagePlane<T>, yhat: &ImagePlane<T>, mode: FormulaMode) -> Result<f64, MetricError> {
    check_shape(y, yhat)?;
    let n = y.samples().len() as f64;
    let diffs = y.samples().iter().zip(yhat.samples()).map(|(a, b)| a.as_f64() - b.as_f64());
    let total: f64 = match mode {
        FormulaMode::Standard => diffs.map(|d| d * d).sum(),
        FormulaMode::LiteralPaper => diffs.sum(),
    };
    Ok(total / n)
}

/// Peak signal-to-noise ratio in decibels; [`PsnrValue::Infinite`] when the
/// planes are identical.
pub fn psnr<T: Scalar>(y: &ImagePlane<T>, yhat: &ImagePlane<T>) -> Result<PsnrValue, MetricError> {
    psnr_with(y, yhat, FormulaMode::Standard)
}

pub fn psnr_with<T: Scalar>(y: &ImagePlane<T>, yhat: &ImagePlane<T>, mode: FormulaMode) -> Result<PsnrValue, MetricError> {
    if y.dynamic_range() != yhat.dynamic_range() {
        return Err(MetricError::RangeMismatch(y.dynamic_range(), yhat.dynamic_range()));
    }
    let err = mse(y, yhat)?;
    if err == 0.0 {
        return Ok(PsnrValue::Infinite);
    }
    let r = y.dynamic_range();
    let bels = (r * r / err).log10();
    let db = 10.0 * bels;
    // Derived from the decibel value so the two modes differ by exactly /10.
    Ok(PsnrValue::Finite(match mode {
        FormulaMode::Standard => db,
        FormulaMode::LiteralPaper => db / 10.0,
    }))
}

/// Population moments of a window: means, variances, covariance.
#[derive(Clone, Copy, Debug)]
struct Moments {
    mx: f64,
    my: f64,
    vx: f64,
    vy: f64,
    cxy: f64,
}

fn moments<'a>(pairs: impl Iterator<Item = (f64, f64)> + Clone + 'a, n: f64) -> Moments {
    let (sx, sy) = pairs.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (vx, vy, cxy) = pairs.fold((0.0, 0.0, 0.0), |(a, b, c), (x, y)| {
        let (dx, dy) = (x - mx, y - my);
        (a + dx * dx, b + dy * dy, c + dx * dy)
    });
    Moments { mx, my, vx: vx / n, vy: vy / n, cxy: cxy / n }
}

fn uqi_from_moments(m: Moments) -> f64 {
    let correlation = if m.vx == 0.0 && m.vy == 0.0 {
        1.0
    } else if m.vx == 0.0 || m.vy == 0.0 {
        0.0
    } else {
        m.cxy / (m.vx * m.vy).sqrt()
    };
    let lum_den = m.mx * m.mx + m.my * m.my;
    let luminance = if lum_den == 0.0 { 1.0 } else { 2.0 * m.mx * m.my / lum_den };
    let con_den = m.vx + m.vy;
    let contrast = if con_den == 0.0 { 1.0 } else { 2.0 * (m.vx * m.vy).sqrt() / con_den };
    (correlation * luminance * contrast).clamp(-1.0, 1.0)
}

/// Universal quality index: correlation x luminance x contrast.
pub fn uqi<T: Scalar>(y: &ImagePlane<T>, yhat: &ImagePlane<T>, mode: UqiMode) -> Result<f64, MetricError> {
    check_shape(y, yhat)?;
    let (a, b) = (y.samples(), yhat.samples());
    match mode {
        UqiMode::Global => {
            let pairs = a.iter().zip(b).map(|(x, z)| (x.as_f64(), z.as_f64()));
            Ok(uqi_from_moments(moments(pairs, a.len() as f64)))
        }
        UqiMode::Windowed8x8 => {
            const WIN: usize = 8;
            check_window(y, WIN)?;
            let (w, h) = (y.width(), y.height());
            let (a, b) = (y.to_f64_grid().into_data(), yhat.to_f64_grid().into_data());
            let mut total = 0.0;
            let mut count = 0usize;
            for oy in 0..=h - WIN {
                for ox in 0..=w - WIN {
                    let pairs = (0..WIN)
                        .flat_map(move |dy| (0..WIN).map(move |dx| (oy + dy) * w + ox + dx))
                        .map(|i| (a[i], b[i]));
                    total += uqi_from_moments(moments(pairs, (WIN * WIN) as f64));
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
    }
}

#[inline]
fn signed_pow(v: f64, e: f64) -> f64 {
    if e == 1.0 {
        v
    } else {
        v.signum() * v.abs().powf(e)
    }
}

struct Lcs {
    l: f64,
    c: f64,
    s: f64,
}

fn lcs(m: Moments, c1: f64, c2: f64, c3: f64) -> Lcs {
    let (sx, sy) = (m.vx.max(0.0).sqrt(), m.vy.max(0.0).sqrt());
    Lcs {
        l: (2.0 * m.mx * m.my + c1) / (m.mx * m.mx + m.my * m.my + c1),
        c: (2.0 * sx * sy + c2) / (m.vx.max(0.0) + m.vy.max(0.0) + c2),
        s: (m.cxy + c3) / (sx * sy + c3),
    }
}

/// Structural similarity with its luminance, contrast and structure
/// components, each averaged over windows.
pub fn ssim<T: Scalar>(y: &ImagePlane<T>, yhat: &ImagePlane<T>, p: &SsimParams) -> Result<SsimBreakdown, MetricError> {
    check_shape(y, yhat)?;
    p.validate()?;
    let (c1, c2, c3) = (p.c1(), p.c2(), p.c3());
    let combine = |t: &Lcs| signed_pow(t.l, p.alpha) * signed_pow(t.c, p.beta) * signed_pow(t.s, p.gamma);
    match p.window {
        SsimWindow::Global => {
            let (a, b) = (y.samples(), yhat.samples());
            let pairs = a.iter().zip(b).map(|(x, z)| (x.as_f64(), z.as_f64()));
            let t = lcs(moments(pairs, a.len() as f64), c1, c2, c3);
            Ok(SsimBreakdown { ssim: combine(&t), luminance: t.l, contrast: t.c, structure: t.s })
        }
        SsimWindow::Gaussian11x11Sigma1_5 => {
            check_window(y, 11)?;
            let kernel = gaussian_kernel(11, 1.5);
            let (ga, gb) = (y.to_f64_grid(), yhat.to_f64_grid());
            let product = |f: &dyn Fn(f64, f64) -> f64| -> Grid<f64> {
                let data = ga.data().iter().zip(gb.data()).map(|(&u, &v)| f(u, v)).collect();
                Grid::new(ga.width(), ga.height(), data).expect("same shape")
            };
            let mu_x = filter_valid(&ga, &kernel);
            let mu_y = filter_valid(&gb, &kernel);
            let xx = filter_valid(&product(&|u, _| u * u), &kernel);
            let yy = filter_valid(&product(&|_, v| v * v), &kernel);
            let xy = filter_valid(&product(&|u, v| u * v), &kernel);
            let n = mu_x.data().len() as f64;
            let (mut ssim, mut l, mut c, mut s) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..mu_x.data().len() {
                let (mx, my) = (mu_x.data()[i], mu_y.data()[i]);
                let m = Moments {
                    mx,
                    my,
                    vx: xx.data()[i] - mx * mx,
                    vy: yy.data()[i] - my * my,
                    cxy: xy.data()[i] - mx * my,
                };
                let t = lcs(m, c1, c2, c3);
                ssim += combine(&t);
                l += t.l;
                c += t.c;
                s += t.s;
            }
            Ok(SsimBreakdown { ssim: ssim / n, luminance: l / n, contrast: c / n, structure: s / n })
        }
    }
}
