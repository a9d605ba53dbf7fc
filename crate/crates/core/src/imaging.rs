//! Image decoding, luma conversion, resampling and the preprocessing
//! standardization consumed by every metric.
//!
//! Two raster types live here:
//!
//! * [`RgbImage`] is the decoded 8-bit source form of an image file.
//! * [`ImagePlane`] is a single floating plane with a declared dynamic range
//!   `R`; all pixel metrics operate on it.
//!
//! [`Grid`] is the unconstrained row-major container underneath both, used for
//! intermediate fields (filtered maps, MSCN coefficients) whose values may
//! leave `[0, R]`.

use crate::scalar::Scalar;
use image::{DynamicImage, ImageEncoder};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Default side length for [`standardize`].
pub const DEFAULT_SIDE: u32 = 512;

/// Dynamic range of 8-bit samples.
pub const RANGE_8BIT: f64 = 255.0;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("failed to decode {path}: {cause}")]
    Decode { path: PathBuf, cause: String },
    #[error("failed to encode png: {0}")]
    Encode(String),
    #[error("invalid standardization side {0} (must be at least 8)")]
    InvalidSide(u32),
    #[error("sample buffer of length {len} does not match {width}x{height}")]
    LengthMismatch { width: usize, height: usize, len: usize },
    #[error("sample {index} = {value} outside [0, {range}]")]
    OutOfRange { index: usize, value: f64, range: f64 },
    #[error("dynamic range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("image must have non-zero dimensions")]
    Empty,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major 2-D array without value constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::LengthMismatch { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Single-plane floating raster with dynamic range `R`.
///
/// Invariant: every sample is finite and lies in `[0, R]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane<T> {
    grid: Grid<T>,
    range: f64,
}

impl<T: Scalar> ImagePlane<T> {
    pub fn new(width: usize, height: usize, samples: Vec<T>, range: f64) -> Result<Self, ImageError> {
        Self::from_grid(Grid::new(width, height, samples)?, range)
    }

    pub fn from_grid(grid: Grid<T>, range: f64) -> Result<Self, ImageError> {
        if !(range.is_finite() && range > 0.0) {
            return Err(ImageError::InvalidRange(range));
        }
        if grid.width == 0 || grid.height == 0 {
            return Err(ImageError::Empty);
        }
        for (index, v) in grid.data.iter().enumerate() {
            let value = v.as_f64();
            if !value.is_finite() || !(0.0..=range).contains(&value) {
                return Err(ImageError::OutOfRange { index, value, range });
            }
        }
        Ok(Self { grid, range })
    }

    /// Builds an 8-bit-range plane from a closure, clamping into `[0, 255]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let grid = Grid::from_fn(width, height, |x, y| T::from_f64_lossy(f(x, y).clamp(0.0, RANGE_8BIT)));
        Self { grid, range: RANGE_8BIT }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height
    }

    #[inline]
    pub fn dynamic_range(&self) -> f64 {
        self.range
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y).as_f64()
    }

    #[inline]
    pub fn samples(&self) -> &[T] {
        self.grid.data()
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// Copies the samples into an `f64` grid.
    pub fn to_f64_grid(&self) -> Grid<f64> {
        self.grid.map(|v| v.as_f64())
    }

    /// Converts storage precision.
    pub fn cast<U: Scalar>(&self) -> ImagePlane<U> {
        ImagePlane { grid: self.grid.map(|v| U::from_f64_lossy(v.as_f64())), range: self.range }
    }

    pub fn same_shape(&self, other: &ImagePlane<T>) -> bool {
        self.width() == other.width() && self.height() == other.height()
    }
}

/// Decoded 8-bit RGB raster, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        let (w, h) = (width as usize, height as usize);
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        if data.len() != 3 * w * h {
            return Err(ImageError::LengthMismatch { width: w, height: h, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: u32, y: u32, px: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Decodes a PNG or JPEG file. Alpha is composited over white and 16-bit
/// samples are rescaled to 8 bits.
pub fn decode(path: impl AsRef<Path>) -> Result<RgbImage, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io { path: path.to_path_buf(), source })?;
    decode_bytes(&bytes).map_err(|e| match e {
        ImageError::Decode { cause, .. } => ImageError::Decode { path: path.to_path_buf(), cause },
        other => other,
    })
}

/// In-memory variant of [`decode`].
pub fn decode_bytes(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let dynimg = image::load_from_memory(bytes)
        .map_err(|e| ImageError::Decode { path: PathBuf::from("<memory>"), cause: e.to_string() })?;
    Ok(flatten(&dynimg))
}

fn flatten(img: &DynamicImage) -> RgbImage {
    let rgba = img.to_rgba16();
    let (w, h) = rgba.dimensions();
    let mut data = Vec::with_capacity(3 * w as usize * h as usize);
    for px in rgba.pixels() {
        let a = f64::from(px[3]) / 65535.0;
        for c in &px.0[..3] {
            let v = f64::from(*c) / 65535.0 * 255.0;
            let composited = v * a + 255.0 * (1.0 - a);
            data.push(composited.round().clamp(0.0, 255.0) as u8);
        }
    }
    RgbImage { width: w, height: h, data }
}

/// Encodes to PNG bytes (8-bit RGB, default compression).
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&img.data, img.width, img.height, image::ExtendedColorType::Rgb8)
        .map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(out)
}

pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|source| ImageError::Io { path: path.to_path_buf(), source })
}

/// BT.601 luma, `0.299 R + 0.587 G + 0.114 B`, range `[0, 255]`.
pub fn to_luma<T: Scalar>(img: &RgbImage) -> ImagePlane<T> {
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            let (r, g, b) = (f64::from(px[0]), f64::from(px[1]), f64::from(px[2]));
            let lo = r.min(g).min(b);
            let hi = r.max(g).max(b);
            // clamp absorbs the rounding of coefficients that sum to 1
            T::from_f64_lossy((0.299 * r + 0.587 * g + 0.114 * b).clamp(lo, hi))
        })
        .collect();
    ImagePlane {
        grid: Grid { width: img.width as usize, height: img.height as usize, data },
        range: RANGE_8BIT,
    }
}

/// Bilinear, non-aspect-preserving resize to `side x side`.
pub fn standardize(img: &RgbImage, side: u32) -> Result<RgbImage, ImageError> {
    if side < 8 {
        return Err(ImageError::InvalidSide(side));
    }
    if img.width == side && img.height == side {
        return Ok(img.clone());
    }
    let (w, h) = (img.width as usize, img.height as usize);
    let n = side as usize;
    let sx = w as f64 / n as f64;
    let sy = h as f64 / n as f64;
    let mut out = vec![0u8; 3 * n * n];
    for c in 0..3 {
        let channel = Grid::from_fn(w, h, |x, y| f64::from(img.data[3 * (y * w + x) + c]));
        let resized = resample_bilinear(&channel, n, n, sx, sy);
        for (i, v) in resized.data.iter().enumerate() {
            out[3 * i + c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(RgbImage { width: side, height: side, data: out })
}

/// Bilinear resampling with half-pixel centres and edge clamping:
/// destination `d` samples source coordinate `(d + 0.5) * scale - 0.5`.
pub fn resample_bilinear(src: &Grid<f64>, dst_w: usize, dst_h: usize, scale_x: f64, scale_y: f64) -> Grid<f64> {
    let (w, h) = (src.width, src.height);
    let axis = |d: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let f = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, f - i0 as f64)
    };
    let xs: Vec<_> = (0..dst_w).map(|d| axis(d, scale_x, w)).collect();
    let ys: Vec<_> = (0..dst_h).map(|d| axis(d, scale_y, h)).collect();
    Grid::from_fn(dst_w, dst_h, |x, y| {
        let (x0, x1, tx) = xs[x];
        let (y0, y1, ty) = ys[y];
        let top = src.get(x0, y0) * (1.0 - tx) + src.get(x1, y0) * tx;
        let bottom = src.get(x0, y1) * (1.0 - tx) + src.get(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    })
}

/// Bilinear downsample by exactly one half; odd trailing rows/columns are dropped.
pub fn downsample_half(src: &Grid<f64>) -> Grid<f64> {
    resample_bilinear(src, src.width / 2, src.height / 2, 2.0, 2.0)
}

/// Normalised 1-D Gaussian taps of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - half;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Reflect-101 index: `... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...`.
#[inline]
fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Separable correlation with a symmetric kernel, same-size output,
/// reflect-101 borders.
pub fn filter_reflect(src: &Grid<f64>, kernel: &[f64]) -> Grid<f64> {
    let (w, h) = (src.width, src.height);
    let half = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                acc += t * row[reflect101(x as isize + k as isize - half, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &t) in kernel.iter().enumerate() {
            let sy = reflect101(y as isize + k as isize - half, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    Grid { width: w, height: h, data: out }
}

/// Separable correlation restricted to positions where the kernel fits
/// entirely ("valid" mode). Output is `(w - k + 1) x (h - k + 1)`.
pub fn filter_valid(src: &Grid<f64>, kernel: &[f64]) -> Grid<f64> {
    let k = kernel.len();
    let (w, h) = (src.width, src.height);
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = kernel.iter().zip(&row[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (j, &t) in kernel.iter().enumerate() {
            let src_row = &tmp[(y + j) * ow..(y + j + 1) * ow];
            let dst_row = &mut out[y * ow..(y + 1) * ow];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    Grid { width: ow, height: oh, data: out }
}

/// Gaussian blur with standard deviation `sigma` (taps out to `ceil(3 sigma)`),
/// reflect-101 borders. `sigma == 0` returns the input unchanged.
pub fn gaussian_blur<T: Scalar>(plane: &ImagePlane<T>, sigma: f64) -> ImagePlane<T> {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let kernel = gaussian_kernel(2 * radius + 1, sigma);
    let blurred = filter_reflect(&plane.to_f64_grid(), &kernel);
    let range = plane.range;
    ImagePlane { grid: blurred.map(|v| T::from_f64_lossy(v.clamp(0.0, range))), range }
}
