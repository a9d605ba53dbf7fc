//! Independent, deliberately naive re-statements of the metric definitions.

use cgvm_core::imaging::ImagePlane;
use cgvm_core::metrics::computational::{SsimWindow, UqiMode};
use cgvm_core::metrics::element::{iou_box, BoundingBox};

fn px(p: &ImagePlane<f64>) -> Vec<Vec<f64>> {
    (0..p.height()).map(|y| (0..p.width()).map(|x| p.get(x, y)).collect()).collect()
}

pub fn naive_mse(a: &ImagePlane<f64>, b: &ImagePlane<f64>) -> f64 {
    let (a, b) = (px(a), px(b));
    let mut sum = 0.0;
    let mut n = 0.0;
    for y in 0..a.len() {
        for x in 0..a[0].len() {
            let d = a[y][x] - b[y][x];
            sum += d * d;
            n += 1.0;
        }
    }
    sum / n
}

/// Weighted window statistics; `w[j][i]` sums to one.
fn window_stats(a: &[Vec<f64>], b: &[Vec<f64>], ox: usize, oy: usize, w: &[Vec<f64>]) -> (f64, f64, f64, f64, f64) {
    let (mut mx, mut my) = (0.0, 0.0);
    for j in 0..w.len() {
        for i in 0..w[0].len() {
            mx += w[j][i] * a[oy + j][ox + i];
            my += w[j][i] * b[oy + j][ox + i];
        }
    }
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for j in 0..w.len() {
        for i in 0..w[0].len() {
            let dx = a[oy + j][ox + i] - mx;
            let dy = b[oy + j][ox + i] - my;
            vx += w[j][i] * dx * dx;
            vy += w[j][i] * dy * dy;
            cxy += w[j][i] * dx * dy;
        }
    }
    (mx, my, vx, vy, cxy)
}

fn uniform(wd: usize, ht: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / (wd * ht) as f64; wd]; ht]
}

fn gaussian_window() -> Vec<Vec<f64>> {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let mut w: Vec<Vec<f64>> = g.iter().map(|a| g.iter().map(|b| a * b).collect()).collect();
    let total: f64 = w.iter().flatten().sum();
    w.iter_mut().flatten().for_each(|v| *v /= total);
    w
}

fn q_index(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    4.0 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my))
}

pub fn naive_uqi(a: &ImagePlane<f64>, b: &ImagePlane<f64>, mode: UqiMode) -> f64 {
    let (pa, pb) = (px(a), px(b));
    let (w, h) = (a.width(), a.height());
    match mode {
        UqiMode::Global => {
            let (mx, my, vx, vy, cxy) = window_stats(&pa, &pb, 0, 0, &uniform(w, h));
            q_index(mx, my, vx, vy, cxy)
        }
        UqiMode::Windowed8x8 => {
            let win = uniform(8, 8);
            let mut total = 0.0;
            let mut n = 0.0;
            for oy in 0..=h - 8 {
                for ox in 0..=w - 8 {
                    let (mx, my, vx, vy, cxy) = window_stats(&pa, &pb, ox, oy, &win);
                    total += q_index(mx, my, vx, vy, cxy);
                    n += 1.0;
                }
            }
            total / n
        }
    }
}

/// `(ssim, l, c, s)` averaged over windows.
pub fn naive_ssim(a: &ImagePlane<f64>, b: &ImagePlane<f64>, window: SsimWindow) -> [f64; 4] {
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let c3 = c2 / 2.0;
    let (pa, pb) = (px(a), px(b));
    let (w, h) = (a.width(), a.height());
    let (win, positions): (Vec<Vec<f64>>, Vec<(usize, usize)>) = match window {
        SsimWindow::Global => (uniform(w, h), vec![(0, 0)]),
        SsimWindow::Gaussian11x11Sigma1_5 => {
            (gaussian_window(), (0..=h - 11).flat_map(|y| (0..=w - 11).map(move |x| (x, y))).collect())
        }
    };
    let mut acc = [0.0; 4];
    for &(ox, oy) in &positions {
        let (mx, my, vx, vy, cxy) = window_stats(&pa, &pb, ox, oy, &win);
        let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        let c = (2.0 * vx.sqrt() * vy.sqrt() + c2) / (vx + vy + c2);
        let s = (cxy + c3) / (vx.sqrt() * vy.sqrt() + c3);
        acc[0] += l * c * s;
        acc[1] += l;
        acc[2] += c;
        acc[3] += s;
    }
    acc.map(|v| v / positions.len() as f64)
}

/// Counts covered unit cells on an integer raster.
pub fn raster_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inside = |r: &BoundingBox, x: f64, y: f64| x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h;
    let (mut inter, mut union) = (0u32, 0u32);
    for y in 0..64 {
        for x in 0..64 {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            let (ia, ib) = (inside(a, cx, cy), inside(b, cx, cy));
            inter += u32::from(ia && ib);
            union += u32::from(ia || ib);
        }
    }
    f64::from(inter) / f64::from(union)
}

pub fn total(pairs: &[(usize, usize, f64)]) -> f64 {
    pairs.iter().map(|p| p.2).sum()
}

/// Best total IoU over every injective assignment of the smaller side.
pub fn brute_force(gt: &[BoundingBox], gen: &[BoundingBox]) -> f64 {
    fn go(i: usize, gt: &[BoundingBox], gen: &[BoundingBox], used: &mut Vec<bool>) -> f64 {
        if i == gt.len() {
            return 0.0;
        }
        // gt[i] may stay unmatched only if there are more gt boxes than generated ones
        let free = used.iter().filter(|u| !**u).count();
        let mut best = if gt.len() - i > free { go(i + 1, gt, gen, used) } else { f64::NEG_INFINITY };
        for j in 0..gen.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(iou_box(&gt[i], &gen[j]) + go(i + 1, gt, gen, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, gt, gen, &mut vec![false; gen.len()])
}

