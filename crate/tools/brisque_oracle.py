#!/usr/bin/env python3
"""Reference BRISQUE implementation (numpy/scipy) used to produce the golden
feature vectors and scores under fixtures/brisque/.

Conventions (kept in lock-step with the Rust implementation):
  * luma = 0.299 R + 0.587 G + 0.114 B on 8-bit samples, float64, no rounding
  * 7x7 Gaussian window, sigma 7/6, normalised, reflect-101 borders
  * MSCN = (I - mu) / (sigma + 1)
  * GGD / AGGD shape by moment matching on the grid 0.2:0.001:10 with linear
    interpolation between grid nodes
  * pairwise products use circular shifts (0,1), (1,0), (1,1), (-1,1)
  * second scale: 2x2 block mean of the even-cropped plane
  * SVR: sum_i coef_i exp(-gamma |x - sv_i|^2) - rho on features scaled to [-1, 1]

Usage: brisque_oracle.py MODEL OUT_DIR IMAGE...
"""
import os
import sys

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.special import gamma as G

GRID = np.round(np.arange(0.2, 10.0 + 1e-9, 0.001), 3)
GGD_RATIO = G(1.0 / GRID) * G(3.0 / GRID) / G(2.0 / GRID) ** 2  # decreasing
AGGD_RATIO = G(2.0 / GRID) ** 2 / (G(1.0 / GRID) * G(3.0 / GRID))  # increasing


def invert(ratio_table, target):
    # ratio_table monotone; linear interpolation of shape against ratio
    if ratio_table[0] > ratio_table[-1]:
        xs, ys = ratio_table[::-1], GRID[::-1]
    else:
        xs, ys = ratio_table, GRID
    if target <= xs[0]:
        return float(ys[0])
    if target >= xs[-1]:
        return float(ys[-1])
    return float(np.interp(target, xs, ys))


def luma(path):
    rgb = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def gauss_kernel(size, sigma):
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def mscn(img):
    k = gauss_kernel(7, 7.0 / 6.0)
    def blur(a):
        a = ndimage.correlate1d(a, k, axis=0, mode="mirror")
        return ndimage.correlate1d(a, k, axis=1, mode="mirror")
    mu = blur(img)
    sigma = np.sqrt(np.abs(blur(img * img) - mu * mu))
    return (img - mu) / (sigma + 1.0)


def ggd(vec):
    sigma_sq = np.mean(vec * vec)
    e = np.mean(np.abs(vec))
    rho = sigma_sq / (e * e)
    return invert(GGD_RATIO, rho), sigma_sq


def aggd(vec):
    left = vec[vec < 0]
    right = vec[vec > 0]
    left_std = np.sqrt(np.mean(left * left))
    right_std = np.sqrt(np.mean(right * right))
    gamma_hat = left_std / right_std
    rhat = np.mean(np.abs(vec)) ** 2 / np.mean(vec * vec)
    rhat_norm = rhat * (gamma_hat ** 3 + 1) * (gamma_hat + 1) / (gamma_hat ** 2 + 1) ** 2
    alpha = invert(AGGD_RATIO, rhat_norm)
    mean = (right_std - left_std) * (G(2.0 / alpha) / G(1.0 / alpha)) * np.sqrt(G(1.0 / alpha) / G(3.0 / alpha))
    return [alpha, mean, left_std ** 2, right_std ** 2]


def features(img):
    feat = []
    for scale in range(2):
        s = mscn(img)
        feat.extend(ggd(s))
        for dy, dx in [(0, 1), (1, 0), (1, 1), (-1, 1)]:
            shifted = np.roll(np.roll(s, dy, axis=0), dx, axis=1)
            feat.extend(aggd((s * shifted).ravel()))
        if scale == 0:
            h, w = img.shape
            c = img[: h - h % 2, : w - w % 2]
            img = 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])
    return np.array(feat)


def load_model(path):
    lines = [l.strip() for l in open(path) if l.strip() and not l.startswith("#")]
    gamma = float(lines[lines.index("GAMMA") + 1])
    rho = float(lines[lines.index("RHO") + 1])
    r0 = lines.index("RANGES") + 1
    ranges = np.array([[float(v) for v in l.split()] for l in lines[r0:r0 + 36]])
    sv0 = lines.index("SV") + 1
    rows = np.array([[float(v) for v in l.split()] for l in lines[sv0:]])
    return gamma, rho, ranges, rows[:, 0], rows[:, 1:]


def score(feat, model):
    gamma, rho, ranges, coef, sv = model
    x = -1.0 + 2.0 * (feat - ranges[:, 0]) / (ranges[:, 1] - ranges[:, 0])
    k = np.exp(-gamma * np.sum((sv - x) ** 2, axis=1))
    return float(coef @ k - rho), x


def main():
    model_path, out_dir = sys.argv[1:3]
    model = load_model(model_path)
    os.makedirs(out_dir, exist_ok=True)
    for path in sys.argv[3:]:
        feat = features(luma(path))
        s, scaled = score(feat, model)
        try:
            from libsvm import svmutil  # optional cross-check of the SVR sum
            m = svmutil.svm_load_model(os.environ["BRISQUE_LIBSVM_MODEL"])
            _, _, vals = svmutil.svm_predict([0], [scaled.tolist()], m, "-q")
            assert abs(vals[0][0] - s) < 1e-6, (vals[0][0], s)
        except KeyError:
            pass
        stem = os.path.splitext(os.path.basename(path))[0]
        with open(os.path.join(out_dir, stem + ".features.txt"), "w") as fh:
            for v in feat:
                fh.write(f"{float(v)!r}\n")
        with open(os.path.join(out_dir, stem + ".score.txt"), "w") as fh:
            fh.write(f"{s!r}\n")
        print(stem, s)


if __name__ == "__main__":
    main()
