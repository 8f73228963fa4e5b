"""PSNR, SSIM and the tOF temporal-consistency score."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .tensor import ShapeError

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricReport:
    psnr: float = float("nan")
    ssim: float = float("nan")
    tof: float = float("nan")
    per_frame: List[dict] = field(default_factory=list)


def _pair(a, b):
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x, g):
    # separable 'valid' Gaussian filtering over the last two axes
    k = len(g)
    h, w = x.shape[-2:]
    rows = sum(g[i] * x[..., i:h - k + 1 + i, :] for i in range(k))
    return sum(g[j] * rows[..., :, j:w - k + 1 + j] for j in range(k))


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), valid region only."""
    a, b = _pair(a, b)
    if a.ndim < 2 or a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise ShapeError(f"images of shape {a.shape} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# -- motion estimation for tOF ------------------------------------------------

FLOW_LEVELS = 3
FLOW_BLOCK = 8
FLOW_RADIUS = 4


def _gray(frame) -> np.ndarray:
    f = np.asarray(frame, np.float64)
    while f.ndim > 3:
        f = f[0]
    return f.mean(axis=0) if f.ndim == 3 else f


def _downsample(img):
    h, w = img.shape
    h2, w2 = max(h // 2, 1), max(w // 2, 1)
    img = img[:h2 * 2, :w2 * 2] if h >= 2 and w >= 2 else img
    if h < 2 or w < 2:
        return img
    return img.reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _match_level(src, dst, init, block, radius):
    """Integer block matching of src blocks into dst around ``init`` (per-pixel, (2, H, W))."""
    h, w = src.shape
    pad = radius + int(np.abs(init).max()) + block
    dp = np.pad(dst, pad, mode="edge")
    flow = np.zeros((2, h, w))
    offsets = sorted(((dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)),
                     key=lambda d: (d[0] ** 2 + d[1] ** 2, d[1], d[0]))
    for y0 in range(0, h, block):
        for x0 in range(0, w, block):
            y1, x1 = min(y0 + block, h), min(x0 + block, w)
            ref = src[y0:y1, x0:x1]
            gx = int(round(init[0, y0, x0]))
            gy = int(round(init[1, y0, x0]))
            best, best_d = np.inf, (gx, gy)
            for dx, dy in offsets:
                ux, uy = gx + dx, gy + dy
                cand = dp[pad + y0 + uy:pad + y1 + uy, pad + x0 + ux:pad + x1 + ux]
                cost = np.abs(cand - ref).sum()
                if cost < best:
                    best, best_d = cost, (ux, uy)
            flow[0, y0:y1, x0:x1] = best_d[0]
            flow[1, y0:y1, x0:x1] = best_d[1]
    return flow


def estimate_motion(frame_a, frame_b, levels: int = FLOW_LEVELS, block: int = FLOW_BLOCK,
                    radius: int = FLOW_RADIUS) -> np.ndarray:
    """Pyramidal integer block matching; returns a (2, H, W) field from a to b."""
    a, b = _gray(frame_a), _gray(frame_b)
    pyr = [(a, b)]
    for _ in range(levels - 1):
        a, b = _downsample(a), _downsample(b)
        pyr.append((a, b))
    flow = np.zeros((2,) + pyr[-1][0].shape)
    for lvl in range(levels - 1, -1, -1):
        src, dst = pyr[lvl]
        if flow.shape[1:] != src.shape:
            up = 2 * flow.repeat(2, axis=1).repeat(2, axis=2)
            init = np.zeros((2,) + src.shape)
            hh, ww = min(up.shape[1], src.shape[0]), min(up.shape[2], src.shape[1])
            init[:, :hh, :ww] = up[:, :hh, :ww]
            flow = init
        flow = _match_level(src, dst, flow, block, radius)
    return flow


def tof_pairs(pred_seq: Sequence, gt_seq: Sequence, margin: int = 0) -> List[float]:
    """Per consecutive pair, the mean per-pixel L1 gap between the two motion fields.

    ``margin`` drops that many pixels on every side before averaging.
    """
    pred = list(pred_seq)
    gt = list(gt_seq)
    if len(pred) != len(gt):
        raise ShapeError(f"sequences differ in length: {len(pred)} vs {len(gt)}")
    if len(pred) < 2:
        raise ValueError("tOF needs at least two frames per sequence")
    for p, g in zip(pred, gt):
        _pair(p, g)
    scores = []
    for k in range(len(pred) - 1):
        fp = estimate_motion(pred[k], pred[k + 1])
        fg = estimate_motion(gt[k], gt[k + 1])
        d = np.abs(fp - fg).sum(axis=0)
        if margin:
            d = d[margin:-margin, margin:-margin]
        scores.append(float(d.mean()))
    return scores


def tof(pred_seq: Sequence, gt_seq: Sequence, margin: int = 0) -> float:
    """Temporal consistency: mean of :func:`tof_pairs` (0 for identical motion)."""
    return float(np.mean(tof_pairs(pred_seq, gt_seq, margin)))


def evaluate(pred: Sequence, gt: Sequence, metrics: Sequence[str] = ("psnr", "ssim", "tof")) -> MetricReport:
    pred, gt = list(pred), list(gt)
    if len(pred) != len(gt):
        raise ShapeError(f"sequences differ in length: {len(pred)} vs {len(gt)}")
    report = MetricReport()
    for i, (p, g) in enumerate(zip(pred, gt)):
        row = {"frame": i}
        if "psnr" in metrics:
            row["psnr"] = psnr(p, g)
        if "ssim" in metrics:
            row["ssim"] = ssim(p, g)
        report.per_frame.append(row)
    if "psnr" in metrics:
        report.psnr = float(np.mean([r["psnr"] for r in report.per_frame]))
    if "ssim" in metrics:
        report.ssim = float(np.mean([r["ssim"] for r in report.per_frame]))
    if "tof" in metrics:
        pairs = tof_pairs(pred, gt)
        for row, value in zip(report.per_frame, pairs):
            row["tof"] = value
        report.tof = float(np.mean(pairs))
    return report
