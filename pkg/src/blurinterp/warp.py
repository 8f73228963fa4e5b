"""Flow arithmetic, backward warping, complementary flow reversal and the
occlusion-weighted blend used in both feature and pixel domain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, as_tensor, out_dtype

SPLAT_EPS = 1e-6


@dataclass
class TriFlow:
    """Two flows from time t (to 0 and to 1) plus the occlusion logit."""

    flow_t0: np.ndarray
    flow_t1: np.ndarray
    occ_logit: np.ndarray

    def __post_init__(self):
        f0, f1, o = (as_tensor(a) for a in (self.flow_t0, self.flow_t1, self.occ_logit))
        if f0.shape[1] != 2 or f1.shape[1] != 2 or o.shape[1] != 1:
            raise ShapeError(f"TriFlow channel layout must be 2/2/1, got {f0.shape}, {f1.shape}, {o.shape}")
        if not (f0.shape[2:] == f1.shape[2:] == o.shape[2:]):
            raise ShapeError(f"TriFlow spatial sizes differ: {f0.shape}, {f1.shape}, {o.shape}")
        self.flow_t0, self.flow_t1, self.occ_logit = f0, f1, o

    def occlusion_weights(self):
        """Return (o_t0, o_t1) in float64 with o_t1 = 1 - o_t0."""
        o0 = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(self.occ_logit, np.float64)))
        return o0, 1.0 - o0

    def stack(self) -> np.ndarray:
        """The 5-channel concatenation [f_t0, f_t1, o_t0]."""
        dtype = out_dtype(self.flow_t0, self.flow_t1, self.occ_logit)
        return np.concatenate([self.flow_t0, self.flow_t1, self.occ_logit], axis=1).astype(dtype)

    @classmethod
    def from_stack(cls, x) -> "TriFlow":
        x = as_tensor(x)
        if x.shape[1] != 5:
            raise ShapeError(f"expected 5 channels for a TriFlow stack, got shape {x.shape}")
        return cls(x[:, 0:2], x[:, 2:4], x[:, 4:5])

    def __add__(self, other: "TriFlow") -> "TriFlow":
        return TriFlow.from_stack(self.stack() + other.stack())


def _check_same_spatial(a, b, what):
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} are not spatially compatible")


def approx_intermediate_flows(f01, f10, t: float):
    """Linear-motion flows from the anchors to time t: (t*f01, (1-t)*f10)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    f01, f10 = as_tensor(f01, "f01"), as_tensor(f10, "f10")
    if f01.shape != f10.shape or f01.shape[1] != 2:
        raise ShapeError(f"flow shapes must match with 2 channels, got {f01.shape} and {f10.shape}")
    dtype = out_dtype(f01, f10)
    f0t = (t * np.asarray(f01, np.float64)).astype(dtype)
    f1t = ((1.0 - t) * np.asarray(f10, np.float64)).astype(dtype)
    return f0t, f1t


def _bilinear_coords(flow, h, w):
    """Border-clamped sample coordinates and corner indices/weights."""
    fl = np.asarray(flow, np.float64)
    gy, gx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    rx = gx + fl[:, 0]
    ry = gy + fl[:, 1]
    px = np.clip(rx, 0.0, w - 1)
    py = np.clip(ry, 0.0, h - 1)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = px - x0
    ay = py - y0
    inside_x = (rx > 0) & (rx < w - 1)
    inside_y = (ry > 0) & (ry < h - 1)
    return x0, x1, y0, y1, ax, ay, inside_x, inside_y


def _gather(src, yy, xx):
    # src (N, C, H, W); yy, xx (N, H, W) -> (N, C, H, W)
    n = src.shape[0]
    bidx = np.arange(n)[:, None, None]
    return src[bidx, :, yy, xx].transpose(0, 3, 1, 2)


def backward_warp(src, flow) -> np.ndarray:
    """Sample ``src`` at ``x + flow(x)`` bilinearly, clamping at the border."""
    src, flow = as_tensor(src, "src"), as_tensor(flow, "flow")
    if flow.shape[1] != 2:
        raise ShapeError(f"flow must have 2 channels, got shape {flow.shape}")
    _check_same_spatial(src, flow, "backward_warp")
    dtype = out_dtype(src, flow)
    h, w = src.shape[2:]
    x0, x1, y0, y1, ax, ay, _, _ = _bilinear_coords(flow, h, w)
    s = np.asarray(src, np.float64)
    ax = ax[:, None]
    ay = ay[:, None]
    out = ((1 - ay) * ((1 - ax) * _gather(s, y0, x0) + ax * _gather(s, y0, x1))
           + ay * ((1 - ax) * _gather(s, y1, x0) + ax * _gather(s, y1, x1)))
    return out.astype(dtype)


def _scatter(grad, yy, xx, weight, shape):
    # adjoint of _gather with a per-pixel weight; bincount keeps the order fixed
    n, c, h, w = shape
    flat = (np.arange(n)[:, None, None, None] * c + np.arange(c)[None, :, None, None]) * (h * w)
    idx = flat + (yy * w + xx)[:, None]
    vals = grad * weight[:, None]
    return np.bincount(idx.ravel(), weights=vals.ravel(), minlength=n * c * h * w).reshape(shape)


def warp_backward_grad(src, flow, upstream, block_flow_grad: bool = False):
    """Analytic (grad_src, grad_flow) of ``backward_warp`` for dL/dout = upstream."""
    src, flow = as_tensor(src, "src"), as_tensor(flow, "flow")
    g = np.asarray(upstream, np.float64)
    if g.shape != src.shape:
        raise ShapeError(f"upstream shape {g.shape} does not match src shape {src.shape}")
    _check_same_spatial(src, flow, "warp_backward_grad")
    h, w = src.shape[2:]
    x0, x1, y0, y1, ax, ay, inside_x, inside_y = _bilinear_coords(flow, h, w)
    shape = src.shape
    grad_src = (_scatter(g, y0, x0, (1 - ay) * (1 - ax), shape)
                + _scatter(g, y0, x1, (1 - ay) * ax, shape)
                + _scatter(g, y1, x0, ay * (1 - ax), shape)
                + _scatter(g, y1, x1, ay * ax, shape))
    grad_flow = np.zeros(flow.shape, np.float64)
    if not block_flow_grad:
        s = np.asarray(src, np.float64)
        v00, v01 = _gather(s, y0, x0), _gather(s, y0, x1)
        v10, v11 = _gather(s, y1, x0), _gather(s, y1, x1)
        a_x, a_y = ax[:, None], ay[:, None]
        d_dx = (1 - a_y) * (v01 - v00) + a_y * (v11 - v10)
        d_dy = (1 - a_x) * (v10 - v00) + a_x * (v11 - v01)
        grad_flow[:, 0] = (g * d_dx).sum(axis=1) * inside_x
        grad_flow[:, 1] = (g * d_dy).sum(axis=1) * inside_y
    return grad_src, grad_flow


def _splat(values, flow):
    """Bilinear forward splat of ``values`` along ``flow``; returns (sum, weight)."""
    n, c, h, w = values.shape
    fl = np.asarray(flow, np.float64)
    gy, gx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    px = gx + fl[:, 0]
    py = gy + fl[:, 1]
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    ax = px - x0
    ay = py - y0
    acc = np.zeros(n * c * h * w)
    wacc = np.zeros(n * h * w)
    vals = np.asarray(values, np.float64)
    for dy, dx, wt in ((0, 0, (1 - ay) * (1 - ax)), (0, 1, (1 - ay) * ax),
                       (1, 0, ay * (1 - ax)), (1, 1, ay * ax)):
        yy, xx = y0 + dy, x0 + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w) & (wt > 0)
        b, sy, sx = np.nonzero(ok)
        tgt = yy[b, sy, sx] * w + xx[b, sy, sx]
        wk = wt[b, sy, sx]
        wacc += np.bincount(b * h * w + tgt, weights=wk, minlength=n * h * w)
        for ch in range(c):
            idx = (b * c + ch) * h * w + tgt
            acc += np.bincount(idx, weights=wk * vals[b, ch, sy, sx], minlength=n * c * h * w)
    return acc.reshape(n, c, h, w), wacc.reshape(n, 1, h, w)


def cfr_reverse(f0t, f1t, t: float):
    """Complementary flow reversal: anchor->t flows into t->anchor flows.

    Each anchor pixel deposits the negated flow at its landing site with
    bilinear weights; deposits are normalised by the total weight.  Sites
    that receive (almost) nothing take the other direction's reversed flow,
    rescaled by the linear-motion ratio.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    f0t, f1t = as_tensor(f0t, "f0t"), as_tensor(f1t, "f1t")
    if f0t.shape != f1t.shape or f0t.shape[1] != 2:
        raise ShapeError(f"flow shapes must match with 2 channels, got {f0t.shape} and {f1t.shape}")
    dtype = out_dtype(f0t, f1t)
    s0, w0 = _splat(-np.asarray(f0t, np.float64), f0t)
    s1, w1 = _splat(-np.asarray(f1t, np.float64), f1t)
    ft0 = np.where(w0 >= SPLAT_EPS, s0 / np.maximum(w0, SPLAT_EPS), 0.0)
    ft1 = np.where(w1 >= SPLAT_EPS, s1 / np.maximum(w1, SPLAT_EPS), 0.0)
    hole0, hole1 = w0 < SPLAT_EPS, w1 < SPLAT_EPS
    scale0 = -t / (1.0 - t) if t < 1.0 else 0.0
    scale1 = -(1.0 - t) / t if t > 0.0 else 0.0
    out0 = np.where(hole0 & ~hole1, scale0 * ft1, ft0)
    out1 = np.where(hole1 & ~hole0, scale1 * ft0, ft1)
    return out0.astype(dtype), out1.astype(dtype)


def _blend_logit(tri: TriFlow, t: float) -> np.ndarray:
    # (1-t) o0 / [(1-t) o0 + t o1] == sigmoid(logit + log((1-t)/t)); infinite at the endpoints
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    logit = np.asarray(tri.occ_logit, np.float64)
    if t == 0.0:
        return np.full(logit.shape, np.inf)
    if t == 1.0:
        return np.full(logit.shape, -np.inf)
    return logit + (np.log1p(-t) - np.log(t))


def _sigmoid_pair(z):
    a = 0.5 * (1.0 + np.tanh(0.5 * z))
    return a, 0.5 * (1.0 - np.tanh(0.5 * z))


def blend_weights(tri: TriFlow, t: float):
    """Normalised per-pixel weight of the time-0 branch, (N, 1, H, W) float64."""
    return _sigmoid_pair(_blend_logit(tri, t))[0]


def warp_blend(x0, x1, tri: TriFlow, t: float) -> np.ndarray:
    """Occlusion-weighted blend of both inputs warped to time t.

    out = [(1-t) o0 Wb(x0, f_t0) + t o1 Wb(x1, f_t1)] / [(1-t) o0 + t o1]

    The normalised weight is evaluated in logit space, so saturated
    occlusion logits never divide by zero and t = 0 / t = 1 return the
    warped x0 / x1 exactly.
    """
    x0, x1 = as_tensor(x0), as_tensor(x1)
    if x0.shape != x1.shape:
        raise ShapeError(f"blend inputs differ in shape: {x0.shape} vs {x1.shape}")
    _check_same_spatial(x0, tri.occ_logit, "warp_blend")
    dtype = out_dtype(x0, x1)
    a, a_bar = _sigmoid_pair(_blend_logit(tri, t))
    w0 = np.asarray(backward_warp(x0, tri.flow_t0), np.float64)
    w1 = np.asarray(backward_warp(x1, tri.flow_t1), np.float64)
    return (a * w0 + a_bar * w1).astype(dtype)


def fwb(F0, F1, tri: TriFlow, t: float) -> np.ndarray:
    """Feature-domain warping and blending."""
    return warp_blend(F0, F1, tri, t)


def pwb(S0, S1, tri: TriFlow, t: float) -> np.ndarray:
    """Pixel-domain warping and blending; same contract as :func:`fwb`."""
    return warp_blend(S0, S1, tri, t)


def warp_blend_backward(x0, x1, tri: TriFlow, t: float, upstream, block_flow_grad: bool = False):
    """Analytic gradients of :func:`warp_blend`.

    Returns a dict with keys ``x0``, ``x1``, ``flow_t0``, ``flow_t1`` and
    ``occ_logit`` (float64).
    """
    g = np.asarray(upstream, np.float64)
    a, a_bar = _sigmoid_pair(_blend_logit(tri, t))
    b0 = np.asarray(backward_warp(np.asarray(x0, np.float64), np.asarray(tri.flow_t0, np.float64)))
    b1 = np.asarray(backward_warp(np.asarray(x1, np.float64), np.asarray(tri.flow_t1, np.float64)))
    gx0, gf0 = warp_backward_grad(x0, tri.flow_t0, a * g, block_flow_grad)
    gx1, gf1 = warp_backward_grad(x1, tri.flow_t1, a_bar * g, block_flow_grad)
    da = (g * (b0 - b1)).sum(axis=1, keepdims=True)
    return {"x0": gx0, "x1": gx1, "flow_t0": gf0, "flow_t1": gf1, "occ_logit": da * a * a_bar}
