"""Central finite-difference checks for the hand-written gradients."""
from __future__ import annotations

from typing import Callable, Dict

import numpy as np

from .fac import FacWeights, PARAM_NAMES, fac_backward, fac_bolster
from .tensor import ConvSpec
from .warp import TriFlow, backward_warp, warp_backward_grad, warp_blend, warp_blend_backward

STEP = 1e-3


def relative_error(analytic, numeric) -> float:
    """max |a - n| scaled by the larger of the two max-magnitudes."""
    a = np.asarray(analytic, np.float64)
    n = np.asarray(numeric, np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-12)
    return float(np.abs(a - n).max(initial=0.0) / scale)


def numerical_grad(f: Callable[[], float], x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``x``, perturbed in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return grad


def generic_flow(rng, n, h, w, margin=0.05, reach=None) -> np.ndarray:
    """Random flow whose sample points stay off the integer grid and inside the frame.

    Bilinear sampling has kinks on grid lines and at the clamp border, so the
    points are kept at least ``margin`` away from both.
    """
    flow = np.zeros((n, 2, h, w))
    for ch, size in ((0, w), (1, h)):
        grid = np.arange(size)[None, :] if ch == 0 else np.arange(size)[:, None]
        cell = rng.integers(0, size - 1, size=(n, h, w))
        frac = rng.uniform(margin, 1 - margin, size=(n, h, w))
        target = cell + frac
        if reach is not None:
            target = np.clip(target, grid - reach + margin, grid + reach - margin)
        flow[:, ch] = target - grid
    return flow


def check_warp(seed: int = 0, shape=(1, 3, 5, 6)) -> float:
    rng = np.random.default_rng(seed)
    n, c, h, w = shape
    src = rng.standard_normal(shape)
    flow = generic_flow(rng, n, h, w)
    up = rng.standard_normal(shape)
    gs, gf = warp_backward_grad(src, flow, up)
    loss = lambda: float((backward_warp(src, flow) * up).sum())
    return max(relative_error(gs, numerical_grad(loss, src)),
               relative_error(gf, numerical_grad(loss, flow)))


def random_fac_weights(rng, c: int = 4, hidden: int = 4, use_bias: bool = False, scale: float = 0.5) -> FacWeights:
    def spec(co, ci, k):
        return ConvSpec.same(rng.uniform(-scale, scale, (co, ci, k, k)), rng.uniform(-scale, scale, co))

    return FacWeights(spec(c, c, 1), spec(c, c, 1), spec(c, c, 1), spec(c, c, 1),
                      spec(hidden, 2 * c, 3), spec(1, hidden, 3), use_bias=use_bias)


def check_fac(seed: int = 0, shape=(1, 4, 5, 5), use_bias: bool = False) -> Dict[str, float]:
    """Relative error per differentiated input; ``flow`` reports max |grad| (must be 0)."""
    rng = np.random.default_rng(seed)
    n, c, h, w = shape
    F0 = rng.standard_normal(shape)
    F1 = rng.standard_normal(shape)
    flow = generic_flow(rng, n, h, w)
    wts = random_fac_weights(rng, c, use_bias=use_bias)
    up = rng.standard_normal(shape)
    grads = fac_backward(F0, F1, flow, wts, up)
    loss = lambda: float((fac_bolster(F0, F1, flow, wts) * up).sum())
    errors = {"F0": relative_error(grads["F0"], numerical_grad(loss, F0)),
              "F1": relative_error(grads["F1"], numerical_grad(loss, F1))}
    for name in PARAM_NAMES:
        spec = getattr(wts, name)
        errors[f"{name}/kernel"] = relative_error(grads[f"{name}/kernel"], numerical_grad(loss, spec.kernel))
        if f"{name}/bias" in grads:
            errors[f"{name}/bias"] = relative_error(grads[f"{name}/bias"], numerical_grad(loss, spec.bias))
    errors["flow"] = float(np.abs(grads["flow"]).max())
    return errors


def check_fwb(seed: int = 0, shape=(1, 3, 5, 6)) -> float:
    rng = np.random.default_rng(seed)
    n, c, h, w = shape
    x0 = rng.standard_normal(shape)
    x1 = rng.standard_normal(shape)
    tri = TriFlow(generic_flow(rng, n, h, w), generic_flow(rng, n, h, w), rng.standard_normal((n, 1, h, w)))
    t = float(rng.uniform(0.1, 0.9))
    up = rng.standard_normal(shape)
    grads = warp_blend_backward(x0, x1, tri, t, up)
    loss = lambda: float((warp_blend(x0, x1, tri, t) * up).sum())
    return max(relative_error(grads["x0"], numerical_grad(loss, x0)),
               relative_error(grads["x1"], numerical_grad(loss, x1)),
               relative_error(grads["flow_t0"], numerical_grad(loss, tri.flow_t0)),
               relative_error(grads["flow_t1"], numerical_grad(loss, tri.flow_t1)),
               relative_error(grads["occ_logit"], numerical_grad(loss, tri.occ_logit)))


def max_error(op: str, seed: int = 0) -> float:
    if op == "warp":
        return check_warp(seed)
    if op == "fwb":
        return check_fwb(seed)
    if op == "fac":
        errs = check_fac(seed)
        if errs.pop("flow") != 0.0:
            return float("inf")
        return max(errs.values())
    raise ValueError(f"unknown gradcheck op {op!r}; expected warp, fac or fwb")
