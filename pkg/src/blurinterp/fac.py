"""Flow-guided attentive correlation and feature bolstering.

The correlation projects the source feature (query) and the flow-warped
counterpart (key, value) with 1x1 convolutions, sums query*key over
channels into a single-channel map, and scales the value by it.
Bolstering then gates the source feature against a 1x1 embedding of that
correlation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

from .tensor import (
    ConvSpec,
    ShapeError,
    as_tensor,
    concat,
    conv2d,
    conv2d_backward,
    conv_from,
    out_dtype,
    relu,
    resb_stack,
)
from .warp import backward_warp, warp_backward_grad

PARAM_NAMES = ("query", "key", "value", "embed", "gate0", "gate1")


@dataclass(frozen=True)
class FacWeights:
    query: ConvSpec
    key: ConvSpec
    value: ConvSpec
    embed: ConvSpec
    gate0: ConvSpec
    gate1: ConvSpec
    use_bias: bool = False

    def __post_init__(self):
        for name in ("query", "key", "value", "embed"):
            spec = getattr(self, name)
            if spec.kernel.shape[2:] != (1, 1):
                raise ShapeError(f"FAC {name} must be a 1x1 conv, got kernel {spec.kernel.shape}")
        if self.gate1.c_out != 1:
            raise ShapeError(f"FAC gate must end in one channel, got kernel {self.gate1.kernel.shape}")

    @classmethod
    def from_store(cls, store: Mapping[str, np.ndarray], prefix: str, use_bias: bool = False) -> "FacWeights":
        return cls(*(conv_from(store, f"{prefix}/{name}") for name in PARAM_NAMES), use_bias=use_bias)

    def _proj(self, name: str) -> ConvSpec:
        spec = getattr(self, name)
        if self.use_bias:
            return spec
        return ConvSpec(spec.kernel, np.zeros_like(spec.bias), spec.stride, spec.padding)


def _corr_parts(F0, F1, f01, w: FacWeights):
    q = conv2d(np.asarray(F0, np.float64), w._proj("query"))
    warped = backward_warp(np.asarray(F1, np.float64), np.asarray(f01, np.float64))
    k = conv2d(warped, w._proj("key"))
    v = conv2d(warped, w._proj("value"))
    # channel sum kept in float64 before broadcasting
    s = (q * k).sum(axis=1, keepdims=True)
    return q, warped, k, v, s


def fac_correlate(F0, F1, f01, w: FacWeights) -> np.ndarray:
    F0, F1, f01 = as_tensor(F0, "F0"), as_tensor(F1, "F1"), as_tensor(f01, "f01")
    if F0.shape != F1.shape:
        raise ShapeError(f"FAC inputs differ in shape: {F0.shape} vs {F1.shape}")
    if F0.shape[1] != w.query.c_in:
        raise ShapeError(f"FAC channel mismatch: input {F0.shape} vs query kernel {w.query.kernel.shape}")
    _, _, _, v, s = _corr_parts(F0, F1, f01, w)
    return (s * v).astype(out_dtype(F0, F1))


def _gate(E, F0, w: FacWeights):
    g_in = concat([E, F0])
    h = conv2d(g_in, w.gate0)
    g = conv2d(relu(h), w.gate1)
    gate = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(g, np.float64)))
    return g_in, h, gate


def bolster(F0, fac01, w: FacWeights) -> np.ndarray:
    """w*F0 + (1-w)*E with E = Conv1(fac01) and w a sigmoid gate on [E, F0]."""
    F0, fac01 = as_tensor(F0, "F0"), as_tensor(fac01, "fac01")
    if F0.shape != fac01.shape:
        raise ShapeError(f"bolster inputs differ in shape: {F0.shape} vs {fac01.shape}")
    dtype = out_dtype(F0, fac01)
    E = np.asarray(conv2d(np.asarray(fac01, np.float64), w.embed), np.float64)
    _, _, gate = _gate(E, np.asarray(F0, np.float64), w)
    F0d = np.asarray(F0, np.float64)
    return (gate * F0d + (1.0 - gate) * E).astype(dtype)


def fac_fb_forward(F0p, F1p, f01, f10, w: FacWeights, store: Mapping[str, np.ndarray], encoder_prefix: str):
    """Shared ResB x5 encoding, then correlation + bolstering in both directions."""
    F0 = resb_stack(F0p, store, encoder_prefix, 5)
    F1 = resb_stack(F1p, store, encoder_prefix, 5)
    F0b = bolster(F0, fac_correlate(F0, F1, f01, w), w)
    F1b = bolster(F1, fac_correlate(F1, F0, f10, w), w)
    return F0b, F1b


def fac_bolster(F0, F1, f01, w: FacWeights) -> np.ndarray:
    """Bolstered F0 with respect to F1 along f01 (the function fac_backward differentiates)."""
    return bolster(F0, fac_correlate(F0, F1, f01, w), w)


def fac_backward(F0, F1, f01, w: FacWeights, upstream) -> Dict[str, np.ndarray]:
    """Gradients of ``fac_bolster`` w.r.t. F0, F1, the flow and every weight.

    The flow gradient is blocked and always returned as zeros.  Weight
    gradients are keyed ``"<conv>/kernel"`` and ``"<conv>/bias"``; the
    correlation projections only report a bias gradient when biases are on.
    """
    F0 = np.asarray(F0, np.float64)
    F1 = np.asarray(F1, np.float64)
    U = np.asarray(upstream, np.float64)
    q, warped, k, v, s = _corr_parts(F0, F1, f01, w)
    A = s * v
    E = np.asarray(conv2d(A, w.embed), np.float64)
    g_in, h, gate = _gate(E, F0, w)
    if U.shape != F0.shape:
        raise ShapeError(f"upstream shape {U.shape} does not match F0 shape {F0.shape}")

    grads: Dict[str, np.ndarray] = {}
    dF0 = U * gate
    dE = U * (1.0 - gate)
    dgate = (U * (F0 - E)).sum(axis=1, keepdims=True)
    dg = dgate * gate * (1.0 - gate)
    dhr, grads["gate1/kernel"], grads["gate1/bias"] = conv2d_backward(relu(h), w.gate1, dg)
    dh = dhr * (h > 0)
    dg_in, grads["gate0/kernel"], grads["gate0/bias"] = conv2d_backward(g_in, w.gate0, dh)
    c = F0.shape[1]
    dE = dE + dg_in[:, :c]
    dF0 = dF0 + dg_in[:, c:]
    dA, grads["embed/kernel"], grads["embed/bias"] = conv2d_backward(A, w.embed, dE)
    dv = dA * s
    ds = (dA * v).sum(axis=1, keepdims=True)
    dq = ds * k
    dk = ds * q
    dF0_q, grads["query/kernel"], bq = conv2d_backward(F0, w._proj("query"), dq)
    dW_k, grads["key/kernel"], bk = conv2d_backward(warped, w._proj("key"), dk)
    dW_v, grads["value/kernel"], bv = conv2d_backward(warped, w._proj("value"), dv)
    if w.use_bias:
        grads["query/bias"], grads["key/bias"], grads["value/bias"] = bq, bk, bv
    dF0 = dF0 + dF0_q
    dF1, _ = warp_backward_grad(F1, f01, dW_k + dW_v, block_flow_grad=True)
    grads["F0"] = dF0
    grads["F1"] = dF1
    grads["flow"] = np.zeros(np.shape(f01), np.float64)
    return grads
