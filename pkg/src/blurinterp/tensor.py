"""Dense NCHW tensor primitives: convolution, activations, pixel shuffle and
residual blocks.

Tensors are plain numpy arrays of shape (N, C, H, W).  Every op accumulates
in float64 and returns float32, except that float64 inputs stay float64 so
gradient checks can run at full precision.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple, Union

import numpy as np

Padding = Union[int, Tuple[int, int]]


class ShapeError(ValueError):
    """Raised when tensor shapes or channel counts do not line up."""


def out_dtype(*arrays) -> np.dtype:
    if any(np.asarray(a).dtype == np.float64 for a in arrays):
        return np.dtype(np.float64)
    return np.dtype(np.float32)


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank 4 (N, C, H, W), got shape {x.shape}")
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float32)
    return x


def _pair(p: Padding) -> Tuple[int, int]:
    if isinstance(p, (tuple, list)):
        return int(p[0]), int(p[1])
    return int(p), int(p)


@dataclass(frozen=True)
class ConvSpec:
    """Kernel (C_out, C_in, kh, kw), bias (C_out,), stride and zero padding.

    ``padding`` is an int or an (h, w) pair; the pair form is needed for the
    1x5 / 5x1 separable kernels.
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: Padding = 0

    def __post_init__(self):
        k = np.asarray(self.kernel)
        b = np.asarray(self.bias)
        if k.ndim != 4:
            raise ShapeError(f"kernel must be rank 4, got shape {k.shape}")
        if b.shape != (k.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match kernel shape {k.shape}")
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        ph, pw = _pair(self.padding)
        if ph < 0 or pw < 0:
            raise ValueError(f"padding must be non-negative, got {self.padding}")

    @property
    def c_out(self) -> int:
        return self.kernel.shape[0]

    @property
    def c_in(self) -> int:
        return self.kernel.shape[1]

    def output_size(self, h: int, w: int) -> Tuple[int, int]:
        ph, pw = _pair(self.padding)
        kh, kw = self.kernel.shape[2:]
        return (h + 2 * ph - kh) // self.stride + 1, (w + 2 * pw - kw) // self.stride + 1

    @classmethod
    def same(cls, kernel, bias, stride: int = 1) -> "ConvSpec":
        """ConvSpec with 'same' padding for odd kernel sizes."""
        kh, kw = np.asarray(kernel).shape[2:]
        return cls(kernel, bias, stride, (kh // 2, kw // 2))


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # (N, C, kh, kw, Ho, Wo) view over the padded input
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )


def conv2d(x, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation with zero padding."""
    x = as_tensor(x, "conv input")
    if x.shape[1] != spec.c_in:
        raise ShapeError(
            f"conv2d channel mismatch: input shape {x.shape} vs kernel shape {spec.kernel.shape}"
        )
    ph, pw = _pair(spec.padding)
    kh, kw = spec.kernel.shape[2:]
    ho, wo = spec.output_size(x.shape[2], x.shape[3])
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"conv2d output would be empty: input shape {x.shape} vs kernel shape {spec.kernel.shape}"
        )
    dtype = out_dtype(x, spec.kernel)
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, kh, kw, spec.stride, ho, wo)
    k = np.asarray(spec.kernel, dtype=np.float64)
    out = np.tensordot(k, cols, axes=([1, 2, 3], [1, 2, 3]))  # (C_out, N, Ho, Wo)
    out = out.transpose(1, 0, 2, 3) + np.asarray(spec.bias, np.float64)[None, :, None, None]
    return out.astype(dtype)


def conv2d_backward(x, spec: ConvSpec, upstream):
    """Gradients of ``conv2d(x, spec)`` given dL/dout.

    Returns (grad_x, grad_kernel, grad_bias), all float64.
    """
    x = np.asarray(x, np.float64)
    g = np.asarray(upstream, np.float64)
    ph, pw = _pair(spec.padding)
    kh, kw = spec.kernel.shape[2:]
    ho, wo = g.shape[2:]
    s = spec.stride
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, kh, kw, s, ho, wo)
    grad_k = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))
    grad_b = g.sum(axis=(0, 2, 3))
    k = np.asarray(spec.kernel, np.float64)
    dcols = np.tensordot(k, g, axes=([0], [1]))  # (C_in, kh, kw, N, Ho, Wo)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, i, j].transpose(1, 0, 2, 3)
    grad_x = dxp[:, :, ph:ph + x.shape[2], pw:pw + x.shape[3]]
    return grad_x, grad_k, grad_b


def sigmoid(x) -> np.ndarray:
    """Logistic function, kept strictly inside (0, 1) at the output precision."""
    x = np.asarray(x)
    dtype = out_dtype(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, np.float64)))
    lo = np.finfo(dtype).tiny
    hi = np.nextafter(dtype.type(1), dtype.type(0))
    return np.clip(y.astype(dtype), lo, hi)


def activate(x, kind: str) -> np.ndarray:
    x = np.asarray(x)
    dtype = out_dtype(x)
    if kind == "relu":
        return np.maximum(x, 0).astype(dtype)
    if kind == "tanh":
        return np.tanh(np.asarray(x, np.float64)).astype(dtype)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}; expected relu, tanh or sigmoid")


def relu(x) -> np.ndarray:
    return activate(x, "relu")


def pixel_shuffle_down(x, r: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*r*r, H/r, W/r).

    Output channel ``c*r*r + i*r + j`` holds input sub-pixel (i, j) of
    channel ``c``.
    """
    x = as_tensor(x)
    n, c, h, w = x.shape
    if r < 1 or h % r or w % r:
        raise ShapeError(f"pixel_shuffle_down: H={h}, W={w} not divisible by r={r}")
    y = x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y.reshape(n, c * r * r, h // r, w // r))


def pixel_shuffle_up(x, r: int) -> np.ndarray:
    """Exact inverse of :func:`pixel_shuffle_down`."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise ShapeError(f"pixel_shuffle_up: C={c} not divisible by r^2={r * r}")
    y = x.reshape(n, c // (r * r), r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(n, c // (r * r), h * r, w * r))


def concat(tensors: Sequence[np.ndarray]) -> np.ndarray:
    dtype = out_dtype(*tensors)
    return np.concatenate([np.asarray(t, dtype) for t in tensors], axis=1)


def upsample_nearest(x, factor: int = 2) -> np.ndarray:
    x = as_tensor(x)
    return x.repeat(factor, axis=2).repeat(factor, axis=3)


# -- weight-store helpers ---------------------------------------------------

def conv_from(store: Mapping[str, np.ndarray], path: str, stride: int = 1) -> ConvSpec:
    """Build a same-padded ConvSpec from ``path/kernel`` and ``path/bias``."""
    try:
        kernel = store[f"{path}/kernel"]
        bias = store[f"{path}/bias"]
    except KeyError as exc:
        raise KeyError(f"missing parameter {exc.args[0]!r}") from None
    return ConvSpec.same(kernel, bias, stride)


def apply_conv(x, store, path: str, stride: int = 1) -> np.ndarray:
    return conv2d(x, conv_from(store, path, stride))


def residual_dense_block(x, store: Mapping[str, np.ndarray], prefix: str, n_layers: int = 4) -> np.ndarray:
    """Four densely connected Conv3+ReLU layers, Conv1 local fusion, residual add."""
    x = as_tensor(x)
    fusion = conv_from(store, f"{prefix}/fuse")
    if fusion.c_out != x.shape[1]:
        raise ShapeError(f"RDB {prefix}: input shape {x.shape} vs fusion kernel {fusion.kernel.shape}")
    feats = [x]
    for i in range(n_layers):
        feats.append(relu(apply_conv(concat(feats), store, f"{prefix}/conv{i}")))
    return (x + conv2d(concat(feats), fusion)).astype(out_dtype(x))


def resb(x, store: Mapping[str, np.ndarray], prefix: str) -> np.ndarray:
    """Conv3 -> ReLU -> Conv3 plus identity."""
    x = as_tensor(x)
    first = conv_from(store, f"{prefix}/conv0")
    if first.c_in != x.shape[1]:
        raise ShapeError(f"ResB {prefix}: input shape {x.shape} vs kernel {first.kernel.shape}")
    y = apply_conv(relu(conv2d(x, first)), store, f"{prefix}/conv1")
    return (x + y).astype(out_dtype(x))


def resb_stack(x, store: Mapping[str, np.ndarray], prefix: str, n: int = 5) -> np.ndarray:
    for i in range(n):
        x = resb(x, store, f"{prefix}/resb{i}")
    return as_tensor(x)
