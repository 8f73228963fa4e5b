"""Baseline stage: FF-RDB backbone, FAC-FB, t-alignment, refine U-Net and
the shared decoder."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import arch
from .arch import ArchConfig
from .fac import FacWeights, fac_fb_forward
from .tensor import (
    ShapeError,
    activate,
    apply_conv,
    as_tensor,
    concat,
    pixel_shuffle_down,
    pixel_shuffle_up,
    relu,
    residual_dense_block,
    resb_stack,
    upsample_nearest,
)
from .warp import TriFlow, approx_intermediate_flows, cfr_reverse, fwb

D1 = "backbone/d1"
ENCODER = "backbone/facfb/encoder"
FAC = "backbone/facfb/fac"


def _require_channels(x, expected: int, what: str):
    if x.shape[1] != expected:
        raise ShapeError(f"{what}: expected {expected} channels, got shape {x.shape}")


@dataclass
class BackboneOut:
    F0p: np.ndarray
    F1p: np.ndarray
    f01: np.ndarray
    f10: np.ndarray
    occ_logit: np.ndarray

    @classmethod
    def split(cls, x) -> "BackboneOut":
        _require_channels(x, arch.FFRDB_OUT, "FF-RDB output")
        w = arch.WIDTH
        return cls(
            F0p=activate(x[:, :w], "tanh"),
            F1p=activate(x[:, w:2 * w], "tanh"),
            f01=np.ascontiguousarray(x[:, 2 * w:2 * w + 2]),
            f10=np.ascontiguousarray(x[:, 2 * w + 2:2 * w + 4]),
            occ_logit=np.ascontiguousarray(x[:, 2 * w + 4:2 * w + 5]),
        )


@dataclass
class Encoded:
    """The t-independent part of the baseline: backbone output and bolstered features."""

    frames: list
    out: BackboneOut
    F0b: np.ndarray
    F1b: np.ndarray


@dataclass
class BaselineOut:
    S0r: np.ndarray
    Str: np.ndarray
    S1r: np.ndarray
    fF: TriFlow
    F0r: np.ndarray
    Ftr: np.ndarray
    F1r: np.ndarray
    f01: np.ndarray
    f10: np.ndarray
    t: float


def check_frames(frames: Sequence, multiple: int = 1) -> list:
    frames = [as_tensor(f, "frame") for f in frames]
    if len(frames) != arch.N_FRAMES:
        raise ShapeError(f"expected {arch.N_FRAMES} input frames, got {len(frames)}")
    shape = frames[0].shape
    if shape[1] != arch.IMG_CH:
        raise ShapeError(f"frames must have {arch.IMG_CH} channels, got shape {shape}")
    for f in frames:
        if f.shape != shape:
            raise ShapeError(f"input frames differ in shape: {shape} vs {f.shape}")
    if shape[2] % multiple or shape[3] % multiple:
        raise ShapeError(f"frame size {shape[2]}x{shape[3]} must be divisible by {multiple}")
    return frames


def ff_rdb_forward(frames: Sequence, store: Mapping[str, np.ndarray], cfg: ArchConfig = ArchConfig()) -> BackboneOut:
    frames = check_frames(frames, cfg.shuffle)
    p = "backbone/ffrdb"
    x = pixel_shuffle_down(concat(frames), cfg.shuffle)
    shallow = apply_conv(x, store, f"{p}/sfe0")
    x = apply_conv(shallow, store, f"{p}/sfe1")
    hierarchy = []
    for b in range(cfg.n_rdb):
        x = residual_dense_block(x, store, f"{p}/rdb{b:02d}", cfg.rdb_layers)
        hierarchy.append(x)
    x = apply_conv(concat(hierarchy), store, f"{p}/gff0")
    x = apply_conv(x, store, f"{p}/gff1") + shallow
    x = pixel_shuffle_up(apply_conv(x, store, f"{p}/up"), cfg.shuffle)
    return BackboneOut.split(apply_conv(x, store, f"{p}/out"))


def t_align(out: BackboneOut, t: float):
    """Feature at time t via linear flows, CFR and feature warping/blending."""
    f0t, f1t = approx_intermediate_flows(out.f01, out.f10, t)
    ft0, ft1 = cfr_reverse(f0t, f1t, t)
    tri = TriFlow(ft0, ft1, out.occ_logit)
    return fwb(out.F0p, out.F1p, tri, t), tri


def refine_module(agg1, store: Mapping[str, np.ndarray], prefix: str = "backbone/rm"):
    """U-Net on Agg1 added residually onto [F0b, F1b, f_t0, f_t1, o_t0]."""
    agg1 = as_tensor(agg1, "Agg1")
    _require_channels(agg1, arch.AGG1, "Agg1")
    w = arch.WIDTH
    base = concat([agg1[:, :w], agg1[:, 2 * w:3 * w], agg1[:, 3 * w:3 * w + 5]])
    e0 = relu(apply_conv(relu(apply_conv(agg1, store, f"{prefix}/enc0a")), store, f"{prefix}/enc0b"))
    e1 = relu(apply_conv(relu(apply_conv(e0, store, f"{prefix}/enc1a", stride=2)), store, f"{prefix}/enc1b"))
    e2 = relu(apply_conv(relu(apply_conv(e1, store, f"{prefix}/enc2a", stride=2)), store, f"{prefix}/enc2b"))
    d1 = relu(apply_conv(concat([upsample_nearest(e2), e1]), store, f"{prefix}/dec1"))
    d0 = relu(apply_conv(concat([upsample_nearest(d1), e0]), store, f"{prefix}/dec0"))
    res = apply_conv(d0, store, f"{prefix}/out")
    _require_channels(res, arch.RM_OUT, "RM output")
    out = base + res
    return out[:, :w], out[:, w:2 * w], TriFlow.from_stack(out[:, 2 * w:])


def decoder(F, store: Mapping[str, np.ndarray], prefix: str = D1, n_resb: int = 5) -> np.ndarray:
    """ResB x n followed by a 3x3 projection to RGB."""
    F = as_tensor(F, "decoder input")
    _require_channels(F, store[f"{prefix}/resb0/conv0/kernel"].shape[1], "decoder input")
    return apply_conv(resb_stack(F, store, prefix, n_resb), store, f"{prefix}/proj")


def decoder1(F, store: Mapping[str, np.ndarray], cfg: ArchConfig = ArchConfig()) -> np.ndarray:
    return decoder(F, store, D1, cfg.n_resb)


def encode(frames: Sequence, store: Mapping[str, np.ndarray], cfg: ArchConfig = ArchConfig()) -> Encoded:
    frames = check_frames(frames, cfg.size_multiple)
    out = ff_rdb_forward(frames, store, cfg)
    w = FacWeights.from_store(store, FAC)
    F0b, F1b = fac_fb_forward(out.F0p, out.F1p, out.f01, out.f10, w, store, ENCODER)
    return Encoded(frames, out, F0b, F1b)


def baseline_at(enc: Encoded, t: float, store: Mapping[str, np.ndarray], cfg: ArchConfig = ArchConfig()) -> BaselineOut:
    out = enc.out
    Ft, tri = t_align(out, t)
    agg1 = concat([enc.F0b, Ft, enc.F1b, tri.stack(), out.f01, out.f10])
    F0r, F1r, fF = refine_module(agg1, store)
    Ftr = fwb(F0r, F1r, fF, t)
    return BaselineOut(
        S0r=decoder1(F0r, store, cfg),
        Str=decoder1(Ftr, store, cfg),
        S1r=decoder1(F1r, store, cfg),
        fF=fF, F0r=F0r, Ftr=Ftr, F1r=F1r, f01=out.f01, f10=out.f10, t=t,
    )


def baseline_forward(frames: Sequence, t: float, store: Mapping[str, np.ndarray],
                     cfg: ArchConfig = ArchConfig()) -> BaselineOut:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return baseline_at(encode(frames, store, cfg), t, store, cfg)
