"""Recursive boosting stage: Mixer, separable-conv GRU booster, pixel-flow
updates, the second decoder and the L1 training losses."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import arch
from .arch import ArchConfig
from .backbone import BaselineOut, decoder
from .tensor import (
    ShapeError,
    apply_conv,
    as_tensor,
    concat,
    conv2d,
    conv_from,
    relu,
)
from .warp import TriFlow, pwb

MIXER = "boost/mixer"
GB = "boost/gb"
D2 = "boost/d2"


def _sigmoid64(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, np.float64)))


def mixer(agg2, fP: TriFlow, store: Mapping[str, np.ndarray], prefix: str = MIXER) -> np.ndarray:
    agg2 = as_tensor(agg2, "Agg2")
    head = conv_from(store, f"{prefix}/agg0")
    if agg2.shape[1] != head.c_in:
        raise ShapeError(f"mixer: Agg2 shape {agg2.shape} vs kernel {head.kernel.shape}")
    a = relu(apply_conv(relu(conv2d(agg2, head)), store, f"{prefix}/agg1"))
    b = relu(apply_conv(relu(apply_conv(fP.stack(), store, f"{prefix}/flow0")), store, f"{prefix}/flow1"))
    m = relu(apply_conv(concat([a, b]), store, f"{prefix}/fuse0"))
    return relu(apply_conv(m, store, f"{prefix}/fuse1"))


def _gru_pass(h, M, store, prefix, suffix, trace):
    hx = concat([h, M])
    z = _sigmoid64(apply_conv(hx, store, f"{prefix}/z{suffix}"))
    r = _sigmoid64(apply_conv(hx, store, f"{prefix}/r{suffix}"))
    q = np.tanh(np.asarray(apply_conv(concat([r * h, M]), store, f"{prefix}/q{suffix}"), np.float64))
    if trace is not None:
        trace[f"z{suffix}"], trace[f"r{suffix}"], trace[f"q{suffix}"] = z, r, q
    return (1.0 - z) * h + z * q


def gru_booster_step(F_rec, M, store: Mapping[str, np.ndarray], prefix: str = GB,
                     trace: Optional[dict] = None) -> Tuple[np.ndarray, TriFlow]:
    """One horizontal (1x5) then vertical (5x1) GRU update and the flow increment.

    If ``trace`` is a dict it receives the gate planes and the intermediate
    hidden state for inspection.
    """
    F_rec, M = as_tensor(F_rec, "F_rec"), as_tensor(M, "M")
    if F_rec.shape[0] != M.shape[0] or F_rec.shape[2:] != M.shape[2:]:
        raise ShapeError(f"GRU inputs differ spatially: {F_rec.shape} vs {M.shape}")
    zh = store[f"{prefix}/zh/kernel"]
    if zh.shape[1] != F_rec.shape[1] + M.shape[1] or zh.shape[0] != F_rec.shape[1]:
        raise ShapeError(f"GRU channel mismatch: F_rec {F_rec.shape}, M {M.shape}, kernel {zh.shape}")
    h = np.asarray(F_rec, np.float64)
    h = _gru_pass(h, M, store, prefix, "h", trace)
    if trace is not None:
        trace["h_mid"] = h
    h = _gru_pass(h, M, store, prefix, "v", trace)
    delta = apply_conv(relu(apply_conv(h, store, f"{prefix}/delta0")), store, f"{prefix}/delta1")
    return h.astype(np.float32), TriFlow.from_stack(delta.astype(np.float32))


@dataclass
class BoostState:
    fP: TriFlow
    F_rec: np.ndarray
    iteration: int = 0


@dataclass
class BoostResult:
    outputs: List[Tuple[np.ndarray, np.ndarray, np.ndarray]]
    deltas: List[TriFlow]
    state: BoostState
    fF: TriFlow
    traces: List[dict] = field(default_factory=list)


def aggregate2(base: BaselineOut, frames: Sequence) -> np.ndarray:
    agg2 = concat([base.S0r, base.Str, base.S1r, *frames, base.f01, base.f10, base.fF.stack()])
    if agg2.shape[1] != arch.AGG2:
        raise ShapeError(f"Agg2 must have {arch.AGG2} channels, got {agg2.shape[1]}")
    return agg2


def aggregate3(base: BaselineOut, St_i, frames: Sequence, fP: TriFlow, F_rec) -> np.ndarray:
    agg3 = concat([base.S0r, St_i, base.S1r, *frames, base.fF.stack(), fP.stack(), F_rec])
    if agg3.shape[1] != arch.AGG3:
        raise ShapeError(f"Agg3 must have {arch.AGG3} channels, got {agg3.shape[1]}")
    return agg3


def decoder2(agg3, store: Mapping[str, np.ndarray], cfg: ArchConfig = ArchConfig()) -> np.ndarray:
    x = apply_conv(agg3, store, f"{D2}/head")
    return decoder(x, store, D2, cfg.n_resb)


def initial_state(base: BaselineOut, store: Mapping[str, np.ndarray]) -> BoostState:
    seed = concat([base.F0r, base.Ftr, base.F1r])
    if seed.shape[1] != arch.REC_SEED:
        raise ShapeError(f"recurrent seed must have {arch.REC_SEED} channels, got {seed.shape[1]}")
    F_rec = apply_conv(seed, store, "boost/rec_init")
    fP = TriFlow.from_stack(np.asarray(base.fF.stack(), np.float64))
    return BoostState(fP=fP, F_rec=F_rec, iteration=0)


def _as_f32(tri: TriFlow) -> TriFlow:
    return TriFlow.from_stack(tri.stack().astype(np.float32))


def boost_iteration(state: BoostState, base: BaselineOut, frames, agg2, t: float,
                    store: Mapping[str, np.ndarray], cfg: ArchConfig = ArchConfig(),
                    trace: Optional[dict] = None):
    M = mixer(agg2, _as_f32(state.fP), store)
    F_rec, delta = gru_booster_step(state.F_rec, M, store, trace=trace)
    # pixel flows accumulate in float64 so the running sum telescopes exactly
    fP = state.fP + TriFlow.from_stack(np.asarray(delta.stack(), np.float64))
    St_i = pwb(base.S0r, base.S1r, fP, t).astype(np.float32)
    res = decoder2(aggregate3(base, St_i, frames, _as_f32(fP), F_rec), store, cfg)
    c = arch.IMG_CH
    out = tuple(np.asarray(x, np.float32) for x in
                (base.S0r + res[:, :c], St_i + res[:, c:2 * c], base.S1r + res[:, 2 * c:]))
    return BoostState(fP, F_rec, state.iteration + 1), delta, out


def recursive_boost(base: BaselineOut, frames: Sequence, t: float, n_tst: int,
                    store: Mapping[str, np.ndarray], cfg: ArchConfig = ArchConfig(),
                    keep_traces: bool = False) -> BoostResult:
    """Run ``n_tst`` boosting iterations; every iteration's frame triplet is kept."""
    if int(n_tst) != n_tst or n_tst < 1:
        raise ValueError(f"n_tst must be a positive integer, got {n_tst}")
    frames = [as_tensor(f, "frame") for f in frames]
    agg2 = aggregate2(base, frames)
    state = initial_state(base, store)
    result = BoostResult(outputs=[], deltas=[], state=state, fF=base.fF)
    for _ in range(int(n_tst)):
        trace = {} if keep_traces else None
        state, delta, out = boost_iteration(state, base, frames, agg2, t, store, cfg, trace)
        result.outputs.append(out)
        result.deltas.append(delta)
        if keep_traces:
            result.traces.append(trace)
    result.state = state
    return result


# -- losses -----------------------------------------------------------------

@dataclass
class LossReport:
    l_d1: float
    l_d2_per_iter: List[float]
    total: float


def l1_term(frames: Sequence, gts: Sequence) -> float:
    """Mean absolute error averaged over the (0, t, 1) frame triplet."""
    total = 0.0
    for s, g in zip(frames, gts):
        s, g = np.asarray(s, np.float64), np.asarray(g, np.float64)
        if s.shape != g.shape:
            raise ShapeError(f"loss: prediction shape {s.shape} vs ground truth {g.shape}")
        total += float(np.abs(s - g).mean())
    return total / 3.0


def compute_losses(per_iter: Sequence, baseline: Sequence, GT0, GTt, GT1, n_trn: int) -> LossReport:
    """Baseline reconstruction loss plus the first ``n_trn`` boosting losses."""
    if n_trn < 0 or len(per_iter) < n_trn:
        raise ValueError(f"need {n_trn} boosting outputs, got {len(per_iter)}")
    gts = (GT0, GTt, GT1)
    l_d1 = l1_term(baseline, gts)
    l_d2 = [l1_term(out, gts) for out in per_iter[:n_trn]]
    return LossReport(l_d1=l_d1, l_d2_per_iter=l_d2, total=l_d1 + sum(l_d2))
