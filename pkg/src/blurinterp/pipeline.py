"""Multi-frame inference over a blurry sequence."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .arch import ArchConfig
from .backbone import baseline_at, encode
from .boost import recursive_boost

log = logging.getLogger(__name__)

DEFAULT_T_LIST = tuple(Fraction(k, 8) for k in range(1, 8))
DEFAULT_N_TST = 3


def parse_t_list(text: str) -> List[Fraction]:
    """Parse ``"1/8,2/8,0.5"`` into fractions strictly inside (0, 1)."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        t = Fraction(tok).limit_denominator(10_000)
        if not 0 < t < 1:
            raise ValueError(f"t={tok} must lie strictly inside (0, 1)")
        out.append(t)
    if not out:
        raise ValueError("empty t list")
    return sorted(set(out))


@dataclass
class QuadResult:
    """Frames produced for one blurry quadruple (B_-1, B_0, B_1, B_2)."""

    S0: np.ndarray
    S1: np.ndarray
    interpolated: Dict[Fraction, np.ndarray]


def interpolate_quadruple(frames: Sequence, t_list: Sequence, store: Mapping[str, np.ndarray],
                          stage: str = "rb", n_tst: int = DEFAULT_N_TST,
                          cfg: ArchConfig = ArchConfig()) -> QuadResult:
    """Deblur B_0, B_1 and synthesise a frame at every t.

    The backbone and FAC-FB run once; everything after t-alignment runs per
    t.  The deblurred anchors come from the smallest t (for B_0) and the
    largest t (for B_1).
    """
    if stage not in ("bs", "rb"):
        raise ValueError(f"stage must be 'bs' or 'rb', got {stage!r}")
    t_list = sorted(Fraction(t) for t in t_list)
    enc = encode(frames, store, cfg)
    per_t = {}
    for t in t_list:
        base = baseline_at(enc, float(t), store, cfg)
        if stage == "bs":
            per_t[t] = (base.S0r, base.Str, base.S1r)
        else:
            res = recursive_boost(base, enc.frames, float(t), n_tst, store, cfg)
            per_t[t] = res.outputs[-1]
        log.debug("t=%s done", t)
    return QuadResult(
        S0=per_t[t_list[0]][0],
        S1=per_t[t_list[-1]][2],
        interpolated={t: per_t[t][1] for t in t_list},
    )


def infer_sequence(blurry: Sequence, t_list: Sequence, store: Mapping[str, np.ndarray],
                   stage: str = "rb", n_tst: int = DEFAULT_N_TST,
                   cfg: ArchConfig = ArchConfig()) -> List[Tuple[Fraction, np.ndarray]]:
    """Slide over every quadruple and return (time, frame) in timeline order.

    Time is measured in blurry-frame units; the deblurred B_k sits at time k.
    """
    blurry = list(blurry)
    if len(blurry) < 4:
        raise ValueError(f"need at least 4 blurry frames, got {len(blurry)}")
    timeline: Dict[Fraction, np.ndarray] = {}
    for k in range(1, len(blurry) - 2):
        quad = interpolate_quadruple(blurry[k - 1:k + 3], t_list, store, stage, n_tst, cfg)
        timeline.setdefault(Fraction(k), quad.S0)
        for t, frame in quad.interpolated.items():
            timeline[k + t] = frame
        timeline.setdefault(Fraction(k + 1), quad.S1)
    return sorted(timeline.items())


def timeline_denominator(t_list: Sequence) -> int:
    return lcm(*(Fraction(t).denominator for t in t_list))
