"""Blurry low-frame-rate sequence synthesis from sharp high-frame-rate video."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence

import numpy as np

from .tensor import ShapeError, as_tensor


@dataclass
class FrameSequence:
    frames: List[np.ndarray]
    fps: float = 240.0
    # sharp-frame index each frame is centred on, when known
    anchors: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a frame sequence must not be empty")
        self.frames = [as_tensor(f, "frame") for f in self.frames]
        shape = self.frames[0].shape
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise ShapeError(f"frame {i} has shape {f.shape}, expected {shape}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def shape(self):
        return self.frames[0].shape


@dataclass(frozen=True)
class DegradeSpec:
    K: int = 8
    tau: int = 5

    def __post_init__(self):
        if self.K < 1 or self.tau < 0:
            raise ValueError(f"need K >= 1 and tau >= 0, got K={self.K}, tau={self.tau}")

    @property
    def window(self) -> int:
        return 2 * self.tau + 1


def blur_windows(n_frames: int, spec: DegradeSpec):
    """(i, first, last) for every output index whose window lies inside the sequence."""
    out = []
    i = 0
    while i * spec.K + spec.tau <= n_frames - 1:
        lo = i * spec.K - spec.tau
        if lo >= 0:
            out.append((i, lo, i * spec.K + spec.tau))
        i += 1
    return out


def synth_blur(seq: FrameSequence, spec: DegradeSpec = DegradeSpec()) -> FrameSequence:
    """Average the 2*tau+1 sharp frames centred on every K-th frame.

    Windows reaching outside the sequence are skipped, not padded.
    """
    windows = blur_windows(len(seq), spec)
    if not windows:
        first = -(-spec.tau // spec.K)
        need = first * spec.K + spec.tau + 1
        raise ValueError(f"sequence of {len(seq)} frames is too short for K={spec.K}, tau={spec.tau}; "
                         f"need at least {need}")
    frames, anchors = [], []
    for i, lo, hi in windows:
        acc = np.zeros(seq.shape, np.float64)
        for j in range(lo, hi + 1):
            acc += seq.frames[j]
        frames.append((acc / spec.window).astype(np.float32))
        anchors.append(i * spec.K)
    return FrameSequence(frames, fps=seq.fps / spec.K, anchors=anchors)


def gt_index(i: int, t, spec: DegradeSpec = DegradeSpec()) -> int:
    t = Fraction(t).limit_denominator(10_000)
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    steps = t * spec.K
    if steps.denominator != 1:
        raise ValueError(f"t={t} is not a multiple of 1/{spec.K}")
    return i * spec.K + int(steps)


def select_gt_frames(seq: FrameSequence, spec: DegradeSpec, t_list: Sequence, i: int = 0) -> FrameSequence:
    """Sharp frames at times t between blurry anchors i and i+1."""
    idx = [gt_index(i, t, spec) for t in t_list]
    for j in idx:
        if not 0 <= j < len(seq):
            raise ValueError(f"sharp index {j} outside a sequence of {len(seq)} frames")
    return FrameSequence([seq.frames[j] for j in idx], fps=seq.fps, anchors=idx)


def _resize_axis(x, n_out: int, axis: int):
    n_in = x.shape[axis]
    if n_out == n_in:
        return x
    # align-corners=False sampling positions
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    a = pos - lo
    shape = [1] * x.ndim
    shape[axis] = n_out
    a = a.reshape(shape)
    return np.take(x, lo, axis=axis) * (1 - a) + np.take(x, hi, axis=axis) * a


def resize_frame(x, new_h: int, new_w: int) -> np.ndarray:
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target size must be positive, got {new_h}x{new_w}")
    x = np.asarray(as_tensor(x), np.float64)
    y = _resize_axis(_resize_axis(x, new_h, 2), new_w, 3)
    return np.clip(y, 0.0, 1.0).astype(np.float32)


def resize_bilinear(seq: FrameSequence, new_h: int, new_w: int) -> FrameSequence:
    return FrameSequence([resize_frame(f, new_h, new_w) for f in seq.frames], fps=seq.fps,
                         anchors=list(seq.anchors))
