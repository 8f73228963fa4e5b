"""Numbered PNG sequence reading and writing."""
from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

from .degrade import FrameSequence

_NUMBERED = re.compile(r"^(\d+)\.png$", re.IGNORECASE)


class SequenceError(ValueError):
    pass


def _numbered_files(directory: Path):
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    found = []
    for p in directory.iterdir():
        m = _NUMBERED.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    found.sort()
    return found


def read_frame(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)[None].copy()


def write_frame(frame, path) -> None:
    f = np.asarray(frame, np.float64)
    while f.ndim > 3:
        f = f[0]
    img = np.clip(np.rint(f * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(img, mode="RGB").save(path)


def read_sequence(directory, fps: float = 30.0) -> FrameSequence:
    """Load ``NNNN.png`` files (contiguous numbering) as frames in [0, 1]."""
    directory = Path(directory)
    found = _numbered_files(directory)
    if not found:
        raise SequenceError(f"no numbered PNG frames in {directory}")
    start = found[0][0]
    for k, (num, path) in enumerate(found):
        if num != start + k:
            raise SequenceError(f"frame numbering gap in {directory}: expected {start + k}, found {path.name}")
    frames = [read_frame(p) for _, p in found]
    shape = frames[0].shape
    for (_, p), f in zip(found, frames):
        if f.shape != shape:
            raise SequenceError(f"{p.name} has size {f.shape[2]}x{f.shape[3]}, expected {shape[2]}x{shape[3]}")
    return FrameSequence(frames, fps=fps)


def write_sequence(seq: FrameSequence | Iterable[np.ndarray], directory, start: int = 0,
                   digits: Optional[int] = None) -> list:
    frames = seq.frames if isinstance(seq, FrameSequence) else list(seq)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digits = digits or max(5, len(str(start + len(frames))))
    paths = []
    for k, f in enumerate(frames):
        p = directory / f"{start + k:0{digits}d}.png"
        write_frame(f, p)
        paths.append(p)
    return paths
