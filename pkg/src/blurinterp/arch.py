"""Network dimensions and the parameter layout of both network stages."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

WIDTH = 64
N_FRAMES = 4
IMG_CH = 3

# channel bookkeeping at each junction
FFRDB_OUT = WIDTH * 2 + 2 * 2 + 1                    # F0', F1', f01, f10, o_t0
AGG1 = WIDTH * 3 + 2 * 4 + 1                         # F0b, Ft, F1b, f_t0, f_t1, o_t0, f01, f10
RM_OUT = WIDTH * 2 + 2 * 2 + 1                       # residual onto F0b, F1b, f_t0, f_t1, o_t0
REC_SEED = WIDTH * 3                                 # F0r, Ftr, F1r
AGG2 = IMG_CH * 3 + IMG_CH * N_FRAMES + 2 * 2 + 5    # S0r, Str, S1r, B_-1..B_2, f01, f10, fF
AGG3 = IMG_CH * 3 + IMG_CH * N_FRAMES + 5 + 5 + WIDTH  # S0r, Str_i, S1r, B_-1..B_2, fF, fP_i, F_rec
TRIFLOW = 5

assert FFRDB_OUT == 133 and AGG1 == 201 and RM_OUT == 133
assert REC_SEED == 192 and AGG2 == 30 and AGG3 == 95


@dataclass(frozen=True)
class ArchConfig:
    width: int = WIDTH
    growth: int = 32
    n_rdb: int = 12
    rdb_layers: int = 4
    shuffle: int = 2
    rm_widths: Tuple[int, int, int] = (64, 128, 256)
    n_resb: int = 5
    mixer_width: int = 64
    delta_hidden: int = 64

    @property
    def size_multiple(self) -> int:
        # the RM U-Net halves twice
        return max(self.shuffle, 4)


Shapes = Dict[str, Tuple[int, ...]]


def _conv(shapes: Shapes, path: str, c_in: int, c_out: int, kh: int, kw: int | None = None):
    kw = kh if kw is None else kw
    shapes[f"{path}/kernel"] = (c_out, c_in, kh, kw)
    shapes[f"{path}/bias"] = (c_out,)


def _resb_stack(shapes: Shapes, prefix: str, width: int, n: int):
    for i in range(n):
        _conv(shapes, f"{prefix}/resb{i}/conv0", width, width, 3)
        _conv(shapes, f"{prefix}/resb{i}/conv1", width, width, 3)


def baseline_shapes(cfg: ArchConfig = ArchConfig()) -> Shapes:
    s: Shapes = {}
    w, r = cfg.width, cfg.shuffle
    p = "backbone/ffrdb"
    _conv(s, f"{p}/sfe0", IMG_CH * N_FRAMES * r * r, w, 3)
    _conv(s, f"{p}/sfe1", w, w, 3)
    for b in range(cfg.n_rdb):
        for j in range(cfg.rdb_layers):
            _conv(s, f"{p}/rdb{b:02d}/conv{j}", w + j * cfg.growth, cfg.growth, 3)
        _conv(s, f"{p}/rdb{b:02d}/fuse", w + cfg.rdb_layers * cfg.growth, w, 1)
    _conv(s, f"{p}/gff0", w * cfg.n_rdb, w, 1)
    _conv(s, f"{p}/gff1", w, w, 3)
    _conv(s, f"{p}/up", w, w * r * r, 3)
    _conv(s, f"{p}/out", w, FFRDB_OUT, 3)

    p = "backbone/facfb"
    _resb_stack(s, f"{p}/encoder", w, cfg.n_resb)
    for name in ("query", "key", "value", "embed"):
        _conv(s, f"{p}/fac/{name}", w, w, 1)
    _conv(s, f"{p}/fac/gate0", 2 * w, w, 3)
    _conv(s, f"{p}/fac/gate1", w, 1, 3)

    p = "backbone/rm"
    c0, c1, c2 = cfg.rm_widths
    _conv(s, f"{p}/enc0a", AGG1, c0, 3)
    _conv(s, f"{p}/enc0b", c0, c0, 3)
    _conv(s, f"{p}/enc1a", c0, c1, 3)
    _conv(s, f"{p}/enc1b", c1, c1, 3)
    _conv(s, f"{p}/enc2a", c1, c2, 3)
    _conv(s, f"{p}/enc2b", c2, c2, 3)
    _conv(s, f"{p}/dec1", c2 + c1, c1, 3)
    _conv(s, f"{p}/dec0", c1 + c0, c0, 3)
    _conv(s, f"{p}/out", c0, RM_OUT, 3)

    _resb_stack(s, "backbone/d1", w, cfg.n_resb)
    _conv(s, "backbone/d1/proj", w, IMG_CH, 3)
    return s


def boost_shapes(cfg: ArchConfig = ArchConfig()) -> Shapes:
    s: Shapes = {}
    w, m = cfg.width, cfg.mixer_width
    _conv(s, "boost/rec_init", REC_SEED, w, 1)
    p = "boost/mixer"
    _conv(s, f"{p}/agg0", AGG2, m, 7)
    _conv(s, f"{p}/agg1", m, m, 3)
    _conv(s, f"{p}/flow0", TRIFLOW, m, 7)
    _conv(s, f"{p}/flow1", m, m, 3)
    _conv(s, f"{p}/fuse0", 2 * m, w, 3)
    _conv(s, f"{p}/fuse1", w, w, 3)
    p = "boost/gb"
    for gate in ("z", "r", "q"):
        _conv(s, f"{p}/{gate}h", 2 * w, w, 1, 5)
    for gate in ("z", "r", "q"):
        _conv(s, f"{p}/{gate}v", 2 * w, w, 5, 1)
    _conv(s, f"{p}/delta0", w, cfg.delta_hidden, 3)
    _conv(s, f"{p}/delta1", cfg.delta_hidden, TRIFLOW, 3)
    p = "boost/d2"
    _conv(s, f"{p}/head", AGG3, w, 3)
    _resb_stack(s, p, w, cfg.n_resb)
    _conv(s, f"{p}/proj", w, 3 * IMG_CH, 3)
    return s


def parameter_shapes(arch: str, cfg: ArchConfig = ArchConfig()) -> Shapes:
    if arch == "bs":
        return baseline_shapes(cfg)
    if arch == "rb":
        return {**baseline_shapes(cfg), **boost_shapes(cfg)}
    raise ValueError(f"unknown architecture {arch!r}; expected 'bs' or 'rb'")
