"""WeightStore container: Xavier initialisation and the binary file format.

File layout (little-endian)::

    b"DMFI" | u32 version=1 | u64 entry count
    per entry: u32 path length | UTF-8 path | u8 dtype (0 = float32)
               | u8 rank | rank x u64 dims | raw float32 payload
"""
from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Dict, Iterator, MutableMapping

import numpy as np

from .arch import ArchConfig, parameter_shapes

MAGIC = b"DMFI"
VERSION = 1
DTYPE_F32 = 0


class WeightFormatError(ValueError):
    """A weight file is malformed; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class WeightStore(MutableMapping):
    """Ordered mapping from parameter path to float32 array."""

    def __init__(self, items=None):
        self._data: Dict[str, np.ndarray] = {}
        if items:
            for k, v in dict(items).items():
                self[k] = v

    def __getitem__(self, key: str) -> np.ndarray:
        return self._data[key]

    def __setitem__(self, key: str, value) -> None:
        if not isinstance(key, str) or not key:
            raise KeyError(f"parameter path must be a non-empty string, got {key!r}")
        self._data[key] = np.array(value, dtype=np.float32, order="C")

    def __delitem__(self, key: str) -> None:
        del self._data[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __repr__(self) -> str:
        return f"WeightStore({len(self)} tensors, {self.num_parameters()} parameters)"

    def num_parameters(self, prefix: str = "") -> int:
        return int(sum(v.size for k, v in self._data.items()
                       if k.startswith(prefix) and not k.startswith("meta/")))

    def equals(self, other: "WeightStore") -> bool:
        if list(self) != list(other):
            return False
        return all(self[k].shape == other[k].shape and self[k].tobytes() == other[k].tobytes() for k in self)

    def arch(self) -> str:
        return "rb" if any(k.startswith("boost/") for k in self) else "bs"


def xavier_bound(shape) -> float:
    c_out, c_in = shape[0], shape[1]
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    return math.sqrt(6.0 / (c_in * receptive + c_out * receptive))


def xavier_init(arch: str = "rb", seed: int = 0, cfg: ArchConfig = ArchConfig()) -> WeightStore:
    """Kernels uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero."""
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for path, shape in parameter_shapes(arch, cfg).items():
        if path.endswith("/kernel"):
            b = xavier_bound(shape)
            store[path] = rng.uniform(-b, b, size=shape)
        else:
            store[path] = np.zeros(shape)
    return store


def zero_init(arch: str = "rb", cfg: ArchConfig = ArchConfig()) -> WeightStore:
    return WeightStore({p: np.zeros(s) for p, s in parameter_shapes(arch, cfg).items()})


def dumps(store: WeightStore) -> bytes:
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(store))]
    for path, arr in store.items():
        name = path.encode("utf-8")
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> WeightStore:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise WeightFormatError(f"truncated file while reading {what}: need {n} bytes, "
                                    f"{len(buf) - pos} left", pos)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise WeightFormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    version, count = struct.unpack("<IQ", take(12, "header"))
    if version != VERSION:
        raise WeightFormatError(f"unsupported version {version}", 4)
    store = WeightStore()
    for i in range(count):
        start = pos
        (n,) = struct.unpack("<I", take(4, f"entry {i} path length"))
        try:
            path = take(n, f"entry {i} path").decode("utf-8")
        except UnicodeDecodeError:
            raise WeightFormatError(f"entry {i} path is not valid UTF-8", start + 4) from None
        dtype, rank = struct.unpack("<BB", take(2, f"entry {i} dtype/rank"))
        if dtype != DTYPE_F32:
            raise WeightFormatError(f"entry {path!r} has unknown dtype code {dtype}", pos - 2)
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, f"entry {path!r} dims"))
        size = int(np.prod(dims)) if rank else 1
        payload = take(4 * size, f"entry {path!r} payload")
        if path in store:
            raise WeightFormatError(f"duplicate parameter path {path!r}", start)
        store[path] = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if pos != len(buf):
        raise WeightFormatError(f"{len(buf) - pos} trailing bytes after {count} entries", pos)
    return store


def save_weights(store: WeightStore, path) -> None:
    Path(path).write_bytes(dumps(store))


def load_weights(path) -> WeightStore:
    return loads(Path(path).read_bytes())
