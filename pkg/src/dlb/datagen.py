"""Seeded synthetic key generators and the binary ``.dlbk`` dataset format.

Uniform variates come from the counter-based Philox generator; normal
variates are produced from them with the Box-Muller transform, and
log-normal variates are ``exp`` of those.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadSpec, FormatError

MAGIC = b"DLBK"
FILE_VERSION = 1
_HEADER = struct.Struct("<4sIQ")  # magic, version, count -> 16 bytes

DEFAULT_PARAMS = {
    "uniform": (0.0, 1e6),
    "normal": (500000.0, 100000.0),
    "lognormal": (10.0, 1.0),
}
DEFAULT_COUNT = 200_000


@dataclass(frozen=True)
class DistributionSpec:
    kind: str
    params: tuple = field(default=None)
    count: int = DEFAULT_COUNT
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFAULT_PARAMS:
            raise BadSpec(f"unknown distribution {self.kind!r}")
        if self.params is None:
            object.__setattr__(self, "params", DEFAULT_PARAMS[self.kind])
        if len(self.params) != 2:
            raise BadSpec("distributions take exactly two parameters")
        a, b = (float(p) for p in self.params)
        if not (np.isfinite(a) and np.isfinite(b)):
            raise BadSpec("parameters must be finite")
        if self.kind == "uniform" and not a < b:
            raise BadSpec("uniform needs low < high")
        if self.kind != "uniform" and not b > 0:
            raise BadSpec(f"{self.kind} needs a positive spread parameter")
        if int(self.count) != self.count or self.count < 1:
            raise BadSpec("count must be a positive integer")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise BadSpec("seed must fit in an unsigned 64-bit integer")


def _box_muller(rng: np.random.Generator, count: int) -> np.ndarray:
    half = (count + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1]
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]


def generate(spec: DistributionSpec) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(int(spec.seed)))
    a, b = (float(p) for p in spec.params)
    if spec.kind == "uniform":
        return a + (b - a) * rng.random(spec.count)
    z = _box_muller(rng, spec.count)
    if spec.kind == "normal":
        return a + b * z
    return np.exp(a + b * z)


def write_dataset(keys, path) -> None:
    arr = np.ascontiguousarray(keys, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FILE_VERSION, arr.size))
        fh.write(arr.tobytes())


def read_dataset(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a dataset header")
    magic, version, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FILE_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    payload = raw[_HEADER.size:]
    if len(payload) != 8 * count:
        raise FormatError(f"{path}: header says {count} keys but payload holds {len(payload) / 8:g}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64)
