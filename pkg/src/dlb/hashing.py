"""The three non-cryptographic hash functions used by the hash baselines.

``fnv1a`` stands in for the interpreter's built-in string hash, which is
salted per process and therefore useless as a reproducible baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownHash
from .ring import check_ring_size

MASK32 = 0xFFFFFFFF
BKDR_SEED = 131
FNV32_OFFSET = 0x811C9DC5
FNV32_PRIME = 0x01000193


def bkdr_hash(data: bytes, seed: int = BKDR_SEED) -> int:
    h = 0
    for byte in data:
        h = (h * seed + byte) & MASK32
    return h


def _rotl32(x, r):
    return ((x << r) | (x >> (32 - r))) & MASK32


def murmur3_32(data: bytes, seed: int = 0) -> int:
    """MurmurHash3, x86 32-bit variant."""
    c1, c2 = 0xCC9E2D51, 0x1B873593
    h = seed & MASK32
    n = len(data)
    tail = n & ~3
    for i in range(0, tail, 4):
        k = data[i] | (data[i + 1] << 8) | (data[i + 2] << 16) | (data[i + 3] << 24)
        k = (k * c1) & MASK32
        k = _rotl32(k, 15)
        k = (k * c2) & MASK32
        h ^= k
        h = _rotl32(h, 13)
        h = (h * 5 + 0xE6546B64) & MASK32
    k = 0
    rem = n & 3
    if rem == 3:
        k ^= data[tail + 2] << 16
    if rem >= 2:
        k ^= data[tail + 1] << 8
    if rem >= 1:
        k ^= data[tail]
        k = (k * c1) & MASK32
        k = _rotl32(k, 15)
        k = (k * c2) & MASK32
        h ^= k
    h ^= n
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & MASK32
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & MASK32
    h ^= h >> 16
    return h


def fnv1a_32(data: bytes) -> int:
    h = FNV32_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV32_PRIME) & MASK32
    return h


@dataclass(frozen=True)
class HashFn:
    """A registered hash function plus its seed (ignored by fnv1a)."""

    name: str = "bkdr"
    seed: int | None = None

    def __post_init__(self):
        if self.name not in HASHES:
            raise UnknownHash(f"unknown hash function {self.name!r}; choose from {sorted(HASHES)}")

    def __call__(self, data: bytes) -> int:
        if self.name == "bkdr":
            return bkdr_hash(data, BKDR_SEED if self.seed is None else self.seed)
        if self.name == "murmur3":
            return murmur3_32(data, 0 if self.seed is None else self.seed)
        return fnv1a_32(data)


HASHES = ("bkdr", "murmur3", "fnv1a")


def key_bytes(key) -> bytes:
    """Bytes that get hashed for a key: floats use their shortest round-trip decimal form."""
    if isinstance(key, (bytes, bytearray)):
        return bytes(key)
    if isinstance(key, str):
        return key.encode("utf-8")
    return repr(float(key)).encode("ascii")


def hash_to_ring(key, fn, T: int) -> int:
    T = check_ring_size(T)
    if isinstance(fn, str):
        fn = HashFn(fn)
    elif not isinstance(fn, HashFn):
        raise UnknownHash(f"not a hash function: {fn!r}")
    return fn(key_bytes(key)) % T


def hash_keys(keys, fn, T: int):
    """Vector of ring positions for many keys (one Python-level hash per key)."""
    T = check_ring_size(T)
    if isinstance(fn, str):
        fn = HashFn(fn)
    return np.fromiter((fn(key_bytes(k)) % T for k in keys), dtype=np.int64, count=len(keys))
