"""Hierarchical learned mapping from keys to ring positions.

A key is normalised into ``[0, 1]``, passed through one disperse model per
layer (each picks a model of the next layer by rounding its output to an
index), and finally through a leaf model that predicts an offset ``mu``
inside the leaf's sub-circle. Leaf ``i`` (1-based) owns the ring segment
``[(i - 1) * t, i * t)`` with ``t = T / num_leaves``, so the global position is
``mu + (i - 1) * t``.

Disperse models emit global indices: a model in layer ``phi`` may select any
of the ``C`` models of layer ``phi + 1``, where ``C`` is the product of the
first ``phi + 1`` fanouts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, UnsupportedKey, UnsupportedVersion, ValidationError
from .nn import MLP, forward
from .ring import DEFAULT_RING_SIZE, check_ring_size

FORMAT_VERSION = 1
DEFAULT_FANOUTS = (2, 2, 2, 2)


@dataclass(frozen=True)
class HierConfig:
    fanouts: tuple = DEFAULT_FANOUTS
    T: int = DEFAULT_RING_SIZE

    def __post_init__(self):
        fanouts = tuple(int(f) for f in self.fanouts)
        if not fanouts or any(f < 1 for f in fanouts):
            raise ValidationError(f"fanouts must be a non-empty list of positive integers, got {self.fanouts}")
        object.__setattr__(self, "fanouts", fanouts)
        check_ring_size(self.T)
        if self.T % self.num_leaves:
            raise ValidationError(f"{self.num_leaves} leaves do not divide the ring size {self.T}")

    @property
    def num_leaves(self) -> int:
        return math.prod(self.fanouts)

    @property
    def t(self) -> int:
        """Width of one sub-circle."""
        return self.T // self.num_leaves

    def layer_size(self, phi: int) -> int:
        """Number of models in layer ``phi`` (0 = root, ``len(fanouts)`` = leaves)."""
        return math.prod(self.fanouts[:phi])


def _round_half_up(values):
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


def vectorize_key(key, norm) -> np.ndarray:
    """Length-1 feature vector ``(key - min) / (max - min)`` clamped to ``[0, 1]``.

    Strings and bytes are accepted when they parse as decimal numbers.
    """
    lo, hi = norm
    if not lo < hi:
        raise ValidationError(f"normalisation bounds must satisfy min < max, got {norm}")
    if isinstance(key, (bytes, bytearray)):
        try:
            key = key.decode("ascii")
        except UnicodeDecodeError:
            raise UnsupportedKey(f"cannot decode key {key!r}") from None
    if isinstance(key, str):
        try:
            key = float(key)
        except ValueError:
            raise UnsupportedKey(f"key {key!r} is not a decimal number") from None
    try:
        value = float(key)
    except (TypeError, ValueError):
        raise UnsupportedKey(f"unsupported key type {type(key).__name__}") from None
    if not math.isfinite(value):
        raise UnsupportedKey(f"key {key!r} is not finite")
    return np.array([min(1.0, max(0.0, (value - lo) / (hi - lo)))])


def vectorize_keys(keys, norm) -> np.ndarray:
    """Batch form of :func:`vectorize_key` for numeric arrays; shape ``(n, 1)``."""
    lo, hi = norm
    k = np.asarray(keys, dtype=np.float64)
    if not np.all(np.isfinite(k)):
        raise UnsupportedKey("keys must be finite")
    return np.clip((k - lo) / (hi - lo), 0.0, 1.0).reshape(-1, 1)


class HierModel:
    def __init__(self, config: HierConfig, disperse, leaves, key_norm):
        self.config = config
        self.disperse = [list(layer) for layer in disperse]
        self.leaves = list(leaves)
        self.key_norm = (float(key_norm[0]), float(key_norm[1]))
        if not self.key_norm[0] < self.key_norm[1]:
            raise ValidationError(f"key_norm must satisfy min < max, got {key_norm}")
        if len(self.disperse) != len(config.fanouts):
            raise ValidationError(f"{len(self.disperse)} disperse layers for fanouts {config.fanouts}")
        for phi, layer in enumerate(self.disperse):
            if len(layer) != config.layer_size(phi):
                raise ValidationError(f"disperse layer {phi} has {len(layer)} models, "
                                      f"expected {config.layer_size(phi)}")
        if len(self.leaves) != config.num_leaves:
            raise ValidationError(f"{len(self.leaves)} leaf models, expected {config.num_leaves}")

    # single-key path -------------------------------------------------
    def route(self, x) -> int:
        """1-based id of the leaf reached by feature vector ``x``."""
        current = 1
        for phi, layer in enumerate(self.disperse):
            out = forward(layer[current - 1], x)
            current = int(min(max(_round_half_up(out), 1), self.config.layer_size(phi + 1)))
        return current

    def local_position(self, leaf_id: int, x) -> int:
        mu = _round_half_up(forward(self.leaves[leaf_id - 1], x))
        return int(min(max(mu, 0), self.config.t - 1))

    def map_position(self, key) -> int:
        x = vectorize_key(key, self.key_norm)
        leaf = self.route(x)
        return self.local_position(leaf, x) + (leaf - 1) * self.config.t

    # batched path ----------------------------------------------------
    def route_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, 1)
        current = np.ones(len(X), dtype=np.int64)
        for phi, layer in enumerate(self.disperse):
            nxt = np.empty_like(current)
            limit = self.config.layer_size(phi + 1)
            for k, net in enumerate(layer, start=1):
                sel = np.flatnonzero(current == k)
                if sel.size:
                    nxt[sel] = np.clip(_round_half_up(net.predict(X[sel])), 1, limit)
            current = nxt
        return current

    def map_positions(self, keys) -> np.ndarray:
        """Ring positions for an array of numeric keys."""
        X = vectorize_keys(keys, self.key_norm)
        leaves = self.route_many(X)
        t = self.config.t
        pos = np.empty(len(X), dtype=np.int64)
        for i, net in enumerate(self.leaves, start=1):
            sel = np.flatnonzero(leaves == i)
            if sel.size:
                mu = np.clip(_round_half_up(net.predict(X[sel])), 0, t - 1).astype(np.int64)
                pos[sel] = mu + (i - 1) * t
        return pos

    def __call__(self, keys) -> np.ndarray:
        return self.map_positions(keys)

    # serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "kind": "dlb-hierarchical",
            "fanouts": list(self.config.fanouts),
            "T": self.config.T,
            "t": self.config.t,
            "key_norm": list(self.key_norm),
            "disperse": [[net.to_dict() for net in layer] for layer in self.disperse],
            "leaves": [net.to_dict() for net in self.leaves],
        }

    @classmethod
    def from_dict(cls, doc) -> "HierModel":
        if not isinstance(doc, dict):
            raise ParseError("model document must be a JSON object")
        if doc.get("version") != FORMAT_VERSION:
            raise UnsupportedVersion(f"model format version {doc.get('version')!r}")
        try:
            config = HierConfig(tuple(doc["fanouts"]), int(doc["T"]))
            if int(doc["t"]) != config.t:
                raise ValidationError(f"sub-circle width {doc['t']} inconsistent with T / leaves = {config.t}")
            disperse = [[MLP.from_dict(d) for d in layer] for layer in doc["disperse"]]
            leaves = [MLP.from_dict(d) for d in doc["leaves"]]
            return cls(config, disperse, leaves, doc["key_norm"])
        except KeyError as exc:
            raise ParseError(f"model document missing field {exc}") from None
        except (TypeError, IndexError) as exc:
            raise ParseError(f"malformed model document: {exc}") from None


def serialize(model: HierModel) -> str:
    return json.dumps(model.to_dict())


def deserialize(text) -> HierModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return HierModel.from_dict(doc)


def save_model(model: HierModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize(model))


def load_model(path) -> HierModel:
    with open(path) as fh:
        return deserialize(fh.read())
