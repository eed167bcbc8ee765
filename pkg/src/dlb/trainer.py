"""Labelling and training for the hierarchical model.

Every training key gets a target ring position from its rank in the sorted
key list, ``rank * T / |K|``. Those targets are evenly spaced whatever the
key distribution, which is what flattens skew. Disperse models learn the
index of the next-layer model whose sub-circle range contains the target;
leaves learn the offset of the target inside their own sub-circle.

Each network is trained on its own slice of the data (selected by the
labels, not by upstream predictions) with inputs rescaled to ``[-1, 1]`` and
targets rescaled to ``[0, 1]``; both affine maps are folded back into the
first and last layers afterwards, so the stored networks consume the
normalised key directly and emit indices or offsets in ring units.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateKey, TooFewKeys, ValidationError
from .model import HierConfig, HierModel, vectorize_keys
from .nn import DEFAULT_HIDDEN, AdamState, MLP, adam_step, build_mlp

DEFAULT_EPOCHS = 100
DEFAULT_BATCH = 256
DEFAULT_LR = 0.01
DEFAULT_LR_FLOOR = 0.01


def make_mapping_labels(keys, T: int) -> np.ndarray:
    """``rank(k) * T / |K|`` for each key, in the order the keys are given."""
    K = np.asarray(keys, dtype=np.float64)
    if K.size == 0:
        raise TooFewKeys("no keys to label")
    order = np.argsort(K, kind="stable")
    if np.any(np.diff(K[order]) == 0):
        raise DuplicateKey("keys must be unique before labelling")
    ranks = np.empty(K.size, dtype=np.int64)
    ranks[order] = np.arange(K.size)
    return ranks * (T / K.size)


def make_disperse_labels(mapping_labels, fanouts, T: int) -> list[np.ndarray]:
    """1-based next-layer model index for each key, one array per disperse layer.

    For a layer whose next layer holds ``C`` models the index is
    ``floor(label / (T / C)) + 1`` clamped into ``[1, C]``.
    """
    labels = np.asarray(mapping_labels, dtype=np.float64)
    out = []
    C = 1
    for f in fanouts:
        C *= int(f)
        tag = np.floor(labels * C / T).astype(np.int64) + 1
        out.append(np.clip(tag, 1, C))
    return out


@dataclass
class LabeledSet:
    keys: np.ndarray  # sorted ascending, unique
    mapping_labels: np.ndarray
    disperse_labels: list
    T: int

    @classmethod
    def build(cls, keys, fanouts, T: int) -> "LabeledSet":
        K = np.unique(np.asarray(keys, dtype=np.float64))
        labels = make_mapping_labels(K, T)
        return cls(K, labels, make_disperse_labels(labels, fanouts, T), T)


def partition_for_leaves(labeled: LabeledSet, fanouts) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(key indices, local targets)`` for every leaf, local target = label - (id - 1) * t."""
    num_leaves = math.prod(fanouts)
    t = labeled.T // num_leaves
    leaf_ids = labeled.disperse_labels[-1]
    parts = []
    for leaf in range(1, num_leaves + 1):
        idx = np.flatnonzero(leaf_ids == leaf)
        parts.append((idx, labeled.mapping_labels[idx] - (leaf - 1) * t))
    return parts


@dataclass
class TrainReport:
    epochs: int
    loss_curve: list  # entry 0 is the loss before training
    model_losses: dict = field(default_factory=dict)  # (layer, index) -> final loss

    @property
    def total_loss(self) -> float:
        return float(sum(self.model_losses.values()))

    def to_csv(self) -> str:
        lines = ["epoch,total_loss"]
        lines += [f"{e},{loss!r}" for e, loss in enumerate(self.loss_curve)]
        return "\n".join(lines) + "\n"


@dataclass
class _Task:
    layer: int
    index: int
    x: np.ndarray  # normalised keys in [0, 1]
    y: np.ndarray  # targets in output units
    out_offset: float
    out_scale: float
    seed: tuple
    epochs: int
    batch_size: int
    lr: float
    lr_floor: float
    hidden: tuple


def _fit(task: _Task):
    """Train one network; returns (folded MLP, initial loss, per-epoch losses, final loss)."""
    rng = np.random.default_rng(np.random.SeedSequence(list(task.seed)))
    x_lo, x_hi = float(task.x.min()), float(task.x.max())
    x_scale = (x_hi - x_lo) / 2.0 if x_hi > x_lo else 1.0
    u = ((task.x - x_lo) / x_scale - 1.0).reshape(-1, 1)
    v = (task.y - task.out_offset) / task.out_scale
    net = build_mlp(1, task.hidden, rng)
    state = AdamState.for_model(net, lr=task.lr)
    n = u.shape[0]
    batch = min(task.batch_size, n)
    per_epoch = -(-n // batch)
    total = task.epochs * per_epoch
    initial = _mse(net, u, v)
    curve = []
    step = 0
    for _ in range(task.epochs):
        perm = rng.permutation(n)
        running = 0.0
        for b in range(per_epoch):
            idx = perm[b * batch:(b + 1) * batch]
            loss, grads = net.loss_and_grads(u[idx], v[idx])
            running += loss * idx.size
            frac = step / total
            lr = task.lr * (task.lr_floor + (1.0 - task.lr_floor) * 0.5 * (1.0 + math.cos(math.pi * frac)))
            adam_step(net, grads, state, lr=lr)
            step += 1
        curve.append(running / n)
    final = _mse(net, u, v)
    return _fold(net, x_lo, x_scale, task.out_offset, task.out_scale), initial, curve, final


def _mse(net, u, v):
    err = net.predict(u) - v
    return float(err @ err) / len(v)


def _fold(net: MLP, x_lo, x_scale, out_offset, out_scale) -> MLP:
    """Absorb ``u = (x - x_lo) / x_scale - 1`` and ``y = out_scale * v + out_offset`` into the weights."""
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    w0 = weights[0]
    biases[0] = biases[0] - w0[0] * (x_lo / x_scale + 1.0)
    weights[0] = w0 / x_scale
    weights[-1] = weights[-1] * out_scale
    biases[-1] = biases[-1] * out_scale + out_offset
    return MLP(net.layer_dims, weights, biases, net.activation)


def _tasks(labeled: LabeledSet, x: np.ndarray, config: HierConfig, seed, epochs, batch_size, lr, lr_floor, hidden):
    tasks = []
    fanouts = config.fanouts
    parent = np.ones(len(x), dtype=np.int64)
    for phi, f in enumerate(fanouts):
        tags = labeled.disperse_labels[phi]
        for k in range(1, config.layer_size(phi) + 1):
            idx = np.flatnonzero(parent == k)
            base = (k - 1) * f + 1
            tasks.append(_Task(phi, k, x[idx], tags[idx].astype(np.float64), float(base), float(max(f - 1, 1)),
                               (seed, phi, k), epochs, batch_size, lr, lr_floor, hidden))
        parent = tags
    leaf_layer = len(fanouts)
    for leaf, (idx, mu) in enumerate(partition_for_leaves(labeled, fanouts), start=1):
        tasks.append(_Task(leaf_layer, leaf, x[idx], mu, 0.0, float(config.t),
                           (seed, leaf_layer, leaf), epochs, batch_size, lr, lr_floor, hidden))
    return tasks


def train(keys, config: HierConfig | None = None, epochs: int = DEFAULT_EPOCHS, batch_size: int = DEFAULT_BATCH,
          seed: int = 0, lr: float = DEFAULT_LR, lr_floor: float = DEFAULT_LR_FLOOR,
          hidden=DEFAULT_HIDDEN, workers: int = 1):
    """Fit every network of the hierarchy; returns ``(HierModel, TrainReport)``.

    The learning rate follows a cosine decay from ``lr`` to ``lr * lr_floor``
    (``lr_floor=1`` keeps it constant). Reported losses are mean squared errors
    in each network's rescaled target units, summed over all networks.
    Networks train independently from per-network seeds, so ``workers > 1``
    gives the same result as a sequential run.
    """
    config = config or HierConfig()
    if epochs < 1:
        raise ValidationError("epochs must be >= 1")
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    labeled = LabeledSet.build(keys, config.fanouts, config.T)
    if labeled.keys.size < max(config.num_leaves, 2):
        raise TooFewKeys(f"{labeled.keys.size} distinct keys for {config.num_leaves} leaves")
    key_norm = (float(labeled.keys[0]), float(labeled.keys[-1]))
    x = vectorize_keys(labeled.keys, key_norm)[:, 0]
    tasks = _tasks(labeled, x, config, int(seed), epochs, batch_size, lr, lr_floor, tuple(hidden))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit, tasks))
    else:
        results = [_fit(task) for task in tasks]

    n_disperse = len(config.fanouts)
    disperse = [[None] * config.layer_size(phi) for phi in range(n_disperse)]
    leaves = [None] * config.num_leaves
    curve = np.zeros(epochs + 1)
    model_losses = {}
    for task, (net, initial, per_epoch, final) in zip(tasks, results):
        if task.layer < n_disperse:
            disperse[task.layer][task.index - 1] = net
        else:
            leaves[task.index - 1] = net
        curve[0] += initial
        curve[1:] += per_epoch
        model_losses[(task.layer, task.index)] = final
    model = HierModel(config, disperse, leaves, key_norm)
    return model, TrainReport(epochs, [float(c) for c in curve], model_losses)
