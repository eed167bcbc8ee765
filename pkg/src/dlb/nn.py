"""Small dense regression networks with hand-written backprop and Adam.

Only the architecture family used by the hierarchical model is supported:
fully connected layers, ReLU on hidden layers, identity on the scalar output.
Weights are stored as ``(fan_in, fan_out)`` matrices so that a batch ``X`` of
shape ``(n, fan_in)`` propagates as ``X @ W + b``.

All parameters live in one flat float64 vector (``MLP.theta``); the per-layer
``weights`` and ``biases`` are views into it, so an optimizer step is a few
vector operations regardless of depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParseError, ShapeError, UnsupportedVersion

FORMAT_VERSION = 1
DEFAULT_HIDDEN = (8, 32, 64)


def _layout(layer_dims):
    """(offset, shape) for W0, b0, W1, b1, ... inside the flat vector."""
    slots, offset = [], 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        slots.append((offset, (fan_in, fan_out)))
        offset += fan_in * fan_out
        slots.append((offset, (fan_out,)))
        offset += fan_out
    return slots, offset


def _mm(a, b):
    # rank-1 products are much faster as broadcasts than through BLAS
    if a.shape[1] == 1:
        return a * b[0]
    return a @ b


def _views(flat, slots):
    return [flat[o:o + int(np.prod(s))].reshape(s) for o, s in slots]


class MLP:
    """Fully connected network ending in a single linear output unit."""

    def __init__(self, layer_dims, weights=None, biases=None, activation="relu"):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
            raise ShapeError(f"bad layer_dims {layer_dims}")
        if layer_dims[-1] != 1:
            raise ShapeError("output layer must have exactly one unit")
        if activation != "relu":
            raise ValueError(f"unsupported activation {activation!r}")
        self.layer_dims = layer_dims
        self.activation = activation
        self._slots, size = _layout(layer_dims)
        self.theta = np.zeros(size)
        views = _views(self.theta, self._slots)
        self.weights = views[0::2]
        self.biases = views[1::2]
        n_layers = len(layer_dims) - 1
        if weights is not None and len(weights) != n_layers:
            raise ShapeError(f"{len(weights)} weight matrices for {n_layers} layers")
        if biases is not None and len(biases) != n_layers:
            raise ShapeError(f"{len(biases)} bias vectors for {n_layers} layers")
        for i in range(n_layers):
            for given, dest, what in ((weights, self.weights, "weight"), (biases, self.biases, "bias")):
                if given is None:
                    continue
                arr = np.asarray(given[i], dtype=np.float64)
                if arr.shape != dest[i].shape:
                    raise ShapeError(f"layer {i}: {what} shape {arr.shape}, expected {dest[i].shape}")
                dest[i][...] = arr
        if not np.all(np.isfinite(self.theta)):
            raise NumericalError("non-finite parameters")

    @classmethod
    def initialize(cls, layer_dims, rng: np.random.Generator, input_range=(-1.0, 1.0)) -> "MLP":
        """Glorot-uniform weights.

        First-layer biases place each unit's ReLU kink at a uniformly drawn
        point of ``input_range``; deeper biases start at zero.
        """
        model = cls(layer_dims)
        for w in model.weights:
            fan_in, fan_out = w.shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w[...] = rng.uniform(-limit, limit, size=w.shape)
        if input_range is not None and layer_dims[0] == 1:
            kinks = rng.uniform(input_range[0], input_range[1], size=layer_dims[1])
            model.biases[0][...] = -model.weights[0][0] * kinks
        return model

    @property
    def params(self):
        """Parameter views in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def split(self, flat):
        """View a flat vector shaped like ``theta`` as per-parameter arrays."""
        return _views(flat, self._slots)

    def copy(self) -> "MLP":
        return MLP(self.layer_dims, self.weights, self.biases, self.activation)

    def predict(self, X) -> np.ndarray:
        """Batched forward pass; ``X`` has shape ``(n, input_dim)``. Returns shape ``(n,)``."""
        a = _as_batch(X, self.layer_dims[0])
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = _mm(a, w)
            a += b
            if i < last:
                np.maximum(a, 0.0, out=a)
        return a[:, 0]

    def loss_and_grads(self, X, y):
        """Mean squared error over the batch and its flat gradient vector."""
        a = _as_batch(X, self.layer_dims[0])
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if y.shape[0] != a.shape[0]:
            raise ShapeError(f"{a.shape[0]} inputs but {y.shape[0]} targets")
        n = a.shape[0]
        last = len(self.weights) - 1
        acts = [a]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = _mm(acts[-1], w)
            z += b
            if i < last:
                np.maximum(z, 0.0, out=z)
            acts.append(z)
        err = acts[-1][:, 0] - y
        loss = float(err @ err) / n
        if not np.isfinite(loss):
            raise NumericalError("non-finite loss")
        flat = np.empty_like(self.theta)
        views = _views(flat, self._slots)
        delta = (2.0 / n) * err[:, None]
        for i in range(last, -1, -1):
            np.matmul(acts[i].T, delta, out=views[2 * i])
            np.sum(delta, axis=0, out=views[2 * i + 1])
            if i > 0:
                delta = _mm(delta, self.weights[i].T)
                delta *= acts[i] > 0.0
        if not np.all(np.isfinite(flat)):
            raise NumericalError("non-finite gradient")
        return loss, flat

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "layer_dims": list(self.layer_dims),
            "activation": self.activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc) -> "MLP":
        if not isinstance(doc, dict):
            raise ParseError("network document must be an object")
        if doc.get("version") != FORMAT_VERSION:
            raise UnsupportedVersion(f"network format version {doc.get('version')!r}")
        try:
            return cls(doc["layer_dims"], doc["weights"], doc["biases"], doc["activation"])
        except KeyError as exc:
            raise ParseError(f"missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc)) from None


def _as_batch(X, input_dim):
    a = np.asarray(X, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1) if input_dim == 1 else a.reshape(1, -1)
    if a.ndim != 2 or a.shape[1] != input_dim:
        raise ShapeError(f"expected inputs of width {input_dim}, got shape {np.shape(X)}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("non-finite input")
    return a


def build_mlp(input_dim=1, hidden=DEFAULT_HIDDEN, rng=None, input_range=(-1.0, 1.0)) -> MLP:
    rng = np.random.default_rng() if rng is None else rng
    return MLP.initialize([input_dim, *hidden, 1], rng, input_range=input_range)


def forward(model: MLP, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.layer_dims[0],):
        raise ShapeError(f"expected input vector of length {model.layer_dims[0]}, got {x.shape}")
    return float(model.predict(x[None, :])[0])


def backward(model: MLP, x, target: float):
    """Gradients of ``(forward(x) - target) ** 2`` for one sample, as ``[dW0, db0, dW1, ...]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.layer_dims[0],):
        raise ShapeError(f"expected input vector of length {model.layer_dims[0]}, got {x.shape}")
    if not np.isfinite(target):
        raise NumericalError("non-finite target")
    _, flat = model.loss_and_grads(x[None, :], [target])
    return model.split(flat)


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def for_model(cls, model: MLP, **kwargs) -> "AdamState":
        return cls(m=np.zeros_like(model.theta), v=np.zeros_like(model.theta), **kwargs)


def adam_step(model: MLP, grads, state: AdamState, lr=None):
    """Apply one bias-corrected Adam update in place and return ``(model, state)``.

    ``grads`` is either the flat vector from ``loss_and_grads`` or the
    per-parameter list from ``backward``. ``lr`` overrides ``state.lr`` for
    this step only, which is how learning-rate schedules are applied.
    """
    if isinstance(grads, np.ndarray) and grads.ndim == 1:
        g = grads
    else:
        params = model.params
        if len(grads) != len(params):
            raise ShapeError(f"{len(grads)} gradients for {len(params)} parameters")
        for p, gi in zip(params, grads):
            if np.shape(gi) != p.shape:
                raise ShapeError(f"gradient shape {np.shape(gi)} does not match parameter {p.shape}")
        g = np.concatenate([np.ravel(gi) for gi in grads])
    if g.shape != model.theta.shape:
        raise ShapeError(f"gradient size {g.shape} does not match {model.theta.shape}")
    if state.m.shape != model.theta.shape:
        if state.step:
            raise ShapeError("optimizer moments do not match the model")
        state.m = np.zeros_like(model.theta)
        state.v = np.zeros_like(model.theta)
    state.step += 1
    lr = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    model.theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return model, state
