"""Dense feed-forward network primitives with explicit backpropagation.

Weights are stored ``(out_dim, in_dim)``; batches are row-major
``(batch, features)``. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("identity", "sigmoid", "relu")
ACTIVATION_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


class NetworkError(ValueError):
    pass


class DimChainMismatch(NetworkError):
    pass


class DimensionMismatch(NetworkError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "sigmoid"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise NetworkError("layer dimensions must be >= 1")
        if self.activation not in ACTIVATION_CODES:
            raise NetworkError(f"unknown activation {self.activation!r}")


def chain(*dims: int, hidden: str = "sigmoid", output: str = "sigmoid") -> list[LayerSpec]:
    """Layer specs for the dimension chain ``dims``, e.g. ``chain(43, 32, 16, 32, 43)``."""
    n = len(dims) - 1
    return [LayerSpec(dims[i], dims[i + 1], output if i == n - 1 else hidden) for i in range(n)]


@dataclass(eq=False)
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str

    @property
    def spec(self) -> LayerSpec:
        out_dim, in_dim = self.weights.shape
        return LayerSpec(in_dim, out_dim, self.activation)


@dataclass(eq=False)
class ModelParams:
    layers: list

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.biases))
        return out

    def copy(self) -> "ModelParams":
        return ModelParams([Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return len(self.layers) == len(other.layers) and all(
            a.activation == b.activation
            and np.array_equal(a.weights, b.weights)
            and np.array_equal(a.biases, b.biases)
            for a, b in zip(self.layers, other.layers)
        )


def check_chain(spec: Sequence[LayerSpec]) -> None:
    if not spec:
        raise DimChainMismatch("network needs at least one layer")
    for prev, nxt in zip(spec, spec[1:]):
        if prev.out_dim != nxt.in_dim:
            raise DimChainMismatch(f"layer output {prev.out_dim} does not feed layer input {nxt.in_dim}")


def glorot_limit(in_dim: int, out_dim: int) -> float:
    return float(np.sqrt(6.0 / (in_dim + out_dim)))


def init_network(spec: Sequence[LayerSpec], seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    check_chain(spec)
    rng = np.random.default_rng(seed)
    layers = []
    for s in spec:
        limit = glorot_limit(s.in_dim, s.out_dim)
        w = rng.uniform(-limit, limit, size=(s.out_dim, s.in_dim))
        layers.append(Layer(np.ascontiguousarray(w), np.zeros(s.out_dim), s.activation))
    return ModelParams(layers)


# --------------------------------------------------------------------------- activations


def sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activate(z: np.ndarray, name: str) -> np.ndarray:
    if name == "sigmoid":
        return sigmoid(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def activation_grad(a: np.ndarray, name: str) -> np.ndarray:
    """Derivative of the activation expressed through its output ``a``."""
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (a > 0).astype(float)
    return np.ones_like(a)


# --------------------------------------------------------------------------- forward / backward


@dataclass
class ForwardCache:
    # activations[0] is the input, activations[i + 1] the output of layer i
    activations: list
    squeeze: bool = False


def forward(params: ModelParams, x) -> tuple[np.ndarray, ForwardCache]:
    a = np.asarray(x, dtype=float)
    squeeze = a.ndim == 1
    if squeeze:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != params.in_dim:
        raise DimensionMismatch(f"input has {a.shape[-1]} features, network expects {params.in_dim}")
    acts = [a]
    for layer in params.layers:
        a = activate(a @ layer.weights.T + layer.biases, layer.activation)
        acts.append(a)
    out = a[0] if squeeze else a
    return out, ForwardCache(acts, squeeze)


def _as_batch(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise DimensionMismatch(f"prediction shape {p.shape} != target shape {t.shape}")
    return p, t


def mse_loss(pred, target) -> float:
    p, t = _as_batch(pred, target)
    return float(np.mean((p - t) ** 2))


def rmse(pred_batch, target_batch) -> float:
    return float(np.sqrt(mse_loss(pred_batch, target_batch)))


@dataclass(eq=False)
class Gradients:
    weights: list
    biases: list

    def arrays(self) -> list[np.ndarray]:
        out = []
        for gw, gb in zip(self.weights, self.biases):
            out.extend((gw, gb))
        return out


def backward(params: ModelParams, cache: ForwardCache, target) -> Gradients:
    """Gradients of :func:`mse_loss` (mean over every output element)."""
    out = cache.activations[-1]
    t = np.asarray(target, dtype=float)
    if cache.squeeze:
        t = t[None, :]
    if t.shape != out.shape:
        raise DimensionMismatch(f"target shape {t.shape} != output shape {out.shape}")
    delta = 2.0 * (out - t) / out.size
    grad_w = [None] * len(params.layers)
    grad_b = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        delta = delta * activation_grad(cache.activations[i + 1], layer.activation)
        grad_w[i] = delta.T @ cache.activations[i]
        grad_b[i] = delta.sum(axis=0)
        if i:
            delta = delta @ layer.weights
    return Gradients(grad_w, grad_b)


# --------------------------------------------------------------------------- noise


def add_gaussian_noise(vector, sigma: float, rng: np.random.Generator, clean_mask=None) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) to every component whose mask entry is False.

    Works on a single vector or a batch; the mask applies along the last
    axis. The result is not clipped.
    """
    x = np.asarray(vector, dtype=float)
    if clean_mask is None:
        mask = np.zeros(x.shape[-1], dtype=bool)
    else:
        mask = np.asarray(clean_mask, dtype=bool)
        if mask.shape != (x.shape[-1],):
            raise DimensionMismatch(f"mask length {mask.shape} does not match vector length {x.shape[-1]}")
    if sigma == 0 or mask.all():
        return x.copy()
    noise = rng.normal(0.0, sigma, size=x.shape)
    return np.where(mask, x, x + noise)


# --------------------------------------------------------------------------- Adam


@dataclass(eq=False)
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v], self.t)


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params: ModelParams, grads: Gradients, state: AdamState, config=None) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; returns new objects, inputs are untouched.

    ``config`` is anything with ``learning_rate``, ``beta1``, ``beta2`` and
    ``epsilon`` attributes (a ``TrainConfig`` works).
    """
    cfg = config or AdamHyper()
    lr, b1, b2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon
    t = state.t + 1
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_m, new_v, updated = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        if p.shape != g.shape:
            raise DimensionMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        updated.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
        new_m.append(m)
        new_v.append(v)
    layers = [
        Layer(updated[2 * i], updated[2 * i + 1], layer.activation) for i, layer in enumerate(params.layers)
    ]
    return ModelParams(layers), AdamState(new_m, new_v, t)
