"""Minibatch denoising training, prediction and model artifacts."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..features import ScalerParams
from . import _backend
from .network import (
    ACTIVATION_CODES,
    DimensionMismatch,
    Layer,
    LayerSpec,
    ModelParams,
    add_gaussian_noise,
    chain,
    check_chain,
    forward,
    init_network,
)

ARTIFACT_VERSION = 1

TEAM_INPUT_DIM = 43
PLAYER_INPUT_DIM = 32


def default_team_spec() -> list[LayerSpec]:
    return chain(TEAM_INPUT_DIM, 32, 16, 32, TEAM_INPUT_DIM)


def default_player_spec() -> list[LayerSpec]:
    return chain(PLAYER_INPUT_DIM, 24, 12, 24, PLAYER_INPUT_DIM)


class TrainingError(RuntimeError):
    pass


class EmptyDataset(TrainingError):
    pass


class TrainingDiverged(TrainingError):
    pass


class ArtifactError(ValueError):
    pass


class CorruptArtifact(ArtifactError):
    pass


class VersionMismatch(ArtifactError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 10
    epochs: int = 60
    noise_sigma: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    val_fraction: float = 0.15

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(eq=False)
class TrainedModel:
    params: ModelParams
    scaler: Optional[ScalerParams]
    config: TrainConfig
    history: list
    kind: str
    context_dim: int = 0

    @property
    def noise_mask(self) -> np.ndarray:
        """True for context components, which are never corrupted."""
        mask = np.zeros(self.params.in_dim, dtype=bool)
        if self.context_dim:
            mask[-self.context_dim :] = True
        return mask

    @property
    def final_rmse(self) -> tuple[float, Optional[float]]:
        return self.history[-1]

    @property
    def best_rmse(self) -> tuple[float, Optional[float]]:
        return min(self.history, key=_selection_key)

    def to_dict(self) -> dict:
        return {
            "version": ARTIFACT_VERSION,
            "kind": self.kind,
            "context_dim": self.context_dim,
            "spec": [asdict(s) for s in self.params.specs],
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "config": asdict(self.config),
            "weights": [{"W": l.weights.tolist(), "b": l.biases.tolist()} for l in self.params.layers],
            "history": [list(h) for h in self.history],
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrainedModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _selection_key(entry) -> float:
    train_rmse, val_rmse = entry
    return train_rmse if val_rmse is None else val_rmse


def _stack(dataset) -> tuple[np.ndarray, int]:
    if not dataset:
        raise EmptyDataset("training dataset is empty")
    rows = []
    dims = set()
    for clean, context in dataset:
        clean = np.asarray(clean, dtype=float).ravel()
        context = np.asarray(context, dtype=float).ravel()
        dims.add((clean.size, context.size))
        rows.append(np.concatenate([clean, context]))
    if len(dims) != 1:
        raise DimensionMismatch(f"dataset mixes vector sizes {sorted(dims)}")
    return np.vstack(rows), dims.pop()[1]


def _evaluate(kern, weights, biases, codes, noisy, clean) -> float:
    if len(noisy) == 0:
        return float("nan")
    out = kern.forward_batch(weights, biases, codes, noisy)
    return float(np.sqrt(np.mean((out - clean) ** 2)))


def train(
    dataset: Sequence,
    config: TrainConfig = TrainConfig(),
    spec: Optional[Sequence[LayerSpec]] = None,
    *,
    kind: str = "team",
    scaler: Optional[ScalerParams] = None,
    kernels=None,
) -> TrainedModel:
    """Train a denoising autoencoder on ``(clean_vector, context)`` pairs.

    Each minibatch corrupts the clean part with fresh Gaussian noise
    and regresses the uncorrupted concatenated vector. Train and
    validation RMSE are measured every epoch on a fixed noisy copy of
    each split; the parameters of the best validation epoch are kept.
    """
    clean, context_dim = _stack(dataset)
    if spec is None:
        spec = default_team_spec() if kind == "team" else default_player_spec()
    spec = list(spec)
    check_chain(spec)
    if spec[0].in_dim != clean.shape[1] or spec[-1].out_dim != clean.shape[1]:
        raise DimensionMismatch(
            f"samples have {clean.shape[1]} components; network maps {spec[0].in_dim} -> {spec[-1].out_dim}"
        )
    kern = kernels or _backend.kernels

    split_seq, noise_seq, eval_seq = np.random.SeedSequence(config.seed).spawn(3)
    split_rng = np.random.default_rng(split_seq)
    noise_rng = np.random.default_rng(noise_seq)
    eval_rng = np.random.default_rng(eval_seq)

    n = clean.shape[0]
    order = split_rng.permutation(n)
    n_val = min(int(round(config.val_fraction * n)), n - 1)
    val_idx, train_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
    mask = np.zeros(clean.shape[1], dtype=bool)
    mask[clean.shape[1] - context_dim :] = True
    sigma = config.noise_sigma
    train_eval = add_gaussian_noise(clean[train_idx], sigma, eval_rng, mask)
    val_eval = add_gaussian_noise(clean[val_idx], sigma, eval_rng, mask)

    params = init_network(spec, config.seed)
    weights = [l.weights for l in params.layers]
    biases = [l.biases for l in params.layers]
    codes = np.array([ACTIVATION_CODES[s.activation] for s in spec], dtype=np.intc)
    grad_w = [np.zeros_like(w) for w in weights]
    grad_b = [np.zeros_like(b) for b in biases]
    flat_p = [a.reshape(-1) for pair in zip(weights, biases) for a in pair]
    flat_g = [a.reshape(-1) for pair in zip(grad_w, grad_b) for a in pair]
    m = [np.zeros_like(a) for a in flat_p]
    v = [np.zeros_like(a) for a in flat_p]
    b1, b2 = config.beta1, config.beta2
    t = 0

    history = []
    best_key = math.inf
    best = params.copy()
    for epoch in range(config.epochs):
        perm = train_idx[split_rng.permutation(train_idx.size)]
        for start in range(0, perm.size, config.batch_size):
            target = clean[perm[start : start + config.batch_size]]
            noisy = add_gaussian_noise(target, sigma, noise_rng, mask)
            loss = kern.loss_and_grads(weights, biases, codes, noisy, target, grad_w, grad_b)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            t += 1
            bc1 = 1.0 - b1**t
            bc2 = 1.0 - b2**t
            for p, g, mi, vi in zip(flat_p, flat_g, m, v):
                kern.adam_update(p, g, mi, vi, config.learning_rate, b1, b2, config.epsilon, bc1, bc2)
        if not params.is_finite():
            raise TrainingDiverged(f"non-finite parameters after epoch {epoch}")
        train_rmse = _evaluate(kern, weights, biases, codes, train_eval, clean[train_idx])
        val_rmse = _evaluate(kern, weights, biases, codes, val_eval, clean[val_idx]) if n_val else None
        if not math.isfinite(train_rmse) or (val_rmse is not None and not math.isfinite(val_rmse)):
            raise TrainingDiverged(f"non-finite RMSE at epoch {epoch}")
        history.append((train_rmse, val_rmse))
        key = _selection_key(history[-1])
        if key < best_key:
            best_key = key
            best = params.copy()

    return TrainedModel(best, scaler, config, history, kind, context_dim)


def predict(model: TrainedModel, x) -> np.ndarray:
    """Deterministic forward pass (single vector or batch)."""
    out, _ = forward(model.params, x)
    return out


# --------------------------------------------------------------------------- artifacts


def dumps_model(model: TrainedModel) -> str:
    return json.dumps(model.to_dict(), separators=(",", ":")) + "\n"


def loads_model(text: str) -> TrainedModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptArtifact(f"model artifact is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or "version" not in data:
        raise CorruptArtifact("model artifact has no version field")
    if data["version"] != ARTIFACT_VERSION:
        raise VersionMismatch(f"artifact version {data['version']!r}, this build reads {ARTIFACT_VERSION}")
    try:
        specs = [LayerSpec(**s) for s in data["spec"]]
        check_chain(specs)
        layers = []
        for s, w in zip(specs, data["weights"], strict=True):
            weights = np.array(w["W"], dtype=float).reshape(s.out_dim, s.in_dim)
            biases = np.array(w["b"], dtype=float).reshape(s.out_dim)
            layers.append(Layer(np.ascontiguousarray(weights), biases, s.activation))
        scaler = None if data["scaler"] is None else ScalerParams.from_dict(data["scaler"])
        history = [(float(tr), None if va is None else float(va)) for tr, va in data["history"]]
        return TrainedModel(
            ModelParams(layers),
            scaler,
            TrainConfig.from_dict(data["config"]),
            history,
            data["kind"],
            int(data.get("context_dim", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptArtifact(f"malformed model artifact: {exc}") from None


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> TrainedModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptArtifact(str(exc)) from None
    return loads_model(text)


def with_config(model: TrainedModel, **overrides) -> TrainedModel:
    return TrainedModel(model.params, model.scaler, replace(model.config, **overrides), model.history, model.kind, model.context_dim)
