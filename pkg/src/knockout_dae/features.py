"""Normalisation, context features, embeddings and correlation analysis."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Optional, Sequence

import numpy as np

from .ingest import PLAYER_STATS, TEAM_STATS, Corpus, TeamMatchRecord

FORM_WINDOW = 5
MAX_FORM = 3 * FORM_WINDOW
RESULTS = ("W", "D", "L")
POINTS = {"W": 3, "D": 1, "L": 0}


class FeatureError(ValueError):
    pass


class EmptyCorpus(FeatureError):
    pass


class DimensionMismatch(FeatureError):
    pass


class UnknownEntity(FeatureError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0])


# --------------------------------------------------------------------------- scaling


@dataclass(frozen=True, eq=False)
class ScalerParams:
    feature_names: tuple
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if not (len(self.feature_names) == len(self.mins) == len(self.maxs)):
            raise DimensionMismatch("feature_names, mins and maxs must have equal length")
        if np.any(self.mins > self.maxs):
            raise FeatureError("every min must be <= its max")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScalerParams):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.mins, other.mins)
            and np.array_equal(self.maxs, other.maxs)
        )

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {"features": list(self.feature_names), "mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ScalerParams":
        return cls(
            tuple(data["features"]),
            np.asarray(data["mins"], dtype=float),
            np.asarray(data["maxs"], dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ScalerParams":
        return cls.from_dict(json.loads(text))


def fit_scaler(rows: Sequence[Sequence[float]], feature_names: Sequence[str]) -> ScalerParams:
    """Column-wise min/max of ``rows``."""
    data = np.asarray(rows, dtype=float)
    if data.size == 0 or data.shape[0] == 0:
        raise EmptyCorpus("cannot fit a scaler on zero rows")
    if data.ndim != 2 or data.shape[1] != len(feature_names):
        raise DimensionMismatch(f"rows have shape {data.shape}, expected (*, {len(feature_names)})")
    return ScalerParams(tuple(feature_names), data.min(axis=0), data.max(axis=0))


def _check_dim(scaler: ScalerParams, x: np.ndarray) -> None:
    if x.shape[-1] != scaler.dim:
        raise DimensionMismatch(f"vector has {x.shape[-1]} components, scaler expects {scaler.dim}")


def transform(scaler: ScalerParams, vector) -> np.ndarray:
    """Map each feature to ``(x - min) / (max - min)``; constant features map to 0."""
    x = np.asarray(vector, dtype=float)
    _check_dim(scaler, x)
    span = scaler.maxs - scaler.mins
    degenerate = span == 0
    safe = np.where(degenerate, 1.0, span)
    return np.where(degenerate, 0.0, (x - scaler.mins) / safe)


def inverse_transform(scaler: ScalerParams, vector) -> np.ndarray:
    z = np.asarray(vector, dtype=float)
    _check_dim(scaler, z)
    span = scaler.maxs - scaler.mins
    return np.where(span == 0, scaler.mins, scaler.mins + z * span)


def fit_team_scaler(corpus: Corpus) -> ScalerParams:
    return fit_scaler([r.stats() for r in corpus.team_rows], TEAM_STATS)


def fit_player_scaler(corpus: Corpus) -> ScalerParams:
    return fit_scaler([r.stats() for r in corpus.player_rows], PLAYER_STATS)


# --------------------------------------------------------------------------- context features


@dataclass(frozen=True)
class FormWindow:
    """Most recent results, oldest first."""

    results: tuple = ()

    def __post_init__(self):
        if len(self.results) > FORM_WINDOW:
            raise FeatureError(f"form window holds at most {FORM_WINDOW} results")
        for r in self.results:
            if r not in POINTS:
                raise FeatureError(f"unknown result {r!r}; expected one of W, D, L")


@dataclass(frozen=True)
class ContextFeatures:
    home: int
    form_norm: float
    experience_norm: float

    def __post_init__(self):
        if self.home not in (0, 1):
            raise FeatureError("home must be 0 or 1")
        for name in ("form_norm", "experience_norm"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise FeatureError(f"{name} must lie in [0, 1], got {value}")

    def to_array(self) -> np.ndarray:
        return np.array([float(self.home), self.form_norm, self.experience_norm])


CONTEXT_DIM = 3


def form_index(window) -> int:
    """3 points per win, 1 per draw over the window."""
    results = window.results if isinstance(window, FormWindow) else tuple(window)
    return sum(POINTS[r] for r in results)


def experience(team: str, rows: Iterable[TeamMatchRecord], as_of_date: Optional[date] = None) -> int:
    """Number of the team's rows dated strictly before ``as_of_date`` (all rows if None)."""
    if isinstance(rows, Corpus):
        rows = rows.team_rows
    return sum(1 for r in rows if r.team == team and (as_of_date is None or r.date < as_of_date))


def match_results(rows: Iterable[TeamMatchRecord]) -> dict[tuple[str, str], str]:
    """W/D/L per (match_id, team), from the paired rows' goals."""
    if isinstance(rows, Corpus):
        rows = rows.team_rows
    goals = {(r.match_id, r.team): r.goals for r in rows}
    out = {}
    for r in rows:
        theirs = goals.get((r.match_id, r.opponent))
        if theirs is None:
            continue
        out[(r.match_id, r.team)] = "W" if r.goals > theirs else "D" if r.goals == theirs else "L"
    return out


def recent_form(team: str, rows: Iterable[TeamMatchRecord], as_of_date: Optional[date] = None) -> FormWindow:
    """The team's last five results before ``as_of_date``, shorter if history is short."""
    if isinstance(rows, Corpus):
        rows = rows.team_rows
    rows = list(rows)
    results = match_results(rows)
    history = sorted(
        (r for r in rows if r.team == team and (as_of_date is None or r.date < as_of_date)),
        key=lambda r: (r.date, r.match_id),
    )
    recent = [results[(r.match_id, r.team)] for r in history if (r.match_id, r.team) in results]
    return FormWindow(tuple(recent[-FORM_WINDOW:]))


def context_features(home: bool, window: FormWindow, n_matches: int, max_matches: int) -> ContextFeatures:
    # experience beyond the corpus maximum (possible mid-simulation) saturates at 1
    exp_norm = 0.0 if max_matches <= 0 else min(1.0, n_matches / max_matches)
    return ContextFeatures(int(bool(home)), form_index(window) / MAX_FORM, exp_norm)


# --------------------------------------------------------------------------- correlation


def pearson_correlation(x, y) -> Optional[float]:
    """Pearson's r, or ``None`` when either series is constant."""
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionMismatch("x and y must be 1-D and of equal length")
    if a.size < 2:
        raise FeatureError("need at least two observations")
    da = a - a.mean()
    db = b - b.mean()
    sxx = float(np.dot(da, da))
    syy = float(np.dot(db, db))
    if sxx == 0.0 or syy == 0.0:
        return None
    # separate roots: the product can underflow to 0 for tiny spreads
    r = float(np.dot(da, db)) / (np.sqrt(sxx) * np.sqrt(syy))
    return max(-1.0, min(1.0, r))


def correlation_with_goals(corpus) -> list[tuple[str, Optional[float]]]:
    """Rank every team statistic by its correlation with goals.

    Sorted by descending r with name as tie-break; constant features
    (undefined r) come last.
    """
    rows = corpus.team_rows if isinstance(corpus, Corpus) else corpus
    data = np.array([r.stats() for r in rows])
    goals = data[:, TEAM_STATS.index("goals")]
    scored = []
    for j, name in enumerate(TEAM_STATS):
        if name == "goals":
            continue
        scored.append((name, pearson_correlation(data[:, j], goals)))
    defined = sorted((p for p in scored if p[1] is not None), key=lambda p: (-p[1], p[0]))
    undefined = sorted(p for p in scored if p[1] is None)
    return defined + undefined


# --------------------------------------------------------------------------- embeddings


@dataclass(frozen=True, eq=False)
class Embedding:
    owner: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        expected = {"team": len(TEAM_STATS), "player": len(PLAYER_STATS)}.get(self.kind)
        if expected is None:
            raise FeatureError(f"unknown embedding kind {self.kind!r}")
        if self.values.shape != (expected,):
            raise DimensionMismatch(f"{self.kind} embedding must have {expected} components")

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.owner == other.owner and self.kind == other.kind and np.array_equal(self.values, other.values)


def _mean_embedding(owner, kind, vectors, scaler) -> Embedding:
    if not vectors:
        raise UnknownEntity(f"no {kind} rows for {owner!r}")
    # fixed summation order keeps the mean bit-identical under reordering
    ordered = sorted(vectors, key=lambda v: tuple(v.tolist()))
    normed = transform(scaler, np.array(ordered))
    # clipping only matters when the scaler was fit on a different corpus
    return Embedding(owner, kind, np.clip(normed.mean(axis=0), 0.0, 1.0))


def team_embedding(corpus: Corpus, scaler: ScalerParams, team: str) -> Embedding:
    """Mean normalised stat vector over every match the team played."""
    return _mean_embedding(team, "team", [r.stats() for r in corpus.team_rows if r.team == team], scaler)


def player_embedding(corpus: Corpus, scaler: ScalerParams, player: str) -> Embedding:
    return _mean_embedding(player, "player", [r.stats() for r in corpus.player_rows if r.player == player], scaler)


def all_embeddings(rows, scaler: ScalerParams, key: str, kind: str) -> dict[str, Embedding]:
    """Embeddings for every entity in ``rows`` in one pass, keyed by ``key`` attribute."""
    groups: dict[str, list] = {}
    for r in rows:
        groups.setdefault(getattr(r, key), []).append(r.stats())
    return {owner: _mean_embedding(owner, kind, vecs, scaler) for owner, vecs in sorted(groups.items())}


# --------------------------------------------------------------------------- training samples


def _team_contexts(rows: Sequence[TeamMatchRecord]) -> tuple[dict, int]:
    """Context entering each (match_id, team) row, replaying history in date order."""
    results = match_results(rows)
    counts: dict[str, int] = {}
    for r in rows:
        counts[r.team] = counts.get(r.team, 0) + 1
    max_matches = max(counts.values(), default=0)

    windows: dict[str, tuple] = {}
    played: dict[str, int] = {}
    contexts = {}
    ordered = sorted(rows, key=lambda r: (r.date, r.match_id, r.team))
    i = 0
    while i < len(ordered):
        # rows sharing a date see the same prior history
        j = i
        while j < len(ordered) and ordered[j].date == ordered[i].date:
            j += 1
        day = ordered[i:j]
        for r in day:
            window = FormWindow(windows.get(r.team, ()))
            contexts[(r.match_id, r.team)] = context_features(r.home, window, played.get(r.team, 0), max_matches)
        for r in day:
            res = results.get((r.match_id, r.team))
            if res is not None:
                windows[r.team] = (windows.get(r.team, ()) + (res,))[-FORM_WINDOW:]
            played[r.team] = played.get(r.team, 0) + 1
        i = j
    return contexts, max_matches


def team_training_samples(corpus: Corpus, team_scaler: ScalerParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """One ``(team ++ opponent embedding, context)`` pair per team row."""
    embeddings = all_embeddings(corpus.team_rows, team_scaler, "team", "team")
    contexts, _ = _team_contexts(corpus.team_rows)
    samples = []
    for r in corpus.team_rows:
        clean = np.concatenate([embeddings[r.team].values, embeddings[r.opponent].values])
        samples.append((clean, contexts[(r.match_id, r.team)].to_array()))
    return samples


def player_training_samples(
    corpus: Corpus, team_scaler: ScalerParams, player_scaler: ScalerParams
) -> list[tuple[np.ndarray, np.ndarray]]:
    """One ``(player ++ own-team embedding, team context)`` pair per player row."""
    teams = all_embeddings(corpus.team_rows, team_scaler, "team", "team")
    players = all_embeddings(corpus.player_rows, player_scaler, "player", "player")
    contexts, _ = _team_contexts(corpus.team_rows)
    samples = []
    for r in corpus.player_rows:
        clean = np.concatenate([players[r.player].values, teams[r.team].values])
        samples.append((clean, contexts[(r.match_id, r.team)].to_array()))
    return samples
