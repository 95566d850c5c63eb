"""Knockout bracket simulation driven by the trained team and player models."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import astuple, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .autoencoder import TrainedModel, add_gaussian_noise, predict
from .features import (
    FORM_WINDOW,
    ContextFeatures,
    Embedding,
    FormWindow,
    all_embeddings,
    context_features,
    experience,
    form_index,
    inverse_transform,
    recent_form,
)
from .ingest import PLAYER_STATS, ROUNDS, TEAM_REAL_STATS, TEAM_STATS, Corpus

DISTRIBUTION_METRICS = ("passes", "possession_pct", "corners")


class SimulationError(RuntimeError):
    pass


class InvalidBracket(SimulationError):
    pass


class UnknownTeam(SimulationError):
    pass


class MissingSquad(SimulationError):
    pass


class NoPlayersForScoringTeam(SimulationError):
    pass


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# --------------------------------------------------------------------------- stat lines


@dataclass(frozen=True)
class TeamStatLine:
    goals: int
    attempts: int
    attempts_on_target: int
    attempts_off_target: int
    blocked_shots: int
    woodwork: int
    corners: int
    offsides: int
    possession_pct: float
    passes: int
    pass_accuracy_pct: float
    passes_completed: int
    distance_covered_km: float
    balls_recovered: int
    tackles: int
    clearances: int
    blocks: int
    yellow_cards: int
    red_cards: int
    fouls: int

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in TEAM_STATS}

    @classmethod
    def from_dict(cls, data: dict) -> "TeamStatLine":
        missing = [name for name in TEAM_STATS if name not in data]
        if missing:
            raise InvalidBracket(f"stat line is missing {', '.join(missing)}")
        values = {}
        for name in TEAM_STATS:
            value = data[name]
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise InvalidBracket(f"stat {name} must be a non-negative number, got {value!r}")
            values[name] = float(value) if name in TEAM_REAL_STATS else int(value)
        if values["passes_completed"] > values["passes"]:
            raise InvalidBracket("passes_completed exceeds passes in recorded stat line")
        return cls(**values)


assert tuple(f.name for f in fields(TeamStatLine)) == TEAM_STATS

_POSSESSION = TEAM_STATS.index("possession_pct")
_DISTANCE = TEAM_STATS.index("distance_covered_km")


def _reconcile_side(raw: np.ndarray, possession: int) -> TeamStatLine:
    values = {}
    for i, name in enumerate(TEAM_STATS):
        if name in TEAM_REAL_STATS:
            continue
        values[name] = max(0, round_half_up(float(raw[i])))
    values["possession_pct"] = float(possession)
    values["distance_covered_km"] = max(0.0, math.floor(float(raw[_DISTANCE]) * 10.0 + 0.5) / 10.0)
    values["passes_completed"] = min(values["passes_completed"], values["passes"])
    if values["passes"] > 0:
        values["pass_accuracy_pct"] = round(100.0 * values["passes_completed"] / values["passes"], 1)
    else:
        values["pass_accuracy_pct"] = 0.0
    return TeamStatLine(**values)


def reconcile_team_stats(raw_home, raw_away) -> tuple[TeamStatLine, TeamStatLine]:
    """Turn two real-valued predictions into coherent integer stat lines.

    Counts are rounded half-up and clamped at zero, possession is
    rescaled to a 100 total (the home side absorbs the rounding),
    completed passes are capped by total passes and pass accuracy is
    recomputed from the two.
    """
    h = np.asarray(raw_home, dtype=float)
    a = np.asarray(raw_away, dtype=float)
    if h.shape != (len(TEAM_STATS),) or a.shape != h.shape:
        raise ValueError(f"raw stat vectors must have {len(TEAM_STATS)} components")
    ph = max(float(h[_POSSESSION]), 0.0)
    pa = max(float(a[_POSSESSION]), 0.0)
    total = ph + pa
    away_pos = 50 if total == 0 else round_half_up(100.0 * pa / total)
    return _reconcile_side(h, 100 - away_pos), _reconcile_side(a, away_pos)


# --------------------------------------------------------------------------- player attribution


def largest_remainder(quotas: Sequence[float], total: int) -> list[int]:
    """Integer apportionment of ``total`` proportional to non-negative ``quotas``.

    Shares are scaled to sum to ``total``, floored, and the leftover
    units go to the largest fractional parts (ties: larger quota, then
    earlier position).
    """
    q = np.maximum(np.asarray(quotas, dtype=float), 0.0)
    if total <= 0 or q.size == 0:
        return [0] * q.size
    top = q.max()
    if top > 0:
        # normalise by the largest quota first: total / sum can overflow for subnormal quotas
        w = q / top
        shares = w * (total / w.sum())
    else:
        shares = np.full(q.size, total / q.size)
    floors = np.floor(shares).astype(int)
    leftover = total - int(floors.sum())
    order = sorted(range(q.size), key=lambda i: (-(shares[i] - floors[i]), -shares[i], i))
    for k in range(leftover):
        floors[order[k % q.size]] += 1
    return floors.tolist()


_P = {name: i for i, name in enumerate(PLAYER_STATS)}


def assign_player_stats(team_goals: int, player_predictions: Sequence[tuple[str, Sequence[float]]]):
    """Allocate a team's goals and assists to its players.

    Returns ``(scorers, assists, lines)``: the first two are
    ``[(player, n), ...]`` lists holding only non-zero entries, and
    ``lines`` has one rounded stat dict per player.
    """
    if team_goals < 0:
        raise ValueError("team_goals must be >= 0")
    if team_goals > 0 and not player_predictions:
        raise NoPlayersForScoringTeam("a team that scored needs at least one player")
    names = [p for p, _ in player_predictions]
    raw = np.array([np.asarray(v, dtype=float) for _, v in player_predictions]).reshape(len(names), len(PLAYER_STATS))
    pos = np.maximum(raw, 0.0)

    weights = pos[:, _P["goals"]]
    for fallback in ("shots_on_target", "shots", "minutes_played"):
        if weights.sum() > 0:
            break
        weights = pos[:, _P[fallback]]
    goals = largest_remainder(weights, team_goals) if names else []

    n_assists = min(team_goals, round_half_up(float(pos[:, _P["assists"]].sum()))) if names else 0
    assists = largest_remainder(pos[:, _P["assists"]], n_assists) if names else []

    lines = []
    for i, name in enumerate(names):
        line = {"player": name}
        for stat in PLAYER_STATS:
            line[stat] = round_half_up(float(pos[i, _P[stat]]))
        line["goals"] = goals[i]
        line["assists"] = assists[i]
        line["minutes_played"] = min(line["minutes_played"], 150)
        line["shots_on_target"] = max(line["shots_on_target"], line["goals"])
        line["shots"] = max(line["shots"], line["shots_on_target"])
        lines.append(line)
    scorers = [(n, g) for n, g in zip(names, goals) if g > 0]
    assisters = [(n, a) for n, a in zip(names, assists) if a > 0]
    return scorers, assisters, lines


# --------------------------------------------------------------------------- legs and fixtures


@dataclass
class LegPrediction:
    home_team: str
    away_team: str
    home: TeamStatLine
    away: TeamStatLine
    scorers: dict = field(default_factory=dict)
    assists: dict = field(default_factory=dict)
    player_lines: dict = field(default_factory=dict)
    neutral: bool = False
    simulated: bool = True
    fixture_id: str = ""
    leg: int = 0

    def line(self, team: str) -> TeamStatLine:
        if team == self.home_team:
            return self.home
        if team == self.away_team:
            return self.away
        raise KeyError(team)

    def result_for(self, team: str) -> str:
        mine = self.line(team).goals
        theirs = self.line(self.away_team if team == self.home_team else self.home_team).goals
        return "W" if mine > theirs else "D" if mine == theirs else "L"

    def scoreline(self) -> str:
        return f"{self.home_team} {self.home.goals}-{self.away.goals} {self.away_team}"

    def to_dict(self) -> dict:
        return {
            "fixture_id": self.fixture_id,
            "leg": self.leg,
            "home_team": self.home_team,
            "away_team": self.away_team,
            "neutral": self.neutral,
            "simulated": self.simulated,
            "home": self.home.to_dict(),
            "away": self.away.to_dict(),
            "scorers": {t: [list(p) for p in v] for t, v in self.scorers.items()},
            "assists": {t: [list(p) for p in v] for t, v in self.assists.items()},
            "player_lines": self.player_lines,
        }


@dataclass
class ModelBundle:
    """Trained models plus the embeddings they are queried with."""

    team_model: TrainedModel
    player_model: TrainedModel
    team_embeddings: dict
    player_embeddings: dict
    sigma: Optional[float] = None

    @classmethod
    def from_corpus(cls, team_model, player_model, corpus: Corpus, sigma: Optional[float] = None) -> "ModelBundle":
        if team_model.scaler is None or player_model.scaler is None:
            raise SimulationError("models must carry their fitted scalers")
        return cls(
            team_model,
            player_model,
            all_embeddings(corpus.team_rows, team_model.scaler, "team", "team"),
            all_embeddings(corpus.player_rows, player_model.scaler, "player", "player"),
            sigma,
        )

    def noise(self, model: TrainedModel) -> float:
        return model.config.noise_sigma if self.sigma is None else self.sigma

    def team_vector(self, team: str) -> np.ndarray:
        try:
            emb: Embedding = self.team_embeddings[team]
        except KeyError:
            raise UnknownTeam(f"no embedding for team {team!r}") from None
        return emb.values


def _raw_team_stats(models: ModelBundle, team: str, opponent: str, ctx: ContextFeatures, rng) -> np.ndarray:
    m = models.team_model
    x = np.concatenate([models.team_vector(team), models.team_vector(opponent), ctx.to_array()])
    noisy = add_gaussian_noise(x, models.noise(m), rng, m.noise_mask)
    out = np.clip(predict(m, noisy)[: len(TEAM_STATS)], 0.0, 1.0)
    return inverse_transform(m.scaler, out)


def _raw_player_stats(models: ModelBundle, team: str, squad: Sequence[str], ctx: ContextFeatures, rng):
    if not squad:
        raise MissingSquad(f"no squad listed for {team!r}")
    unknown = [p for p in squad if p not in models.player_embeddings]
    if unknown:
        raise MissingSquad(f"squad of {team!r} lists players without history: {', '.join(unknown)}")
    m = models.player_model
    tail = np.concatenate([models.team_vector(team), ctx.to_array()])
    x = np.array([np.concatenate([models.player_embeddings[p].values, tail]) for p in squad])
    noisy = add_gaussian_noise(x, models.noise(m), rng, m.noise_mask)
    out = np.clip(predict(m, noisy)[:, : len(PLAYER_STATS)], 0.0, 1.0)
    return [(p, inverse_transform(m.scaler, row)) for p, row in zip(squad, out)]


def predict_leg(
    models: ModelBundle,
    home_team: str,
    away_team: str,
    contexts: tuple[ContextFeatures, ContextFeatures],
    rng: np.random.Generator,
    squads: dict,
    *,
    neutral: bool = False,
) -> LegPrediction:
    """Predict both stat lines and the player attribution for one leg.

    Each side is a separate model query with roles swapped; the two
    outputs are then reconciled into a consistent pair.
    """
    home_ctx, away_ctx = contexts
    for team in (home_team, away_team):
        models.team_vector(team)
        if team not in squads:
            raise MissingSquad(f"no squad listed for {team!r}")
    raw_home = _raw_team_stats(models, home_team, away_team, home_ctx, rng)
    raw_away = _raw_team_stats(models, away_team, home_team, away_ctx, rng)
    home, away = reconcile_team_stats(raw_home, raw_away)

    scorers, assists, lines = {}, {}, {}
    for team, line, ctx in ((home_team, home, home_ctx), (away_team, away, away_ctx)):
        preds = _raw_player_stats(models, team, squads[team], ctx, rng)
        scorers[team], assists[team], lines[team] = assign_player_stats(line.goals, preds)
    return LegPrediction(home_team, away_team, home, away, scorers, assists, lines, neutral=neutral)


@dataclass(frozen=True)
class FixtureDecision:
    fixture_id: str
    round: str
    team_a: str
    team_b: str
    winner: str
    method: str
    aggregate: tuple
    shots_on_target: tuple

    @property
    def loser(self) -> str:
        return self.team_b if self.winner == self.team_a else self.team_a

    def to_dict(self) -> dict:
        return {
            "fixture_id": self.fixture_id,
            "round": self.round,
            "team_a": self.team_a,
            "team_b": self.team_b,
            "winner": self.winner,
            "method": self.method,
            "aggregate": list(self.aggregate),
            "shots_on_target": list(self.shots_on_target),
        }


def decide_fixture(
    legs: Sequence[LegPrediction],
    team_a: str,
    team_b: str,
    experience: Optional[dict] = None,
    rng: Optional[np.random.Generator] = None,
    *,
    fixture_id: str = "",
    round: str = "",
) -> FixtureDecision:
    """Aggregate goals, then aggregate shots on target, then experience, then a coin flip."""
    goals = (sum(l.line(team_a).goals for l in legs), sum(l.line(team_b).goals for l in legs))
    shots = (
        sum(l.line(team_a).attempts_on_target for l in legs),
        sum(l.line(team_b).attempts_on_target for l in legs),
    )
    exp = experience or {}
    seniority = (exp.get(team_a, 0), exp.get(team_b, 0))
    for method, pair in (("aggregate", goals), ("shots_on_target", shots), ("experience", seniority)):
        if pair[0] != pair[1]:
            winner = team_a if pair[0] > pair[1] else team_b
            break
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        method = "coin_flip"
        winner = team_a if rng.random() < 0.5 else team_b
    return FixtureDecision(fixture_id, round, team_a, team_b, winner, method, goals, shots)


def update_form(window: FormWindow, result: str) -> FormWindow:
    """Append ``result``, keeping only the five most recent."""
    return FormWindow((tuple(window.results) + (result,))[-FORM_WINDOW:])


# --------------------------------------------------------------------------- bracket


@dataclass(frozen=True)
class LegSlot:
    venue_team: Optional[str]
    played: bool = False
    result: Optional[LegPrediction] = None


@dataclass(frozen=True)
class FixtureTemplate:
    fixture_id: str
    round: str
    team_a: str
    team_b: str
    legs: tuple = ()


@dataclass
class BracketState:
    rounds: tuple
    fixtures: dict
    squads: dict
    forms: dict
    experience: dict
    max_experience: int
    rng_seed: int = 0

    def teams(self) -> list[str]:
        first = self.fixtures[self.rounds[0]]
        return [t for f in first for t in (f.team_a, f.team_b)]


WINNER_PREFIX = "winner:"


def _parse_pairs(value, squads: dict, what: str) -> dict:
    if value is None:
        return {}
    if isinstance(value, dict):
        return {team: [(str(p), int(n)) for p, n in pairs] for team, pairs in value.items()}
    out: dict = {}
    for p, n in value:
        owner = next((t for t, players in squads.items() if p in players), None)
        if owner is None:
            raise InvalidBracket(f"{what} entry {p!r} is not in any squad")
        out.setdefault(owner, []).append((str(p), int(n)))
    return out


def _parse_result(raw: dict, home_team: str, away_team: str, squads: dict, fixture_id: str, leg: int, neutral: bool):
    if not isinstance(raw, dict) or "home" not in raw or "away" not in raw:
        raise InvalidBracket(f"{fixture_id} leg {leg}: played legs need a result with home and away stat lines")
    home = TeamStatLine.from_dict(raw["home"])
    away = TeamStatLine.from_dict(raw["away"])
    scorers = _parse_pairs(raw.get("scorers"), squads, "scorer")
    assists = _parse_pairs(raw.get("assists"), squads, "assist")
    for team, line in ((home_team, home), (away_team, away)):
        if team in scorers and sum(n for _, n in scorers[team]) != line.goals:
            raise InvalidBracket(f"{fixture_id} leg {leg}: scorer goals for {team} do not sum to {line.goals}")
    return LegPrediction(
        home_team, away_team, home, away, scorers, assists, {}, neutral=neutral, simulated=False,
        fixture_id=fixture_id, leg=leg,
    )


def _default_legs(rnd: str, team_a: str, team_b: str) -> tuple:
    if rnd == "Final":
        return (LegSlot(None),)
    return (LegSlot(team_a), LegSlot(team_b))


def parse_bracket(data: dict) -> tuple[tuple, dict, dict]:
    """Validate a bracket document; returns ``(rounds, fixtures_by_round, squads)``."""
    if not isinstance(data, dict):
        raise InvalidBracket("bracket must be a JSON object")
    rounds = tuple(data.get("rounds") or ())
    if not rounds:
        raise InvalidBracket("bracket lists no rounds")
    if any(r not in ROUNDS for r in rounds) or len(set(rounds)) != len(rounds):
        raise InvalidBracket(f"rounds must be distinct values from {ROUNDS}")
    if list(rounds) != sorted(rounds, key=ROUNDS.index) or rounds[-1] != "Final":
        raise InvalidBracket("rounds must be in competition order and end with the Final")
    squads = {str(t): [str(p) for p in players] for t, players in (data.get("squads") or {}).items()}

    by_round: dict = {r: [] for r in rounds}
    seen_ids = set()
    for raw in data.get("fixtures") or ():
        try:
            fid, rnd, a, b = str(raw["fixture_id"]), raw["round"], str(raw["team_a"]), str(raw["team_b"])
        except (KeyError, TypeError):
            raise InvalidBracket("each fixture needs fixture_id, round, team_a and team_b") from None
        if rnd not in by_round:
            raise InvalidBracket(f"fixture {fid} is in round {rnd!r}, which the bracket does not list")
        if fid in seen_ids:
            raise InvalidBracket(f"duplicate fixture id {fid!r}")
        seen_ids.add(fid)
        if a == b:
            raise InvalidBracket(f"fixture {fid} pairs {a!r} with itself")
        by_round[rnd].append((fid, rnd, a, b, raw.get("legs")))

    if not by_round[rounds[0]]:
        raise InvalidBracket(f"first round {rounds[0]} has no fixtures")

    fixtures: dict = {}
    prev: list = []
    for depth, rnd in enumerate(rounds):
        entries = by_round[rnd]
        expected = len(prev) // 2 if depth else None
        if depth and not entries:
            # advance winners pairwise in fixture order
            entries = [
                (f"{rnd}{k + 1}", rnd, WINNER_PREFIX + prev[2 * k].fixture_id, WINNER_PREFIX + prev[2 * k + 1].fixture_id, None)
                for k in range(expected)
            ]
        if depth and len(entries) != expected:
            raise InvalidBracket(f"round {rnd} has {len(entries)} fixtures, expected {expected}")
        if rnd == "Final" and len(entries) != 1:
            raise InvalidBracket("the Final must be a single fixture")
        if depth == 0 and len(entries) & (len(entries) - 1):
            raise InvalidBracket("first-round fixture count must be a power of two")
        prev_ids = {f.fixture_id for f in prev}
        used_refs = set()
        slots_seen = set()
        built = []
        for fid, _, a, b, raw_legs in entries:
            for slot in (a, b):
                if slot.startswith(WINNER_PREFIX):
                    ref = slot[len(WINNER_PREFIX):]
                    if ref not in prev_ids or ref in used_refs:
                        raise InvalidBracket(f"fixture {fid}: {slot!r} does not name an unused previous-round fixture")
                    used_refs.add(ref)
                elif depth:
                    raise InvalidBracket(f"fixture {fid}: later-round slots must reference earlier winners")
                elif slot in slots_seen:
                    raise InvalidBracket(f"team {slot!r} appears twice in round {rnd}")
                slots_seen.add(slot)
            built.append(FixtureTemplate(fid, rnd, a, b, _parse_legs(raw_legs, fid, rnd, a, b, squads)))
        fixtures[rnd] = built
        prev = built
    return rounds, fixtures, squads


def _parse_legs(raw_legs, fid: str, rnd: str, a: str, b: str, squads: dict) -> tuple:
    if raw_legs is None:
        return _default_legs(rnd, a, b)
    n_expected = 1 if rnd == "Final" else 2
    if len(raw_legs) != n_expected:
        raise InvalidBracket(f"fixture {fid} in {rnd} needs {n_expected} leg(s), got {len(raw_legs)}")
    legs = []
    venues = []
    concrete = not (a.startswith(WINNER_PREFIX) or b.startswith(WINNER_PREFIX))
    for k, raw in enumerate(raw_legs):
        venue = raw.get("venue_team")
        if rnd == "Final":
            if venue not in (None, a, b):
                raise InvalidBracket(f"fixture {fid}: venue {venue!r} is not one of its teams")
        elif venue not in (a, b):
            raise InvalidBracket(f"fixture {fid} leg {k + 1}: venue must be {a!r} or {b!r}")
        venues.append(venue)
        played = bool(raw.get("played", False))
        result = None
        if played:
            if not concrete:
                raise InvalidBracket(f"fixture {fid}: recorded legs need concrete teams")
            home = venue if venue is not None else a
            away = b if home == a else a
            result = _parse_result(raw.get("result"), home, away, squads, fid, k + 1, venue is None)
        legs.append(LegSlot(venue, played, result))
    if rnd != "Final" and len(set(venues)) != 2:
        raise InvalidBracket(f"fixture {fid}: each team hosts exactly one leg")
    return tuple(legs)


def build_state(data: dict, corpus: Corpus, seed: int = 0) -> BracketState:
    """Bracket plus each team's entering form and experience from the corpus."""
    rounds, fixtures, squads = parse_bracket(data)
    teams = [t for f in fixtures[rounds[0]] for t in (f.team_a, f.team_b)]
    counts: dict = {}
    for r in corpus.team_rows:
        counts[r.team] = counts.get(r.team, 0) + 1
    return BracketState(
        rounds=rounds,
        fixtures=fixtures,
        squads=squads,
        forms={t: recent_form(t, corpus.team_rows) for t in teams},
        experience={t: experience(t, corpus.team_rows) for t in teams},
        max_experience=max(counts.values(), default=0),
        rng_seed=seed,
    )


def load_bracket(path, corpus: Corpus, seed: int = 0) -> BracketState:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidBracket(f"bracket is not valid JSON: {exc}") from None
    return build_state(data, corpus, seed)


# --------------------------------------------------------------------------- simulation


@dataclass
class RunReport:
    run: int
    legs: list
    decisions: list
    champion: str

    def to_dict(self) -> dict:
        return {
            "run": self.run,
            "champion": self.champion,
            "fixtures": [d.to_dict() for d in self.decisions],
            "legs": [l.to_dict() for l in self.legs],
        }


@dataclass
class SimulationReport:
    seed: int
    runs: list
    distributions: dict
    win_frequencies: Optional[dict] = None

    @property
    def champion(self) -> str:
        return self.runs[0].champion

    def fixture_chain(self) -> list[str]:
        return [f"{d.round} {d.fixture_id}: {d.team_a} v {d.team_b} -> {d.winner} ({d.method})" for d in self.runs[0].decisions]

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "n_runs": len(self.runs),
            "champion": self.champion,
            "runs": [r.to_dict() for r in self.runs],
            "distributions": self.distributions,
        }
        if self.win_frequencies is not None:
            out["win_frequencies"] = self.win_frequencies
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, run_index]))


def _context(state_forms, state_exp, max_exp, team: str, home: bool) -> ContextFeatures:
    return context_features(home, state_forms[team], state_exp[team], max_exp)


def _simulate_once(state: BracketState, models: ModelBundle, rng, run: int) -> RunReport:
    forms = dict(state.forms)
    exp = dict(state.experience)
    winners: dict = {}
    legs_out, decisions = [], []
    prev_winners: list = []
    for rnd in state.rounds:
        this_round = []
        for fx in state.fixtures[rnd]:
            a = winners[fx.team_a[len(WINNER_PREFIX):]] if fx.team_a.startswith(WINNER_PREFIX) else fx.team_a
            b = winners[fx.team_b[len(WINNER_PREFIX):]] if fx.team_b.startswith(WINNER_PREFIX) else fx.team_b
            slots = fx.legs or _default_legs(rnd, fx.team_a, fx.team_b)
            played = []
            for k, slot in enumerate(slots, start=1):
                if slot.played:
                    leg = slot.result
                else:
                    venue = slot.venue_team
                    if venue is not None and venue.startswith(WINNER_PREFIX):
                        venue = a if venue == fx.team_a else b
                    neutral = venue is None
                    home = a if neutral else venue
                    away = b if home == a else a
                    ctx = (
                        _context(forms, exp, state.max_experience, home, not neutral),
                        _context(forms, exp, state.max_experience, away, False),
                    )
                    leg = predict_leg(models, home, away, ctx, rng, state.squads, neutral=neutral)
                    leg.fixture_id, leg.leg = fx.fixture_id, k
                for team in (leg.home_team, leg.away_team):
                    forms[team] = update_form(forms[team], leg.result_for(team))
                    exp[team] += 1
                played.append(leg)
                legs_out.append(leg)
            decision = decide_fixture(played, a, b, exp, rng, fixture_id=fx.fixture_id, round=rnd)
            winners[fx.fixture_id] = decision.winner
            decisions.append(decision)
            this_round.append(decision.winner)
        prev_winners = this_round
    return RunReport(run, legs_out, decisions, prev_winners[0])


def simulate_bracket(state: BracketState, models: ModelBundle, runs: int = 1, seed: Optional[int] = None) -> SimulationReport:
    """Play every unplayed leg round by round, ``runs`` independent times.

    Run ``i`` draws from its own stream seeded by ``(seed, i)``.
    Recorded legs are carried through verbatim. Form and experience
    are updated after every leg.
    """
    if runs < 1:
        raise InvalidBracket("runs must be >= 1")
    seed = state.rng_seed if seed is None else seed
    for team in state.teams():
        models.team_vector(team)
    reports = [_simulate_once(state, models, run_rng(seed, i), i) for i in range(runs)]

    distributions: dict = {}
    for rep in reports:
        for leg in rep.legs:
            if not leg.simulated:
                continue
            for team in (leg.home_team, leg.away_team):
                line = leg.line(team)
                per_team = distributions.setdefault(team, {m: [] for m in DISTRIBUTION_METRICS})
                for metric in DISTRIBUTION_METRICS:
                    per_team[metric].append(getattr(line, metric))
    distributions = dict(sorted(distributions.items()))

    freqs = None
    if runs > 1:
        counts: dict = {t: 0 for t in sorted(state.teams())}
        for rep in reports:
            counts[rep.champion] += 1
        freqs = {t: c / runs for t, c in counts.items()}
    return SimulationReport(seed, reports, distributions, freqs)


# --------------------------------------------------------------------------- output formats


LEG_CSV_HEADER = (
    ("run", "fixture_id", "round", "leg", "home_team", "away_team", "neutral", "simulated")
    + tuple(f"home_{s}" for s in TEAM_STATS)
    + tuple(f"away_{s}" for s in TEAM_STATS)
    + ("home_scorers", "away_scorers")
)


def _fmt_pairs(pairs) -> str:
    return ";".join(f"{p}:{n}" for p, n in pairs)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def legs_csv(report: SimulationReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEG_CSV_HEADER)
    for rep in report.runs:
        rounds = {d.fixture_id: d.round for d in rep.decisions}
        for leg in rep.legs:
            w.writerow(
                [rep.run, leg.fixture_id, rounds.get(leg.fixture_id, ""), leg.leg, leg.home_team, leg.away_team]
                + [_fmt(leg.neutral), _fmt(leg.simulated)]
                + [_fmt(v) for v in astuple(leg.home)]
                + [_fmt(v) for v in astuple(leg.away)]
                + [_fmt_pairs(leg.scorers.get(leg.home_team, ())), _fmt_pairs(leg.scorers.get(leg.away_team, ()))]
            )
    return buf.getvalue()


def distribution_csv(distributions: dict) -> str:
    """Tidy ``team,metric,value`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("team", "metric", "value"))
    for team, metrics in distributions.items():
        for metric, values in metrics.items():
            for v in values:
                w.writerow((team, metric, _fmt(v)))
    return buf.getvalue()


def win_frequency_csv(freqs: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("team", "win_frequency"))
    for team, f in sorted(freqs.items(), key=lambda kv: (-kv[1], kv[0])):
        w.writerow((team, _fmt(f)))
    return buf.getvalue()


def narrative(run: RunReport) -> list[str]:
    """Human-readable lines: scoreline, possession, passes and scorers per leg."""
    lines = []
    for leg in run.legs:
        tag = "" if leg.simulated else " [recorded]"
        text = (
            f"{leg.fixture_id} leg {leg.leg}{tag}: {leg.scoreline()}"
            f" | possession {leg.home.possession_pct:g}%-{leg.away.possession_pct:g}%"
            f" | passes {leg.home.passes}-{leg.away.passes}"
        )
        names = []
        for team in (leg.home_team, leg.away_team):
            for player, n in leg.scorers.get(team, ()):
                names.append(f"{player} ({team})" + (f" x{n}" if n > 1 else ""))
        if names:
            text += " | scorers: " + ", ".join(names)
        lines.append(text)
    lines.append(f"champion: {run.champion}")
    return lines

