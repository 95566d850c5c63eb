"""Parsing, validation and synthesis of team/player match corpora.

Team rows carry the 20 per-match team statistics, player rows the 9
individual statistics. Both arrive as CSV with a fixed header.
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from datetime import date, timedelta
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

ROUNDS = ("R16", "QF", "SF", "Final")

TEAM_STATS = (
    "goals",
    "attempts",
    "attempts_on_target",
    "attempts_off_target",
    "blocked_shots",
    "woodwork",
    "corners",
    "offsides",
    "possession_pct",
    "passes",
    "pass_accuracy_pct",
    "passes_completed",
    "distance_covered_km",
    "balls_recovered",
    "tackles",
    "clearances",
    "blocks",
    "yellow_cards",
    "red_cards",
    "fouls",
)
# Non-integer team statistics; everything else is a count.
TEAM_REAL_STATS = frozenset({"possession_pct", "pass_accuracy_pct", "distance_covered_km"})
TEAM_PERCENT_STATS = frozenset({"possession_pct", "pass_accuracy_pct"})

PLAYER_STATS = (
    "goals",
    "shots",
    "shots_on_target",
    "assists",
    "interceptions",
    "crosses",
    "fouls_committed",
    "offsides",
    "minutes_played",
)
MAX_MINUTES = 150

TEAM_ID_COLUMNS = ("match_id", "date", "season", "round", "team", "opponent", "home")
PLAYER_ID_COLUMNS = ("match_id", "team", "player")
TEAM_HEADER = TEAM_ID_COLUMNS + TEAM_STATS
PLAYER_HEADER = PLAYER_ID_COLUMNS + PLAYER_STATS

POSSESSION_TOLERANCE = 1.0

CsvSource = Union[str, "os.PathLike[str]", IO[str]]


class IngestError(ValueError):
    """Base class for corpus parsing and validation failures."""


class MissingColumn(IngestError):
    def __init__(self, column: str):
        super().__init__(f"missing column {column!r}")
        self.column = column


class HeaderMismatch(IngestError):
    pass


class NonNumericField(IngestError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}: column {column!r} is not numeric: {value!r}")
        self.row = row
        self.column = column


class InvariantViolation(IngestError):
    pass


class RangeViolation(IngestError):
    pass


class DuplicateTeamRow(IngestError):
    def __init__(self, match_id: str, team: str):
        super().__init__(f"duplicate row for team {team!r} in match {match_id!r}")
        self.match_id = match_id
        self.team = team


class DuplicatePlayerRow(IngestError):
    def __init__(self, match_id: str, player: str):
        super().__init__(f"duplicate row for player {player!r} in match {match_id!r}")
        self.match_id = match_id
        self.player = player


class UnpairedMatch(IngestError):
    pass


class OrphanPlayerRow(IngestError):
    pass


@dataclass(frozen=True)
class TeamMatchRecord:
    match_id: str
    date: date
    season: str
    round: str
    team: str
    opponent: str
    home: bool
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

    def stats(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in TEAM_STATS], dtype=float)


@dataclass(frozen=True)
class PlayerMatchRecord:
    match_id: str
    team: str
    player: str
    goals: int
    shots: int
    shots_on_target: int
    assists: int
    interceptions: int
    crosses: int
    fouls_committed: int
    offsides: int
    minutes_played: int

    def stats(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PLAYER_STATS], dtype=float)


@dataclass(frozen=True)
class CorpusStats:
    n_matches: int
    n_team_rows: int
    n_player_rows: int
    teams: frozenset
    players: frozenset
    seasons: frozenset
    warnings: tuple = ()

    def to_dict(self) -> dict:
        return {
            "n_matches": self.n_matches,
            "n_team_rows": self.n_team_rows,
            "n_player_rows": self.n_player_rows,
            "teams": sorted(self.teams),
            "players": sorted(self.players),
            "seasons": sorted(self.seasons),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class Corpus:
    """A validated pair of team and player row lists."""

    team_rows: tuple
    player_rows: tuple

    @classmethod
    def from_rows(cls, team_rows: Iterable[TeamMatchRecord], player_rows: Iterable[PlayerMatchRecord]) -> "Corpus":
        return cls(tuple(team_rows), tuple(player_rows))

    @property
    def teams(self) -> list[str]:
        return sorted({r.team for r in self.team_rows})

    @property
    def players(self) -> list[str]:
        return sorted({r.player for r in self.player_rows})


# --------------------------------------------------------------------------- parsing


def _open_text(source: CsvSource):
    if hasattr(source, "read"):
        return source, False
    return open(source, newline="", encoding="utf-8"), True


def _read_rows(source: CsvSource, header: Sequence[str]) -> list[tuple[int, dict]]:
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise MissingColumn(header[0]) from None
        if found and found[0].startswith("\ufeff"):
            found[0] = found[0][1:]
        for column in header:
            if column not in found:
                raise MissingColumn(column)
        if tuple(found) != tuple(header):
            raise HeaderMismatch(f"header must be exactly {','.join(header)}")
        rows = []
        for line_no, values in enumerate(reader, start=2):
            if not values:
                continue
            if len(values) != len(header):
                raise IngestError(f"row {line_no}: expected {len(header)} fields, got {len(values)}")
            rows.append((line_no, dict(zip(header, values))))
        return rows
    finally:
        if owned:
            fh.close()


def _parse_int(row: int, column: str, value: str) -> int:
    try:
        out = int(value)
    except ValueError:
        raise NonNumericField(row, column, value) from None
    if out < 0:
        raise RangeViolation(f"row {row}: {column} must be >= 0, got {out}")
    return out


def _parse_real(row: int, column: str, value: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise NonNumericField(row, column, value) from None
    if not math.isfinite(out) or out < 0:
        raise RangeViolation(f"row {row}: {column} must be finite and >= 0, got {value}")
    if column in TEAM_PERCENT_STATS and out > 100:
        raise RangeViolation(f"row {row}: {column} must be <= 100, got {value}")
    return out


def _parse_team_row(line_no: int, raw: dict) -> TeamMatchRecord:
    try:
        when = date.fromisoformat(raw["date"])
    except ValueError:
        raise IngestError(f"row {line_no}: date is not ISO-8601: {raw['date']!r}") from None
    if raw["round"] not in ROUNDS:
        raise IngestError(f"row {line_no}: unknown round {raw['round']!r}")
    if raw["home"] not in ("0", "1"):
        raise IngestError(f"row {line_no}: home must be 0 or 1, got {raw['home']!r}")
    stats = {}
    for name in TEAM_STATS:
        parse = _parse_real if name in TEAM_REAL_STATS else _parse_int
        stats[name] = parse(line_no, name, raw[name])
    if stats["passes_completed"] > stats["passes"]:
        raise InvariantViolation(
            f"row {line_no}: passes_completed {stats['passes_completed']} exceeds passes {stats['passes']}"
        )
    return TeamMatchRecord(
        match_id=raw["match_id"],
        date=when,
        season=raw["season"],
        round=raw["round"],
        team=raw["team"],
        opponent=raw["opponent"],
        home=raw["home"] == "1",
        **stats,
    )


def _parse_player_row(line_no: int, raw: dict) -> PlayerMatchRecord:
    stats = {name: _parse_int(line_no, name, raw[name]) for name in PLAYER_STATS}
    if stats["minutes_played"] > MAX_MINUTES:
        raise RangeViolation(f"row {line_no}: minutes_played {stats['minutes_played']} exceeds {MAX_MINUTES}")
    if stats["shots_on_target"] > stats["shots"]:
        raise InvariantViolation(
            f"row {line_no}: shots_on_target {stats['shots_on_target']} exceeds shots {stats['shots']}"
        )
    return PlayerMatchRecord(match_id=raw["match_id"], team=raw["team"], player=raw["player"], **stats)


def parse_team_matches(source: CsvSource) -> list[TeamMatchRecord]:
    """Parse a ``team_matches.csv`` source (path or text stream), preserving row order."""
    records = []
    seen = set()
    for line_no, raw in _read_rows(source, TEAM_HEADER):
        rec = _parse_team_row(line_no, raw)
        key = (rec.match_id, rec.team)
        if key in seen:
            raise DuplicateTeamRow(*key)
        seen.add(key)
        records.append(rec)
    return records


def parse_player_matches(source: CsvSource) -> list[PlayerMatchRecord]:
    """Parse a ``player_matches.csv`` source, preserving row order."""
    records = []
    seen = set()
    for line_no, raw in _read_rows(source, PLAYER_HEADER):
        rec = _parse_player_row(line_no, raw)
        key = (rec.match_id, rec.player)
        if key in seen:
            raise DuplicatePlayerRow(*key)
        seen.add(key)
        records.append(rec)
    return records


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(records, header, dest) -> str | None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for rec in records:
        writer.writerow([_format_value(v) for v in astuple(rec)])
    text = buf.getvalue()
    if dest is None:
        return text
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return None


def serialize_team_matches(records: Iterable[TeamMatchRecord], dest=None) -> str | None:
    """Write records as ``team_matches.csv``; returns the text when ``dest`` is None."""
    return _write_rows(records, TEAM_HEADER, dest)


def serialize_player_matches(records: Iterable[PlayerMatchRecord], dest=None) -> str | None:
    return _write_rows(records, PLAYER_HEADER, dest)


assert tuple(f.name for f in fields(TeamMatchRecord)) == TEAM_HEADER
assert tuple(f.name for f in fields(PlayerMatchRecord)) == PLAYER_HEADER


# --------------------------------------------------------------------------- validation


def validate_corpus(
    team_rows: Sequence[TeamMatchRecord], player_rows: Sequence[PlayerMatchRecord]
) -> CorpusStats:
    """Check match pairing and player references, returning a corpus summary.

    Structural problems raise; known source inconsistencies (shot
    decomposition, goals exceeding shots on target) become warnings.
    """
    by_match: dict[str, list[TeamMatchRecord]] = defaultdict(list)
    for rec in team_rows:
        by_match[rec.match_id].append(rec)

    warnings = []
    for match_id in sorted(by_match):
        pair = by_match[match_id]
        if len(pair) != 2:
            raise UnpairedMatch(f"match {match_id!r} has {len(pair)} team rows, expected 2")
        a, b = sorted(pair, key=lambda r: r.team)
        if a.team == b.team or a.opponent != b.team or b.opponent != a.team:
            raise UnpairedMatch(f"match {match_id!r}: team/opponent fields do not mirror each other")
        if a.home == b.home:
            raise UnpairedMatch(f"match {match_id!r}: home flags are not complementary")
        if (a.date, a.season, a.round) != (b.date, b.season, b.round):
            raise UnpairedMatch(f"match {match_id!r}: date/season/round differ between the two rows")
        total = a.possession_pct + b.possession_pct
        if abs(total - 100.0) > POSSESSION_TOLERANCE + 1e-9:
            raise InvariantViolation(f"match {match_id!r}: possession sums to {total:g}, expected 100 +/- 1")
        for rec in (a, b):
            shot_parts = rec.attempts_on_target + rec.attempts_off_target + rec.blocked_shots
            if shot_parts > rec.attempts:
                warnings.append(
                    f"match {match_id}: {rec.team} attempt breakdown {shot_parts} exceeds attempts {rec.attempts}"
                )

    pairs = {(r.match_id, r.team) for r in team_rows}
    for rec in player_rows:
        if (rec.match_id, rec.team) not in pairs:
            raise OrphanPlayerRow(f"player {rec.player!r} cites unknown match/team ({rec.match_id!r}, {rec.team!r})")
        if rec.goals > rec.shots_on_target:
            warnings.append(
                f"match {rec.match_id}: {rec.player} goals {rec.goals} exceed shots on target {rec.shots_on_target}"
            )

    return CorpusStats(
        n_matches=len(by_match),
        n_team_rows=len(team_rows),
        n_player_rows=len(player_rows),
        teams=frozenset(r.team for r in team_rows),
        players=frozenset(r.player for r in player_rows),
        seasons=frozenset(r.season for r in team_rows),
        warnings=tuple(sorted(warnings)),
    )


def load_corpus(team_csv: CsvSource, player_csv: CsvSource) -> tuple[Corpus, CorpusStats]:
    team_rows = parse_team_matches(team_csv)
    player_rows = parse_player_matches(player_csv)
    stats = validate_corpus(team_rows, player_rows)
    return Corpus.from_rows(team_rows, player_rows), stats


# --------------------------------------------------------------------------- synthesis

_SYNTH_START = date(2014, 2, 18)


def team_strengths(seed: int, n_teams: int) -> np.ndarray:
    """Latent strengths used by :func:`generate_synthetic_corpus` for ``seed``."""
    return np.random.default_rng(seed).normal(0.0, 1.0, size=n_teams)


def team_ids(n_teams: int) -> list[str]:
    return [f"T{i:02d}" for i in range(n_teams)]


def _season_of(when: date) -> str:
    start = when.year if when.month >= 7 else when.year - 1
    return f"{start}-{(start + 1) % 100:02d}"


def _synth_side(rng, edge: float, home: bool, possession: float) -> dict:
    # edge > 0 means this side is stronger than its opponent
    bonus = 0.15 if home else 0.0
    on_target = int(rng.poisson(np.exp(1.45 + 0.3 * edge + bonus)))
    goals = int(rng.binomial(on_target, 0.32))
    off_target = int(rng.poisson(np.exp(1.7 + 0.15 * edge)))
    blocked = int(rng.poisson(3.0 + 0.5 * max(edge, 0.0)))
    passes = max(150, int(round(rng.normal(520.0 + 9.0 * (possession - 50.0), 35.0))))
    accuracy = float(np.clip(rng.normal(84.0 + 0.25 * (possession - 50.0), 2.5), 55.0, 97.0))
    completed = min(passes, int(round(passes * accuracy / 100.0)))
    return {
        "goals": goals,
        "attempts": on_target + off_target + blocked,
        "attempts_on_target": on_target,
        "attempts_off_target": off_target,
        "blocked_shots": blocked,
        "woodwork": int(rng.poisson(0.3)),
        "corners": int(rng.poisson(np.exp(1.55 + 0.2 * edge))),
        "offsides": int(rng.poisson(2.0)),
        "possession_pct": possession,
        "passes": passes,
        "pass_accuracy_pct": round(100.0 * completed / passes, 1),
        "passes_completed": completed,
        "distance_covered_km": round(float(rng.normal(108.0, 3.0)), 1),
        "balls_recovered": int(rng.poisson(45.0 - 2.0 * edge)),
        "tackles": int(rng.poisson(16.0 - edge)),
        "clearances": int(rng.poisson(np.exp(2.8 - 0.25 * edge))),
        "blocks": int(rng.poisson(3.0)),
        "yellow_cards": int(rng.poisson(1.8)),
        "red_cards": int(rng.binomial(1, 0.04)),
        "fouls": int(rng.poisson(12.0)),
    }


def _synth_players(rng, team: str, match_id: str, side: dict, skills: np.ndarray) -> list[PlayerMatchRecord]:
    n = len(skills)
    starters = min(n, 11)
    minutes = np.zeros(n, dtype=int)
    minutes[:starters] = rng.integers(60, 91, size=starters)
    if n > starters:
        minutes[starters:] = np.where(rng.random(n - starters) < 0.3, rng.integers(5, 36, size=n - starters), 0)
    weights = skills * (minutes > 0) + 1e-12
    weights = weights / weights.sum()
    goals = rng.multinomial(side["goals"], weights)
    assists = rng.multinomial(int(rng.integers(0, side["goals"] + 1)), weights)
    extra_on = rng.multinomial(max(side["attempts_on_target"] - side["goals"], 0), weights)
    on_target = goals + extra_on
    shots = on_target + rng.multinomial(side["attempts_off_target"] + side["blocked_shots"], weights)
    out = []
    for i in range(n):
        played = minutes[i] > 0
        out.append(
            PlayerMatchRecord(
                match_id=match_id,
                team=team,
                player=f"{team}_P{i:02d}",
                goals=int(goals[i]),
                shots=int(shots[i]),
                shots_on_target=int(on_target[i]),
                assists=int(assists[i]),
                interceptions=int(rng.poisson(1.2)) if played else 0,
                crosses=int(rng.poisson(1.5 * skills[i] * n / skills.sum())) if played else 0,
                fouls_committed=int(rng.poisson(1.0)) if played else 0,
                offsides=int(rng.poisson(0.2)) if played else 0,
                minutes_played=int(minutes[i]),
            )
        )
    return out


def generate_synthetic_corpus(
    seed: int,
    n_teams: int,
    n_matches: int,
    players_per_team: int,
    *,
    strengths: Optional[Sequence[float]] = None,
) -> tuple[list[TeamMatchRecord], list[PlayerMatchRecord]]:
    """Generate a valid corpus whose stats are driven by per-team latent strength.

    Stronger teams get more possession, passes, shots and goals.
    Strengths default to :func:`team_strengths` for ``seed``; pass
    ``strengths`` to plant them explicitly. Output is fully determined
    by the arguments.
    """
    if n_teams < 2:
        raise ValueError("n_teams must be >= 2")
    if n_matches < 1:
        raise ValueError("n_matches must be >= 1")
    if players_per_team < 1:
        raise ValueError("players_per_team must be >= 1")
    if strengths is None:
        strengths = team_strengths(seed, n_teams)
    strengths = np.asarray(strengths, dtype=float)
    if strengths.shape != (n_teams,):
        raise ValueError(f"strengths must have {n_teams} entries")
    rng = np.random.default_rng([seed, 1])
    names = team_ids(n_teams)
    skills = {name: rng.gamma(2.0, 1.0, size=players_per_team) for name in names}

    team_rows: list[TeamMatchRecord] = []
    player_rows: list[PlayerMatchRecord] = []
    when = _SYNTH_START
    for k in range(n_matches):
        i, j = rng.choice(n_teams, size=2, replace=False)
        when = when + timedelta(days=int(rng.integers(3, 15)))
        match_id = f"M{k:05d}"
        rnd = ROUNDS[int(rng.integers(0, len(ROUNDS)))]
        edge = float(strengths[i] - strengths[j])
        home_poss = round(float(np.clip(rng.normal(50.0 + 7.0 * edge + 1.5, 4.0), 25.0, 75.0)), 1)
        possession = {i: home_poss, j: round(100.0 - home_poss, 1)}
        for side, opp, sign, is_home in ((i, j, 1.0, True), (j, i, -1.0, False)):
            stats = _synth_side(rng, sign * edge, is_home, possession[side])
            team, opponent = names[side], names[opp]
            team_rows.append(
                TeamMatchRecord(
                    match_id=match_id,
                    date=when,
                    season=_season_of(when),
                    round=rnd,
                    team=team,
                    opponent=opponent,
                    home=is_home,
                    **stats,
                )
            )
            player_rows.extend(_synth_players(rng, team, match_id, stats, skills[team]))
    return team_rows, player_rows
