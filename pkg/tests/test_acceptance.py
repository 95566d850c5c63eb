"""One test per acceptance criterion; the terminal summary prints a PASS/FAIL line for each."""

import dataclasses
import json
import os
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from knockout_dae.autoencoder import (
    LayerSpec,
    ModelParams,
    TrainConfig,
    backward,
    forward,
    init_network,
    mse_loss,
    train,
)
from knockout_dae.features import (
    ScalerParams,
    correlation_with_goals,
    fit_player_scaler,
    fit_team_scaler,
    inverse_transform,
    player_training_samples,
    team_training_samples,
    transform,
)
from knockout_dae.ingest import TEAM_STATS, Corpus, generate_synthetic_corpus, load_corpus, team_ids, team_strengths
from knockout_dae.simulator import ModelBundle, build_state, narrative, simulate_bracket

from conftest import make_bracket

UCLDATA_ENV = "KNOCKOUT_DAE_UCLDATA"


def _ucldata_dir():
    root = os.environ.get(UCLDATA_ENV)
    if not root:
        return None
    root = Path(root)
    if (root / "team_matches.csv").is_file() and (root / "player_matches.csv").is_file():
        return root
    return None


@pytest.mark.skipif(_ucldata_dir() is None, reason=f"real corpus not available (set {UCLDATA_ENV})")
def test_criterion_1_real_data_rmse_band(record_property):
    root = _ucldata_dir()
    start = time.perf_counter()
    corpus, _ = load_corpus(root / "team_matches.csv", root / "player_matches.csv")
    scaler = fit_team_scaler(corpus)
    model = train(team_training_samples(corpus, scaler), TrainConfig(), kind="team", scaler=scaler)
    tr, va = model.best_rmse
    elapsed = time.perf_counter() - start
    record_property("detail", f"train {tr:.4f} val {va:.4f} gap {abs(tr - va):.4f} in {elapsed:.1f}s")
    assert 0.10 <= tr <= 0.17
    assert abs(tr - va) < 0.02
    assert elapsed < 300


def test_criterion_2_denoising_beats_noise_floor(record_property):
    start = time.perf_counter()
    sigma = TrainConfig().noise_sigma
    results = []
    for seed in range(5):
        teams, players = generate_synthetic_corpus(seed, 8, 100, 18)
        corpus = Corpus.from_rows(teams, players)
        scaler = fit_team_scaler(corpus)
        model = train(team_training_samples(corpus, scaler), TrainConfig(seed=seed), kind="team", scaler=scaler)
        results.append(model.best_rmse)
    elapsed = time.perf_counter() - start
    worst = max(max(tr, va) for tr, va in results)
    record_property("detail", f"worst RMSE {worst:.4f} < sigma {sigma} over 5 seeds in {elapsed:.1f}s")
    for tr, va in results:
        assert tr < sigma and va < sigma
    assert elapsed < 120


def test_criterion_3_gradient_oracle(record_property):
    rng = np.random.default_rng(0)
    spec = [LayerSpec(12, 9), LayerSpec(9, 6), LayerSpec(6, 12)]
    params = init_network(spec, 3)
    for layer in params.layers:
        layer.biases[:] = rng.normal(0, 0.5, layer.biases.size)
    x, y = rng.uniform(size=(8, 12)), rng.uniform(size=(8, 12))
    _, cache = forward(params, x)
    analytic = backward(params, cache, y).arrays()
    arrays = params.arrays()
    index = [(k, i) for k, a in enumerate(arrays) for i in range(a.size)]
    picks = rng.choice(len(index), size=100, replace=False)
    h = 1e-5
    worst = 0.0
    for p in picks:
        k, i = index[p]
        flat = arrays[k].reshape(-1)
        keep = flat[i]
        flat[i] = keep + h
        up = mse_loss(forward(params, x)[0], y)
        flat[i] = keep - h
        down = mse_loss(forward(params, x)[0], y)
        flat[i] = keep
        numeric = (up - down) / (2 * h)
        a = analytic[k].reshape(-1)[i]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
        worst = max(worst, rel)
    record_property("detail", f"max relative error {worst:.2e} over 100 parameters")
    assert worst < 1e-4


def test_criterion_4_scaler_round_trip(record_property):
    rng = np.random.default_rng(1)
    n, d = 10_000, len(TEAM_STATS)
    mins = rng.uniform(-100, 100, d)
    maxs = mins + rng.uniform(0.5, 1000, d)
    degenerate = [3, 11, 17]
    maxs[degenerate] = mins[degenerate]
    scaler = ScalerParams(TEAM_STATS, mins, maxs)
    x = rng.uniform(mins, maxs, size=(n, d))
    x[:, degenerate] = mins[degenerate]
    err = float(np.max(np.abs(inverse_transform(scaler, transform(scaler, x)) - x)))
    record_property("detail", f"max abs error {err:.2e} over 1e4 vectors ({len(degenerate)} constant features)")
    assert err <= 1e-9
    assert np.all(transform(scaler, x)[:, degenerate] == 0.0)


def test_criterion_5_correlation_oracle(record_property, corpus):
    goals = [float(r.goals) for r in corpus.team_rows]
    worst = 0.0
    for name, r in correlation_with_goals(corpus):
        column = [float(getattr(row, name)) for row in corpus.team_rows]
        if len(set(column)) == 1:
            assert r is None
            continue
        worst = max(worst, abs(r - statistics.correlation(column, goals)))
    firsts = []
    for seed in range(3):
        teams, _ = generate_synthetic_corpus(seed, 8, 120, 2)
        rng = np.random.default_rng(100 + seed)
        rows = [
            dataclasses.replace(r, goals=max(0, int(round(0.35 * r.attempts_on_target + rng.normal(0, 0.6)))))
            for r in teams
        ]
        firsts.append(correlation_with_goals(rows)[0][0])
    record_property("detail", f"max |r - oracle| {worst:.1e}; top feature per seed {firsts}")
    assert worst < 1e-12
    assert all(f == "attempts_on_target" for f in firsts)


def _check_leg(leg) -> list:
    problems = []
    if leg.home.possession_pct + leg.away.possession_pct != 100:
        problems.append("possession")
    for team in (leg.home_team, leg.away_team):
        line = leg.line(team)
        if sum(n for _, n in leg.scorers.get(team, ())) != line.goals:
            problems.append("scorers")
        if sum(n for _, n in leg.assists.get(team, ())) > line.goals:
            problems.append("assists")
        if line.passes_completed > line.passes:
            problems.append("passes")
        if any(v < 0 for v in line.to_dict().values()):
            problems.append("negative")
        for pl in leg.player_lines.get(team, ()):
            if any(v < 0 for k, v in pl.items() if k != "player"):
                problems.append("player negative")
    return problems


def test_criterion_6_conservation(record_property, bundle, corpus, bracket, team_model, player_model):
    legs = []
    state = build_state(bracket, corpus, seed=0)
    legs += [l for run in simulate_bracket(state, bundle, runs=20).runs for l in run.legs]
    # a louder noise level stresses the reconciliation far from the training manifold
    loud = ModelBundle.from_corpus(team_model, player_model, corpus, sigma=0.5)
    legs += [l for run in simulate_bracket(state, loud, runs=20, seed=1).runs for l in run.legs]
    assert all(l.simulated for l in legs)
    bad = [(l.fixture_id, p) for l in legs for p in _check_leg(l)]
    record_property("detail", f"{len(legs) - len({id(l) for l in legs if _check_leg(l)})}/{len(legs)} legs conserve (half at sigma 0.5)")
    assert len(legs) >= 500
    assert not bad


def _strip_seed(text: str) -> dict:
    data = json.loads(text)
    data.pop("seed")
    return data


def _shape(report: dict) -> list:
    # everything that does not depend on a random draw
    first_round = [f for f in report["runs"][0]["fixtures"] if f["round"] == "QF"]
    return [
        report["n_runs"],
        [len(r["legs"]) for r in report["runs"]],
        [[(f["fixture_id"], f["round"]) for f in r["fixtures"]] for r in report["runs"]],
        [(f["team_a"], f["team_b"]) for f in first_round],
        [sorted(l.keys()) for l in report["runs"][0]["legs"]],
    ]


def test_criterion_7_bracket_soundness_and_determinism(record_property, bundle, corpus, bracket, team_model, player_model):
    state = build_state(bracket, corpus, seed=21)
    report = simulate_bracket(state, bundle)
    run = report.runs[0]
    losers = [d.loser for d in run.decisions]
    assert len(run.decisions) == 7
    assert sorted(losers + [report.champion]) == sorted(team_ids(8))
    lines = narrative(run)
    assert all("possession" in l and "passes" in l for l in lines[:-1])

    same = [simulate_bracket(state, bundle, runs=3, seed=21).to_json() for _ in range(2)]
    assert same[0] == same[1]

    other = simulate_bracket(state, bundle, runs=3, seed=22).to_json()
    assert _shape(json.loads(same[0])) == _shape(json.loads(other))

    quiet = ModelBundle.from_corpus(team_model, player_model, corpus, sigma=0.0)
    q1 = simulate_bracket(state, quiet, runs=2, seed=21)
    q2 = simulate_bracket(state, quiet, runs=2, seed=22)
    flips = [d for r in q1.runs + q2.runs for d in r.decisions if d.method == "coin_flip"]
    record_property(
        "detail",
        f"7 fixtures, champion {report.champion}; same seed byte-identical; sigma=0 seeds 21/22 differ only in seed field"
        + (f" ({len(flips)} coin flips)" if flips else ""),
    )
    assert not flips
    assert _strip_seed(q1.to_json()) == _strip_seed(q2.to_json())


def _planted_ranks(seed: int, planted: int, n_teams: int = 8, runs: int = 200) -> tuple:
    strengths = team_strengths(seed, n_teams)
    strengths[planted] = strengths.max() + 1.5
    teams, players = generate_synthetic_corpus(seed, n_teams, 100, 18, strengths=strengths)
    corpus = Corpus.from_rows(teams, players)
    ts, ps = fit_team_scaler(corpus), fit_player_scaler(corpus)
    team_model = train(team_training_samples(corpus, ts), TrainConfig(seed=seed), kind="team", scaler=ts)
    player_model = train(player_training_samples(corpus, ts, ps), TrainConfig(seed=seed, epochs=15), kind="player", scaler=ps)
    bundle = ModelBundle.from_corpus(team_model, player_model, corpus)
    names = team_ids(n_teams)
    report = simulate_bracket(build_state(make_bracket(names), corpus, seed), bundle, runs=runs)
    ranks = []
    for metric in ("passes", "possession_pct"):
        means = {t: float(np.mean(d[metric])) for t, d in report.distributions.items()}
        ranks.append(sorted(means, key=lambda t: (-means[t], t)).index(names[planted]) + 1)
    return tuple(ranks)


def test_criterion_8_distribution_fidelity(record_property):
    cases = [(0, 5), (1, 2), (2, 0)]
    ranks = {case: _planted_ranks(*case) for case in cases}
    record_property(
        "detail",
        "(seed, planted) -> (passes rank, possession rank) over 200 runs: "
        + ", ".join(f"{c}->{r}" for c, r in ranks.items()),
    )
    for passes_rank, possession_rank in ranks.values():
        assert passes_rank <= 2 and possession_rank <= 2


def test_criterion_9_report_can_express_narrative(record_property, bundle, corpus, bracket):
    # not a numeric target: only checks the report carries scoreline, possession, passes and named scorers
    report = simulate_bracket(build_state(bracket, corpus, 4), bundle, runs=1)
    leg = report.runs[0].legs[0]
    data = json.loads(report.to_json())["runs"][0]["legs"][0]
    assert {"goals", "possession_pct", "passes"} <= set(data["home"])
    assert set(data["scorers"]) == {leg.home_team, leg.away_team}
    line = narrative(report.runs[0])[0]
    record_property("detail", line)
    assert leg.scoreline() in line and "possession" in line and "passes" in line
