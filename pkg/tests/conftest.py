import pytest

from knockout_dae.autoencoder import TrainConfig, train
from knockout_dae.features import (
    fit_player_scaler,
    fit_team_scaler,
    player_training_samples,
    team_training_samples,
)
from knockout_dae.ingest import Corpus, generate_synthetic_corpus, team_ids
from knockout_dae.simulator import ModelBundle


def make_bracket(teams, players_per_team=18):
    return {
        "rounds": ["QF", "SF", "Final"],
        "fixtures": [
            {"fixture_id": f"QF{i + 1}", "round": "QF", "team_a": teams[2 * i], "team_b": teams[2 * i + 1]}
            for i in range(len(teams) // 2)
        ],
        "squads": {t: [f"{t}_P{k:02d}" for k in range(players_per_team)] for t in teams},
    }


@pytest.fixture(scope="session")
def corpus():
    team_rows, player_rows = generate_synthetic_corpus(7, 8, 100, 18)
    return Corpus.from_rows(team_rows, player_rows)


@pytest.fixture(scope="session")
def scalers(corpus):
    return fit_team_scaler(corpus), fit_player_scaler(corpus)


@pytest.fixture(scope="session")
def team_model(corpus, scalers):
    return train(team_training_samples(corpus, scalers[0]), TrainConfig(seed=1), kind="team", scaler=scalers[0])


@pytest.fixture(scope="session")
def player_model(corpus, scalers):
    samples = player_training_samples(corpus, *scalers)
    return train(samples, TrainConfig(seed=1, epochs=15), kind="player", scaler=scalers[1])


@pytest.fixture(scope="session")
def bundle(team_model, player_model, corpus):
    return ModelBundle.from_corpus(team_model, player_model, corpus)


@pytest.fixture
def bracket():
    return make_bracket(team_ids(8))


# one summary line per acceptance criterion
_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _acceptance.append((report.nodeid.split("::")[-1], outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _acceptance:
        terminalreporter.write_line(f"{outcome:<5} {name}" + (f"  [{detail}]" if detail else ""))
