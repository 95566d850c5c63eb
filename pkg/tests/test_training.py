import json

import numpy as np
import pytest

from knockout_dae.autoencoder import (
    ARTIFACT_VERSION,
    CorruptArtifact,
    DimensionMismatch,
    EmptyDataset,
    TrainConfig,
    TrainingDiverged,
    VersionMismatch,
    chain,
    dumps_model,
    load_model,
    loads_model,
    predict,
    save_model,
    train,
)
from knockout_dae.autoencoder import _fallback
from knockout_dae.autoencoder.training import TEAM_INPUT_DIM

try:
    from knockout_dae.autoencoder import _kernels
except ImportError:
    _kernels = None


def toy(n=60, dim=4, seed=0, context=0):
    rng = np.random.default_rng(seed)
    return [(rng.uniform(0, 1, size=dim), rng.uniform(0, 1, size=context)) for _ in range(n)]


LINEAR = chain(4, 8, 4, hidden="identity", output="identity")


def test_config_defaults_and_validation():
    c = TrainConfig()
    assert (c.learning_rate, c.batch_size, c.noise_sigma, c.val_fraction) == (0.01, 10, 0.1, 0.15)
    for bad in ({"batch_size": 0}, {"epochs": 0}, {"noise_sigma": -1}, {"val_fraction": 1.0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig.from_dict({"epochs": 3, "unknown": 1}).epochs == 3


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        train([])


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        train(toy(dim=5), TrainConfig(epochs=1), LINEAR)
    mixed = toy(5) + toy(5, dim=3)
    with pytest.raises(DimensionMismatch):
        train(mixed, TrainConfig(epochs=1), LINEAR)


def test_history_length_and_best_selection():
    m = train(toy(), TrainConfig(epochs=7, seed=3), LINEAR)
    assert len(m.history) == 7
    assert all(va is not None for _, va in m.history)
    best_val = min(va for _, va in m.history)
    # kept parameters reproduce the best validation score on the fixed noisy copy
    assert m.best_rmse[1] == best_val


def test_no_validation_split():
    m = train(toy(), TrainConfig(epochs=2, val_fraction=0.0), LINEAR)
    assert all(va is None for _, va in m.history)


def test_identity_when_noise_free():
    m = train(toy(), TrainConfig(noise_sigma=0.0, epochs=300, seed=0), LINEAR)
    x = np.array([d[0] for d in toy(20, seed=11)])
    assert np.sqrt(np.mean((predict(m, x) - x) ** 2)) < 1e-3


def test_training_decreases_loss():
    m = train(toy(context=2), TrainConfig(epochs=40, seed=2), chain(6, 5, 6))
    assert m.history[-1][0] < m.history[0][0]


def test_seeded_determinism():
    a = train(toy(), TrainConfig(epochs=5, seed=4), LINEAR)
    b = train(toy(), TrainConfig(epochs=5, seed=4), LINEAR)
    c = train(toy(), TrainConfig(epochs=5, seed=5), LINEAR)
    assert dumps_model(a) == dumps_model(b)
    assert dumps_model(a) != dumps_model(c)


@pytest.mark.skipif(_kernels is None, reason="compiled extension not built")
def test_backends_train_alike():
    cfg = TrainConfig(epochs=5, seed=4)
    a = train(toy(context=3), cfg, chain(7, 5, 7), kernels=_kernels)
    b = train(toy(context=3), cfg, chain(7, 5, 7), kernels=_fallback)
    for (ta, va), (tb, vb) in zip(a.history, b.history):
        assert ta == pytest.approx(tb, rel=1e-9) and va == pytest.approx(vb, rel=1e-9)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    data = [(np.full(4, 1e300), np.zeros(0))] * 20
    with pytest.raises(TrainingDiverged):
        train(data, TrainConfig(epochs=2), LINEAR)


def test_context_mask(team_model):
    mask = team_model.noise_mask
    assert mask.shape == (TEAM_INPUT_DIM,) and mask.sum() == 3 and mask[-3:].all()


def test_team_model_beats_noise_floor(team_model, player_model):
    assert team_model.best_rmse[1] < 0.1
    assert player_model.best_rmse[1] < 0.1


# --------------------------------------------------------------------------- artifacts


def test_artifact_round_trip(tmp_path, team_model):
    path = tmp_path / "m.json"
    save_model(team_model, path)
    loaded = load_model(path)
    assert loaded == team_model
    x = np.random.default_rng(0).uniform(size=(4, TEAM_INPUT_DIM))
    assert np.array_equal(predict(loaded, x), predict(team_model, x))
    assert dumps_model(loaded) == path.read_text()
    assert loaded.scaler == team_model.scaler and loaded.config == team_model.config


def test_artifact_schema(team_model):
    data = json.loads(dumps_model(team_model))
    assert data["version"] == ARTIFACT_VERSION
    assert {"spec", "scaler", "config", "weights", "history", "kind"} <= set(data)
    assert len(data["weights"]) == 4


def test_truncated_artifact(team_model):
    text = dumps_model(team_model)
    with pytest.raises(CorruptArtifact):
        loads_model(text[: len(text) // 2])
    with pytest.raises(CorruptArtifact):
        loads_model("[]")


def test_malformed_artifact(team_model):
    data = json.loads(dumps_model(team_model))
    data["weights"][0]["W"] = data["weights"][0]["W"][:-1]
    with pytest.raises(CorruptArtifact):
        loads_model(json.dumps(data))
    del data["spec"]
    with pytest.raises(CorruptArtifact):
        loads_model(json.dumps(data))


def test_version_mismatch(team_model):
    data = json.loads(dumps_model(team_model))
    data["version"] = ARTIFACT_VERSION + 1
    with pytest.raises(VersionMismatch):
        loads_model(json.dumps(data))


def test_binary_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_bytes(b"\xff\xfe\x00garbage")
    with pytest.raises(CorruptArtifact):
        load_model(path)


def test_loss_decreases_in_expectation(team_model):
    train_rmse = [tr for tr, _ in team_model.history]
    k = max(1, len(train_rmse) // 10)
    assert np.median(train_rmse[-k:]) < np.median(train_rmse[:k])


def test_predict_shape_and_near_idempotence(team_model, corpus, scalers):
    from knockout_dae.features import team_training_samples

    x = np.array([np.concatenate(s) for s in team_training_samples(corpus, scalers[0])])
    once = predict(team_model, x)
    assert once.shape == x.shape
    assert np.array_equal(predict(team_model, x), once)
    twice = predict(team_model, once)
    drift = np.sqrt(np.mean((twice - once) ** 2))
    assert drift < 2 * team_model.best_rmse[0]
    with pytest.raises(DimensionMismatch):
        predict(team_model, x[:, :-1])
