import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from knockout_dae.autoencoder import (
    AdamState,
    DimChainMismatch,
    DimensionMismatch,
    Gradients,
    Layer,
    LayerSpec,
    ModelParams,
    NetworkError,
    adam_step,
    add_gaussian_noise,
    backward,
    chain,
    forward,
    glorot_limit,
    init_network,
    mse_loss,
    rmse,
)
from knockout_dae.autoencoder.training import TrainConfig, default_player_spec, default_team_spec


def single(w, b, act):
    return ModelParams([Layer(np.array(w, dtype=float), np.array(b, dtype=float), act)])


def test_default_architectures():
    assert [(s.in_dim, s.out_dim) for s in default_team_spec()] == [(43, 32), (32, 16), (16, 32), (32, 43)]
    assert [(s.in_dim, s.out_dim) for s in default_player_spec()] == [(32, 24), (24, 12), (12, 24), (24, 32)]
    assert all(s.activation == "sigmoid" for s in default_team_spec())


def test_bad_specs():
    with pytest.raises(DimChainMismatch):
        init_network([LayerSpec(4, 3), LayerSpec(2, 4)], 0)
    with pytest.raises(DimChainMismatch):
        init_network([], 0)
    with pytest.raises(NetworkError):
        LayerSpec(0, 2)
    with pytest.raises(NetworkError):
        LayerSpec(2, 2, "tanh")


def test_init_glorot_and_determinism():
    spec = chain(6, 4, 6)
    a, b = init_network(spec, 5), init_network(spec, 5)
    assert a == b and a != init_network(spec, 6)
    for layer, s in zip(a.layers, spec):
        assert np.all(np.abs(layer.weights) <= glorot_limit(s.in_dim, s.out_dim))
        assert np.all(layer.biases == 0.0)
        assert layer.weights.shape == (s.out_dim, s.in_dim)


def test_forward_identity_example():
    p = single([[1, 2], [3, 4]], [0.5, -1], "identity")
    out, _ = forward(p, [1, 1])
    assert out.tolist() == [3.5, 6.0]


def test_forward_zero_weights_sigmoid_is_half():
    p = single(np.zeros((3, 2)), np.zeros(3), "sigmoid")
    out, _ = forward(p, [5.0, -7.0])
    assert out.tolist() == [0.5, 0.5, 0.5]


def test_forward_relu_and_shapes():
    p = single([[1, -1]], [0], "relu")
    assert forward(p, [1, 3])[0].tolist() == [0.0]
    batch = forward(p, [[1, 3], [3, 1]])[0]
    assert batch.shape == (2, 1) and batch.tolist() == [[0.0], [2.0]]
    with pytest.raises(DimensionMismatch):
        forward(p, [1, 2, 3])


def test_sigmoid_extremes_finite():
    p = single([[1.0]], [0.0], "sigmoid")
    out, _ = forward(p, [[800.0], [-800.0]])
    assert np.all(np.isfinite(out)) and out[0, 0] == 1.0 and out[1, 0] == 0.0


def test_mse_and_rmse():
    assert mse_loss([1, 2], [1, 4]) == 2.0
    assert rmse([[0, 0], [0, 0]], [[3, 4], [0, 0]]) == pytest.approx(np.sqrt(25 / 4))
    with pytest.raises(DimensionMismatch):
        mse_loss([1, 2], [1, 2, 3])


def test_output_bias_gradient_identity():
    # identity output: dL/db = 2 (pred - target) / N
    p = single([[1, 0], [0, 1]], [0, 0], "identity")
    _, cache = forward(p, [1, 2])
    g = backward(p, cache, [0, 0])
    assert np.allclose(g.biases[0], [1.0, 2.0])
    assert np.allclose(g.weights[0], [[1.0, 2.0], [2.0, 4.0]])


def _numeric_gradients(params, x, y, h=1e-5):
    out = []
    for arr in params.arrays():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = mse_loss(forward(params, x)[0], y)
            flat[i] = keep - h
            down = mse_loss(forward(params, x)[0], y)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


@pytest.mark.parametrize("acts", [("sigmoid", "sigmoid"), ("relu", "identity"), ("identity", "sigmoid")])
def test_backward_matches_finite_differences(acts):
    rng = np.random.default_rng(4)
    spec = [LayerSpec(5, 4, acts[0]), LayerSpec(4, 3, acts[1])]
    p = init_network(spec, 2)
    for layer in p.layers:
        layer.biases[:] = rng.normal(0, 0.3, layer.biases.size)
    x, y = rng.uniform(size=(6, 5)), rng.uniform(size=(6, 3))
    _, cache = forward(p, x)
    analytic = backward(p, cache, y).arrays()
    numeric = _numeric_gradients(p, x, y)
    for a, n in zip(analytic, numeric):
        assert np.allclose(a, n, rtol=1e-5, atol=1e-9)


def test_backward_shape_check():
    p = init_network(chain(3, 2), 0)
    _, cache = forward(p, np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        backward(p, cache, np.ones((2, 3)))


# --------------------------------------------------------------------------- noise


def test_noise_statistics():
    rng = np.random.default_rng(0)
    x = np.zeros((100_000,))
    noisy = add_gaussian_noise(x, 0.1, rng)
    assert abs(noisy.mean()) < 0.005 * 0.1 * 10
    assert abs(noisy.std() - 0.1) < 0.005


def test_noise_sigma_zero_and_mask():
    rng = np.random.default_rng(0)
    x = np.array([0.2, 0.4, 0.6])
    assert np.array_equal(add_gaussian_noise(x, 0.0, rng), x)
    noisy = add_gaussian_noise(x, 0.5, rng, [False, True, True])
    assert noisy[1:].tolist() == [0.4, 0.6] and noisy[0] != 0.2
    with pytest.raises(DimensionMismatch):
        add_gaussian_noise(x, 0.1, rng, [True])


def test_noise_not_clipped_and_seeded():
    x = np.zeros(1000)
    a = add_gaussian_noise(x, 1.0, np.random.default_rng(9))
    b = add_gaussian_noise(x, 1.0, np.random.default_rng(9))
    assert np.array_equal(a, b) and a.min() < 0 and a.max() > 1


def test_noise_does_not_mutate_input():
    x = np.ones((3, 4))
    add_gaussian_noise(x, 0.3, np.random.default_rng(1))
    assert np.all(x == 1.0)


# --------------------------------------------------------------------------- Adam


def test_adam_first_step_magnitude():
    p = single([[1.0, -2.0]], [0.0], "identity")
    g = Gradients([np.array([[1.0, -1.0]])], [np.array([0.5])])
    new, state = adam_step(p, g, AdamState.zeros_like(p))
    step = 0.01 * 1 / (1 + 1e-8)
    assert np.allclose(new.layers[0].weights, [[1.0 - step, -2.0 + step]], rtol=0, atol=1e-15)
    # general first step: lr * |g| / (|g| + eps)
    assert new.layers[0].biases[0] == pytest.approx(-0.01 * 0.5 / (0.5 + 1e-8), abs=1e-17)
    assert state.t == 1
    # inputs untouched
    assert p.layers[0].weights.tolist() == [[1.0, -2.0]]


def test_adam_zero_gradient_no_move():
    p = init_network(chain(3, 2), 1)
    zero = Gradients([np.zeros_like(l.weights) for l in p.layers], [np.zeros_like(l.biases) for l in p.layers])
    new, _ = adam_step(p, zero, AdamState.zeros_like(p), TrainConfig())
    assert new == p


@settings(max_examples=40, deadline=None)
@given(st.floats(-1e3, 1e3, allow_nan=False).filter(lambda v: abs(v) > 1e-6), st.integers(1, 20))
def test_adam_constant_gradient_bounded_steps(grad, steps):
    # with a constant gradient every bias-corrected step is lr * |g| / (|g| + eps)
    p = single([[0.0]], [0.0], "identity")
    state = AdamState.zeros_like(p)
    g = Gradients([np.array([[grad]])], [np.array([0.0])])
    for _ in range(steps):
        prev = p.layers[0].weights[0, 0]
        p, state = adam_step(p, g, state)
        move = p.layers[0].weights[0, 0] - prev
        assert abs(abs(move) - 0.01 * abs(grad) / (abs(grad) + 1e-8)) < 1e-12
        assert np.sign(move) == -np.sign(grad)


def test_noise_std_per_component():
    noisy = add_gaussian_noise(np.full((100_000, 6), 0.5), 0.1, np.random.default_rng(7))
    stds = noisy.std(axis=0)
    assert np.all(np.abs(stds - 0.1) < 0.05 * 0.1)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.integers(1, 16), min_size=2, max_size=4),
    st.lists(st.sampled_from(["sigmoid", "relu", "identity"]), min_size=3, max_size=3),
    st.integers(0, 2**16),
)
def test_gradient_check_random_small_networks(dims, acts, seed):
    spec = [LayerSpec(dims[i], dims[i + 1], acts[i]) for i in range(len(dims) - 1)]
    rng = np.random.default_rng(seed)
    p = init_network(spec, seed)
    for layer in p.layers:
        layer.biases[:] = rng.normal(0, 0.3, layer.biases.size)
    x, y = rng.uniform(size=(4, dims[0])), rng.uniform(size=(4, dims[-1]))
    _, cache = forward(p, x)
    analytic = backward(p, cache, y).arrays()
    numeric = _numeric_gradients(p, x, y)
    for a, n in zip(analytic, numeric):
        # relu kinks make finite differences meaningless within h of a zero pre-activation
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-7)
        rel = np.abs(a - n) / denom
        if "relu" not in acts[: len(spec)]:
            assert np.all(rel < 1e-4)
        else:
            assert np.mean(rel < 1e-4) > 0.9


def test_gradients_vanish_at_target():
    p = init_network(chain(4, 3, 4), 0)
    x = np.random.default_rng(0).uniform(size=(3, 4))
    out, cache = forward(p, x)
    assert all(np.all(g == 0.0) for g in backward(p, cache, out).arrays())
