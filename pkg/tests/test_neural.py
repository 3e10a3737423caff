"""Network forward/backward behavior for all four architectures."""

import numpy as np
import pytest

from tbmcast.errors import DimensionError, NumericError, ValidationError
from tbmcast.neural import (
    HIDDEN_UNITS,
    MODEL_KINDS,
    FeedForwardNet,
    GRUNet,
    LSTMNet,
    ModelConfig,
    VanillaRNN,
    batch_gradients,
    build_model,
    sigmoid,
)

from oracles import (
    fd_gradients,
    gru_step_oracle,
    lstm_step_oracle,
    rnn_step_oracle,
)

RECURRENT = ("rnn", "lstm", "gru")


def small_config(**kw):
    base = dict(n_inputs=3, window=4, n_outputs=1, hidden=4)
    base.update(kw)
    return ModelConfig(**base)


def random_window(model, seed=0):
    rng = np.random.default_rng(seed)
    c = model.config
    return (
        rng.normal(size=(c.window, c.n_inputs)),
        rng.normal(size=c.n_outputs),
    )


def randomize(model, seed=1, scale=0.7):
    rng = np.random.default_rng(seed)
    for name in model.params:
        model.params[name] = rng.normal(size=model.params[name].shape) * scale
    return model


# ---------------------------------------------------------------------------
# construction


def test_config_rejects_nonpositive_dimensions():
    for field in ("n_inputs", "window", "n_outputs", "hidden"):
        with pytest.raises(ValidationError):
            small_config(**{field: 0})


def test_default_hidden_width_is_ten():
    model = build_model("fnn", ModelConfig(n_inputs=44, window=5))
    assert model.config.hidden == HIDDEN_UNITS == 10
    assert model.params["W1"].shape == (10, 220)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_init_weights_bounded_by_fan_in_and_biases_zero(kind):
    model = build_model(kind, small_config(hidden=6), seed=9)
    for name, tensor in model.params.items():
        if tensor.ndim == 2:
            bound = 1.0 / np.sqrt(tensor.shape[1])
            assert np.abs(tensor).max() <= bound
            assert tensor.std() > 0  # actually randomized
        else:
            np.testing.assert_array_equal(tensor, 0.0)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_seed_controls_initialization(kind):
    a = build_model(kind, small_config(), seed=3)
    b = build_model(kind, small_config(), seed=3)
    c = build_model(kind, small_config(), seed=4)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    assert any(not np.array_equal(a.params[n], c.params[n]) for n in a.params)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_disabling_biases_removes_the_tensors(kind):
    with_bias = build_model(kind, small_config(use_bias=True))
    without = build_model(kind, small_config(use_bias=False))
    assert all(t.ndim == 2 for t in without.params.values())
    assert without.n_parameters() < with_bias.n_parameters()
    window, target = random_window(without)
    _, grads = without.loss_and_grads(window, target)
    assert set(grads) == set(without.params)


def test_unknown_kind_is_rejected():
    with pytest.raises(ValidationError):
        build_model("transformer", small_config())


# ---------------------------------------------------------------------------
# feed-forward landmarks


def test_fnn_all_zero_weights_outputs_one_half():
    model = build_model("fnn", ModelConfig(n_inputs=5, window=3, n_outputs=2))
    for name in model.params:
        model.params[name][:] = 0.0
    out = model.forward(np.random.default_rng(0).normal(size=(3, 5)))
    np.testing.assert_array_equal(out, 0.5)


def test_fnn_unit_chain_value():
    # 1-1-1-1 all-ones chain, no biases, x = 0: sigmoid(sigmoid(sigmoid(0)))
    model = build_model(
        "fnn", ModelConfig(n_inputs=1, window=1, hidden=1, use_bias=False)
    )
    for name in model.params:
        model.params[name][:] = 1.0
    out = model.forward(np.zeros((1, 1)))
    assert out[0] == pytest.approx(0.6507776782, abs=1e-4)


def test_fnn_output_always_in_unit_interval():
    model = randomize(build_model("fnn", small_config(n_outputs=3)), scale=3.0)
    rng = np.random.default_rng(5)
    for _ in range(50):
        out = model.forward(rng.normal(size=(4, 3)) * 10)
        assert np.all(out > 0.0) and np.all(out < 1.0)


# ---------------------------------------------------------------------------
# recurrent cell landmarks


def test_rnn_identity_recurrence_saturates_to_tanh_one():
    model = build_model("rnn", ModelConfig(n_inputs=2, window=1, hidden=10))
    model.params["U"][:] = 0.0
    model.params["W"][:] = np.eye(10)
    h_prev = np.zeros(10)
    h_prev[0] = 1.0
    (h,) = model.step(np.zeros(2), (h_prev,))
    assert h[0] == pytest.approx(np.tanh(1.0), abs=1e-12)
    np.testing.assert_array_equal(h[1:], 0.0)


def test_lstm_zero_weights_halve_the_carry():
    model = build_model("lstm", ModelConfig(n_inputs=3, window=1, hidden=6))
    for name in model.params:
        model.params[name][:] = 0.0
    c_prev = np.linspace(-2.0, 2.0, 6)
    h, c = model.step(np.ones(3), (np.zeros(6), c_prev))
    np.testing.assert_array_equal(c, 0.5 * c_prev)  # f = i = 1/2, g = 0
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * c_prev), atol=1e-15)


def test_gru_zero_weights_halve_the_state():
    model = build_model("gru", ModelConfig(n_inputs=3, window=1, hidden=6))
    for name in model.params:
        model.params[name][:] = 0.0
    h_prev = np.linspace(-1.0, 1.0, 6)
    (h,) = model.step(np.ones(3), (h_prev,))
    np.testing.assert_array_equal(h, 0.5 * h_prev)  # z = 1/2, candidate = 0


@pytest.mark.parametrize("use_bias", [True, False])
def test_rnn_step_matches_scalar_oracle(use_bias):
    model = randomize(
        build_model("rnn", small_config(hidden=5, use_bias=use_bias)), seed=2
    )
    rng = np.random.default_rng(3)
    x, h_prev = rng.normal(size=3), rng.normal(size=5)
    (h,) = model.step(x, (h_prev,))
    expected = rnn_step_oracle(dict(model.params), x, h_prev, use_bias=use_bias)
    np.testing.assert_allclose(h, expected, atol=1e-12)


@pytest.mark.parametrize("use_bias", [True, False])
def test_lstm_step_matches_scalar_oracle(use_bias):
    model = randomize(
        build_model("lstm", small_config(hidden=5, use_bias=use_bias)), seed=4
    )
    rng = np.random.default_rng(5)
    x, h_prev, c_prev = rng.normal(size=3), rng.normal(size=5), rng.normal(size=5)
    h, c = model.step(x, (h_prev, c_prev))
    eh, ec = lstm_step_oracle(dict(model.params), x, h_prev, c_prev, use_bias)
    np.testing.assert_allclose(h, eh, atol=1e-12)
    np.testing.assert_allclose(c, ec, atol=1e-12)


@pytest.mark.parametrize("use_bias", [True, False])
def test_gru_step_matches_scalar_oracle(use_bias):
    model = randomize(
        build_model("gru", small_config(hidden=5, use_bias=use_bias)), seed=6
    )
    rng = np.random.default_rng(7)
    x, h_prev = rng.normal(size=3), rng.normal(size=5)
    (h,) = model.step(x, (h_prev,))
    expected = gru_step_oracle(dict(model.params), x, h_prev, use_bias)
    np.testing.assert_allclose(h, expected, atol=1e-12)


@pytest.mark.parametrize("kind", RECURRENT)
def test_forward_equals_manual_scan_plus_head(kind):
    model = randomize(build_model(kind, small_config(n_outputs=2)), seed=8)
    rng = np.random.default_rng(9)
    window = rng.normal(size=(4, 3))

    state = model.initial_state()
    for x in window:
        state = model.step(x, state)
    h = state[0]
    p = model.params
    z1 = np.tanh(p["V1"] @ h + p["c1"])
    z2 = np.tanh(p["V2"] @ z1 + p["c2"])
    manual = p["V3"] @ z2 + p["c3"]

    np.testing.assert_allclose(model.forward(window), manual, atol=1e-12)


@pytest.mark.parametrize("kind", RECURRENT)
def test_single_row_window_is_one_step_plus_head(kind):
    model = randomize(build_model(kind, small_config(window=1)), seed=10)
    rng = np.random.default_rng(11)
    window = rng.normal(size=(1, 3))
    out = model.forward(window)
    assert out.shape == (1,)
    state = model.step(window[0], model.initial_state())
    p = model.params
    z1 = np.tanh(p["V1"] @ state[0] + p["c1"])
    z2 = np.tanh(p["V2"] @ z1 + p["c2"])
    np.testing.assert_allclose(out, p["V3"] @ z2 + p["c3"], atol=1e-12)


def test_sigmoid_head_confines_recurrent_outputs():
    model = randomize(
        build_model("gru", small_config(sigmoid_head=True, n_outputs=3)), scale=4.0
    )
    rng = np.random.default_rng(12)
    for _ in range(20):
        out = model.forward(rng.normal(size=(4, 3)) * 5)
        assert np.all(out > 0.0) and np.all(out < 1.0)


@pytest.mark.parametrize("kind", RECURRENT)
def test_hidden_state_stays_in_tanh_range(kind):
    model = randomize(build_model(kind, small_config(hidden=8)), scale=5.0)
    rng = np.random.default_rng(13)
    state = model.initial_state()
    for _ in range(200):
        state = model.step(rng.normal(size=3) * 10, state)
        assert np.all(np.abs(state[0]) <= 1.0)


# ---------------------------------------------------------------------------
# loss and gradients


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_loss_is_the_unhalved_squared_error(kind):
    model = randomize(build_model(kind, small_config(n_outputs=2)), seed=14)
    window, target = random_window(model, seed=15)
    err = model.forward(window) - target
    assert model.loss(window, target) == pytest.approx(float(err @ err), rel=1e-15)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_zero_residual_means_zero_gradients(kind):
    model = randomize(build_model(kind, small_config()), seed=16)
    window, _ = random_window(model, seed=17)
    target = model.forward(window)  # perfect prediction by construction
    loss, grads = model.loss_and_grads(window, target)
    assert loss == 0.0
    for name, g in grads.items():
        np.testing.assert_array_equal(g, 0.0)


@pytest.mark.parametrize("kind", MODEL_KINDS)
@pytest.mark.parametrize("use_bias", [True, False])
def test_gradients_match_finite_differences(kind, use_bias):
    config = small_config(window=3, hidden=4, use_bias=use_bias)
    model = randomize(build_model(kind, config), seed=18, scale=0.6)
    window, target = random_window(model, seed=19)
    _, grads = model.loss_and_grads(window, target)
    fd = fd_gradients(model, window, target)
    for name in model.params:
        scale = max(np.abs(fd[name]).max(), 1e-8)
        worst = np.abs(grads[name] - fd[name]).max() / scale
        assert worst < 1e-4, f"{kind}/{name}: rel err {worst:.2e}"


def test_gradients_match_finite_differences_multi_output():
    model = randomize(
        build_model("lstm", small_config(n_outputs=3, hidden=4)), seed=20, scale=0.5
    )
    window, target = random_window(model, seed=21)
    _, grads = model.loss_and_grads(window, target)
    fd = fd_gradients(model, window, target)
    for name in model.params:
        scale = max(np.abs(fd[name]).max(), 1e-8)
        assert np.abs(grads[name] - fd[name]).max() / scale < 1e-4


def test_shape_validation_on_forward_and_loss():
    model = build_model("rnn", small_config())
    with pytest.raises(DimensionError):
        model.forward(np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        model.loss_and_grads(np.zeros((4, 3)), np.zeros(2))
    with pytest.raises(DimensionError):
        model.step(np.zeros(5), model.initial_state())


# ---------------------------------------------------------------------------
# batching


def test_batch_gradients_average_per_window_quantities():
    model = randomize(build_model("fnn", small_config()), seed=22)
    rng = np.random.default_rng(23)
    windows = rng.normal(size=(6, 4, 3))
    targets = rng.normal(size=(6, 1))
    mse, grads = batch_gradients(model, windows, targets)

    losses, singles = [], []
    for w, t in zip(windows, targets):
        loss, g = model.loss_and_grads(w, t)
        losses.append(loss)
        singles.append(g)
    assert mse == pytest.approx(np.mean(losses), rel=1e-12)
    for name in grads:
        expected = np.mean([g[name] for g in singles], axis=0)
        np.testing.assert_allclose(grads[name], expected, atol=1e-12)


def test_batch_gradients_invariant_under_duplication():
    model = randomize(build_model("gru", small_config()), seed=24)
    rng = np.random.default_rng(25)
    w = rng.normal(size=(4, 3))
    t = rng.normal(size=1)
    mse1, g1 = batch_gradients(model, [w], [t])
    mse3, g3 = batch_gradients(model, [w, w, w], [t, t, t])
    assert mse1 == pytest.approx(mse3, rel=1e-12)
    for name in g1:
        np.testing.assert_allclose(g1[name], g3[name], atol=1e-12)


def test_batch_gradients_flag_non_finite_inputs():
    model = randomize(build_model("fnn", small_config()), seed=26)
    w = np.zeros((4, 3))
    with pytest.raises(NumericError):
        batch_gradients(model, [w], [np.array([np.nan])])
    with pytest.raises(ValidationError):
        batch_gradients(model, np.zeros((0, 4, 3)), np.zeros((0, 1)))


def test_predict_batch_stacks_forward_passes():
    model = randomize(build_model("rnn", small_config(n_outputs=2)), seed=27)
    rng = np.random.default_rng(28)
    windows = rng.normal(size=(5, 4, 3))
    out = model.predict_batch(windows)
    assert out.shape == (5, 2)
    np.testing.assert_array_equal(out[2], model.forward(windows[2]))


def test_sigmoid_is_stable_at_extremes():
    assert sigmoid(np.array([800.0]))[0] == 1.0
    assert sigmoid(np.array([-800.0]))[0] == 0.0
    assert sigmoid(np.array([0.0]))[0] == 0.5
