import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermoq.regressors import (MlpModel, MlpQRegressor, TableQRegressor, TrainConfig,
                                TrainingDivergedError, TreesQRegressor, grad_check,
                                init_mlp, load_regressor, mlp_fit, mlp_forward,
                                mse_loss_and_grads, save_regressor, trees_fit,
                                trees_predict, zeros_mlp)


def loop_forward(model, x):
    """Per-neuron re-implementation used as an independent oracle."""
    h = list(x)
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        out = []
        for j in range(w.shape[1]):
            acc = b[j]
            for i in range(w.shape[0]):
                acc += h[i] * w[i, j]
            if layer < len(model.weights) - 1:
                acc = max(acc, 0.0)
            out.append(acc)
        h = out
    return np.array(h)


def test_zero_model_outputs_zero():
    m = zeros_mlp((4, 8, 3))
    np.testing.assert_array_equal(mlp_forward(m, np.arange(4.0)), np.zeros(3))


def test_identity_layer():
    m = MlpModel([np.eye(3)], [np.zeros(3)])
    x = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(mlp_forward(m, x), x)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        mlp_forward(zeros_mlp((4, 2)), np.zeros(3))


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    m = init_mlp((5, 7, 6, 2), rng)
    for m_b in m.biases:
        m_b[:] = rng.normal(size=m_b.shape)
    x = rng.normal(size=(10, 5))
    batch = mlp_forward(m, x)
    for row, out in zip(x, batch):
        np.testing.assert_allclose(out, loop_forward(m, row), atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_grad_check_random_models(seed):
    rng = np.random.default_rng(seed)
    m = init_mlp((4, 9, 7, 2), rng)
    for b in m.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(12, 4))
    y = rng.normal(size=(12, 2))
    mask = (rng.random((12, 2)) < 0.6).astype(float)
    assert grad_check(m, x, y) < 1e-4
    assert grad_check(m, x, y, mask) < 1e-4


def test_stationary_point_has_zero_gradient():
    rng = np.random.default_rng(0)
    m = init_mlp((3, 5, 1), rng)
    x = rng.normal(size=(6, 3))
    y = mlp_forward(m, x)
    _, gw, gb = mse_loss_and_grads(m, x, y)
    assert math.sqrt(sum(float((g ** 2).sum()) for g in gw + gb)) < 1e-8


def test_single_parameter_closed_form():
    w, x, y, h = 0.7, 1.3, 2.0, 1e-5
    m = MlpModel([np.array([[w]])], [np.zeros(1)])
    _, gw, _ = mse_loss_and_grads(m, np.array([[x]]), np.array([[y]]))
    f = lambda w_: (w_ * x - y) ** 2
    assert gw[0][0, 0] == pytest.approx((f(w + h) - f(w - h)) / (2 * h), abs=1e-6)


def test_fit_recovers_linear_function():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(400, 3))
    y = x @ np.array([1.5, -2.0, 0.5]) + 0.3
    m = init_mlp((3, 16, 1), rng)
    _, hist = mlp_fit(m, x, y, TrainConfig(learning_rate=0.01, epochs=200, patience=None,
                                           batch_size=64))
    mse = float(np.mean((mlp_forward(m, x)[:, 0] - y) ** 2))
    assert mse < 1e-3 * y.var()
    assert len(hist) == 200


def test_zero_epochs_leaves_model_unchanged():
    rng = np.random.default_rng(2)
    m = init_mlp((2, 4, 1), rng)
    before = m.copy()
    mlp_fit(m, rng.normal(size=(5, 2)), rng.normal(size=5), TrainConfig(epochs=0))
    for a, b in zip(before.params(), m.params()):
        np.testing.assert_array_equal(a, b)


def test_constant_targets_are_learned():
    rng = np.random.default_rng(3)
    m = init_mlp((2, 8, 1), rng)
    x = rng.normal(size=(50, 2))
    mlp_fit(m, x, np.full(50, 4.2), TrainConfig(learning_rate=0.05, epochs=1500, patience=None))
    np.testing.assert_allclose(mlp_forward(m, x)[:, 0], 4.2, atol=1e-2)


def test_fit_is_deterministic_and_float32_option_works():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(300, 3)), rng.normal(size=300)
    outs = []
    for dtype in ("float64", "float64", "float32"):
        m = init_mlp((3, 8, 1), np.random.default_rng(9))
        mlp_fit(m, x, y, TrainConfig(epochs=20, batch_size=64, seed=5, dtype=dtype))
        assert all(p.dtype == np.float64 for p in m.params())
        outs.append(mlp_forward(m, x))
    np.testing.assert_array_equal(outs[0], outs[1])
    np.testing.assert_allclose(outs[0], outs[2], atol=1e-3)


def test_divergence_is_reported():
    m = init_mlp((1, 4, 1), np.random.default_rng(0))
    with pytest.raises(TrainingDivergedError):
        mlp_fit(m, np.array([[1e200], [2e200]]), np.array([1e200, 0.0]),
                TrainConfig(learning_rate=1.0, epochs=5))
    with pytest.raises(ValueError):
        mlp_fit(m, np.zeros((1, 1)), np.array([np.nan]), TrainConfig())


def test_trees_constant_and_single_sample():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 3))
    m = trees_fit(x, np.full(40, 2.5), n_estimators=10)
    np.testing.assert_array_equal(trees_predict(m, rng.normal(size=(7, 3))), 2.5)
    m = trees_fit(x[:1], np.array([7.0]), n_estimators=5)
    np.testing.assert_array_equal(trees_predict(m, rng.normal(size=(4, 3))), 7.0)
    with pytest.raises(ValueError):
        trees_fit(np.empty((0, 2)), np.empty(0))
    with pytest.raises(ValueError):
        trees_fit(x, np.zeros(40), min_samples_split=1)


def test_trees_fit_step_function():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, size=(300, 1))
    y = np.where(x[:, 0] > 0.2, 3.0, -1.0)
    m = trees_fit(x, y, n_estimators=100, seed=4)
    assert np.mean((trees_predict(m, x) - y) ** 2) < y.var() / 10


@given(seed=st.integers(0, 10_000), n=st.integers(1, 60))
@settings(max_examples=25, deadline=None)
def test_tree_predictions_within_target_range(seed, n):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(n, 3)), rng.normal(size=n)
    m = trees_fit(x, y, n_estimators=7, seed=seed)
    pred = trees_predict(m, rng.normal(scale=3, size=(30, 3)))
    assert pred.min() >= y.min() - 1e-12 and pred.max() <= y.max() + 1e-12


def test_trees_deterministic_given_seed():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(80, 4)), rng.normal(size=80)
    a = trees_predict(trees_fit(x, y, 20, seed=3), x)
    b = trees_predict(trees_fit(x, y, 20, seed=3), x)
    c = trees_predict(trees_fit(x, y, 20, seed=4), x)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("reg", [
    MlpQRegressor((8,), TrainConfig(epochs=30)),
    TreesQRegressor(n_estimators=5, seed=1),
    TableQRegressor(),
])
def test_q_regressor_round_trip(reg, tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 3))
    actions = rng.integers(0, 2, 40)
    reg.fit(x, actions, rng.normal(size=40))
    save_regressor(reg, tmp_path / "r.json")
    back = load_regressor(tmp_path / "r.json")
    np.testing.assert_array_equal(back.predict(x), reg.predict(x))


def test_mlp_q_regressor_learns_per_action_targets():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(400, 2))
    actions = rng.integers(0, 2, 400)
    targets = np.where(actions == 1, x[:, 0] + 5.0, -x[:, 1])
    reg = MlpQRegressor((16, 16), TrainConfig(learning_rate=0.01, epochs=500)).fit(
        x, actions, targets)
    pred = reg.predict(x)[np.arange(400), actions]
    assert np.mean((pred - targets) ** 2) < 0.05


def test_table_regressor_is_exact_and_unseen_is_inf():
    reg = TableQRegressor().fit(np.array([[0.0], [1.0], [1.0]]), [0, 1, 1], [3.0, 4.0, 6.0])
    np.testing.assert_array_equal(reg.predict([[0.0], [1.0]]),
                                  [[3.0, np.inf], [np.inf, 5.0]])
