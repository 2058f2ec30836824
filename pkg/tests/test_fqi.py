import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermoq.fqi import (FqiDataset, QEnsemble, build_targets,
                         epsilon_greedy_action, fqi_backward, fqi_fit, greedy_action,
                         history_dataset, load_ensemble, random_tabular_mdp,
                         regressor_factory, save_ensemble, value_iteration)
from thermoq.mdp import ForecastBundle, make_observation
from thermoq.regressors import TableQRegressor, TrainConfig


def table_factory(k):
    return TableQRegressor()


def fitted_table(models, n_states):
    x = np.arange(n_states, dtype=float)[:, None]
    return np.stack([m.predict(x) for m in models])


@given(seed=st.integers(0, 10_000), n_states=st.integers(1, 8), n_slots=st.integers(1, 12))
@settings(max_examples=40, deadline=None)
def test_exact_regressor_reproduces_backward_induction(seed, n_states, n_slots):
    mdp = random_tabular_mdp(n_states, n_slots, np.random.default_rng(seed))
    models = fqi_backward(mdp.dataset(), mdp.forecasts(), table_factory)
    np.testing.assert_allclose(fitted_table(models, n_states), value_iteration(mdp), atol=1e-9)


def test_zero_prices_give_zero_q():
    mdp = random_tabular_mdp(5, 6, np.random.default_rng(0))
    mdp.prices[:] = 0.0
    models = fqi_backward(mdp.dataset(), mdp.forecasts(), table_factory)
    np.testing.assert_array_equal(fitted_table(models, 5), 0.0)


def test_one_day_horizon_by_hand():
    # states 0/1, action 1 moves to state 1 and draws 10 kW, action 0 moves to 0 for free
    data = FqiDataset([[0.0], [0.0], [1.0]], [0, 1, 1], [0.0, 10.0, 10.0],
                      [[0.0], [1.0], [1.0]])
    fc = ForecastBundle([50.0, 100.0], [0.0, 0.0])
    models = fqi_backward(data, fc, table_factory)
    # slot 2 (last): cost only, 100 €/MWh * 10 kW * 1 h
    np.testing.assert_allclose(models[1].predict([[0.0], [1.0]]), [[0.0, 1.0], [np.inf, 1.0]])
    # slot 1: 0.5 now (action 1) plus the best slot-2 value of the next state
    np.testing.assert_allclose(models[0].predict([[0.0], [1.0]]),
                               [[0.0, 0.5 + 1.0], [np.inf, 0.5 + 1.0]])
    ens = QEnsemble("tab", models, horizon=1)
    ens.features = lambda obs: np.array([obs.t_room])
    assert greedy_action(ens, make_observation([0.0], 0.0, 0), 1) == 0


def test_targets_use_forecast_of_the_next_slot():
    data = FqiDataset([[1.0, 0.0]], [1], [2.0], [[1.0, 99.0]], exo_column=1)
    fc = ForecastBundle([10.0, 20.0, 30.0], [5.0, 6.0, 7.0])

    class Probe:
        def predict(self, x):
            self.seen = x.copy()
            return np.array([[3.0, 4.0]])
    probe = Probe()
    t = build_targets(data, fc, 2, probe)
    assert probe.seen[0, 1] == 7.0
    np.testing.assert_allclose(t, [20.0 * 2.0 / 1000 + 3.0])
    np.testing.assert_allclose(build_targets(data, fc, 3, probe), [0.06])
    with pytest.raises(IndexError):
        build_targets(data, fc, 0, None)


class Constant:
    def __init__(self, q):
        self.q = np.asarray(q, dtype=float)

    def predict(self, x):
        return np.tile(self.q, (len(np.atleast_2d(x)), 1))


class Exploding:
    def predict(self, x):
        raise AssertionError("second-day slot consulted by the policy")


def test_policy_only_uses_first_day_slots():
    ens = QEnsemble("t", [Constant([1.0, 0.0])] * 3 + [Exploding()] * 3, horizon=3)
    obs = make_observation([20.0] * 5, 5.0, 0)
    for slot in (1, 2, 3):
        assert greedy_action(ens, obs, slot) == 1
    with pytest.raises(ValueError):
        ens.q_values(obs, 4)
    with pytest.raises(ValueError):
        ens.q_values(obs, 0)


def test_ties_go_to_off():
    ens = QEnsemble("t", [Constant([2.0, 2.0])] * 2, horizon=1)
    assert greedy_action(ens, make_observation([20.0] * 5, 5.0, 0), 1) == 0


def test_epsilon_greedy():
    ens = QEnsemble("t", [Constant([1.0, 0.0])] * 2, horizon=1)
    obs = make_observation([20.0] * 5, 5.0, 0)
    rng = np.random.default_rng(0)
    assert all(epsilon_greedy_action(ens, obs, 1, 0.0, rng) == 1 for _ in range(50))
    draws = [epsilon_greedy_action(ens, obs, 1, 1.0, rng) for _ in range(4000)]
    assert abs(np.mean(draws) - 0.5) < 0.03
    draws = [epsilon_greedy_action(None, obs, 1, 0.0, rng) for _ in range(4000)]
    assert abs(np.mean(draws) - 0.5) < 0.03


def test_window_must_cover_two_days(small_batch):
    batch, _, sc = small_batch
    with pytest.raises(ValueError):
        fqi_fit(batch, sc.forecast(0, 12), table_factory, horizon=24)


@pytest.mark.parametrize("kind", ["fqi-nn", "fqi-et"])
def test_fit_and_round_trip(small_batch, kind, tmp_path):
    batch, _, sc = small_batch
    factory = regressor_factory(kind, seed=1, nn_config=TrainConfig(epochs=5),
                                n_estimators=5)
    ens = fqi_fit(batch, sc.forecast(1, 24), factory, kind=kind)
    assert len(ens.models) == 48
    save_ensemble(ens, tmp_path / "q.json")
    back = load_ensemble(tmp_path / "q.json")
    obs = batch.transitions[30].obs
    for slot in (1, 12, 24):
        np.testing.assert_array_equal(back.q_values(obs, slot), ens.q_values(obs, slot))


def test_history_dataset_shapes(small_batch):
    batch, _, _ = small_batch
    d = history_dataset(batch)
    assert d.x.shape == (96, 6) and d.exo_column == 5
    np.testing.assert_array_equal(d.x[1:, :5], d.next_x[:-1, :5])
