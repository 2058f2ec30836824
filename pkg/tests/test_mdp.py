import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermoq.mdp import (AgentObservation, BatchFormatError, ExperienceBatch,
                         ForecastBundle, Transition, inject_forecast, load_batch,
                         make_observation, save_batch, step_cost)

finite = st.floats(-30, 40, allow_nan=False)


def random_batch(n, seed=0, depth=4):
    rng = np.random.default_rng(seed)
    batch = ExperienceBatch(seed=seed, days=n // 24, depth=depth)
    for i in range(n):
        hist = tuple(rng.uniform(17, 23, depth + 1))
        obs = AgentObservation(hist, rng.uniform(-5, 15), i % 24)
        nxt = AgentObservation(hist[1:] + (rng.uniform(17, 23),), rng.uniform(-5, 15), i % 24 + 1)
        batch.append(Transition(obs, int(rng.integers(2)), nxt, float(rng.uniform(0, 10))))
    return batch


def test_observation_padding_and_window():
    obs = make_observation([20, 20, 20, 20, 20], 5.0, 0)
    assert obs.t_room_history == (20.0,) * 5
    obs = make_observation([19.0], 5.0, 3)
    assert obs.t_room_history == (19.0,) * 5
    obs = make_observation([1, 2, 3, 4, 5, 6, 7], 0.0, 1)
    assert obs.t_room_history == (3.0, 4.0, 5.0, 6.0, 7.0)
    assert obs.t_room == 7.0
    with pytest.raises(ValueError):
        make_observation([], 5.0, 0)
    with pytest.raises(ValueError):
        make_observation([20.0], 5.0, 48)


def test_transition_validation():
    obs = make_observation([20.0], 5.0, 0)
    with pytest.raises(ValueError):
        Transition(obs, 2, obs, 1.0)
    with pytest.raises(ValueError):
        Transition(obs, 1, obs, -1.0)
    with pytest.raises(ValueError):
        Transition(obs, 1, obs, float("nan"))


def test_step_cost_examples():
    assert step_cost(100.0, 10.0, 1.0) == pytest.approx(1.0)
    assert step_cost(0.0, 10.0) == 0.0
    assert step_cost(50.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        step_cost(50.0, 1.0, 0.0)


@given(p=finite, u=st.floats(0, 10), dt=st.floats(0.01, 2), k=st.floats(0.1, 5))
def test_step_cost_is_linear(p, u, dt, k):
    base = step_cost(p, u, dt)
    assert step_cost(k * p, u, dt) == pytest.approx(k * base, abs=1e-12)
    assert step_cost(p, k * u, dt) == pytest.approx(k * base, abs=1e-12)
    assert step_cost(p, u, k * dt) == pytest.approx(k * base, abs=1e-12)


def test_forecast_injection():
    fc = ForecastBundle(np.arange(48.0), np.linspace(-5, 5, 48))
    obs = make_observation([19, 20, 21], 2.0, 7)
    new = inject_forecast(obs, fc, 8)
    assert new.t_room_history == obs.t_room_history
    assert new.t_ambient == fc.t_ambient[8] and new.timeslot == 8
    same = inject_forecast(new, fc, 8)
    assert same == new
    with pytest.raises(IndexError):
        inject_forecast(obs, fc, 48)
    with pytest.raises(ValueError):
        ForecastBundle(np.zeros(48), np.zeros(47))


@given(hist=st.lists(st.floats(10, 30), min_size=5, max_size=5), slot=st.integers(0, 47))
def test_injection_never_touches_history(hist, slot):
    fc = ForecastBundle(np.ones(48), np.linspace(-5, 5, 48))
    obs = AgentObservation(tuple(hist), 0.0, 0)
    assert inject_forecast(obs, fc, slot).t_room_history == obs.t_room_history


def test_batch_round_trip(tmp_path):
    batch = random_batch(720, seed=3)
    save_batch(batch, tmp_path / "b.txt")
    loaded = load_batch(tmp_path / "b.txt")
    assert loaded == batch
    assert loaded.days == 30 and loaded.seed == 3


def test_empty_batch_round_trip(tmp_path):
    save_batch(ExperienceBatch(), tmp_path / "e.txt")
    assert load_batch(tmp_path / "e.txt") == ExperienceBatch()


def test_batch_format_errors(tmp_path):
    path = tmp_path / "b.txt"
    save_batch(random_batch(10), path)
    lines = path.read_text().splitlines()

    (tmp_path / "trunc.txt").write_text("\n".join(lines[:6]) + "\n")
    with pytest.raises(BatchFormatError, match="last good line 6"):
        load_batch(tmp_path / "trunc.txt")

    (tmp_path / "cut.txt").write_text("\n".join(lines[:4] + [lines[4][:20]]) + "\n")
    with pytest.raises(BatchFormatError, match="last good line 4"):
        load_batch(tmp_path / "cut.txt")

    (tmp_path / "ver.txt").write_text("\n".join([lines[0].replace(" v1 ", " v9 ")] + lines[1:]))
    with pytest.raises(BatchFormatError, match="version"):
        load_batch(tmp_path / "ver.txt")

    (tmp_path / "junk.txt").write_text("hello\n")
    with pytest.raises(BatchFormatError):
        load_batch(tmp_path / "junk.txt")


def test_snapshot_is_prefix():
    batch = random_batch(72)
    snap = batch.snapshot(2)
    assert len(snap) == 48 and snap.days == 2
    assert snap.transitions == batch.transitions[:48]
    batch.append(batch.transitions[0])
    assert len(snap) == 48


def test_arrays_view():
    batch = random_batch(5)
    a = batch.arrays()
    assert a["hist"].shape == (5, 5)
    assert a["next_hist"].shape == (5, 5)
    np.testing.assert_array_equal(a["hist"][:, 1:], a["next_hist"][:, :-1])
    assert list(a["slot"] + 1) == list(a["next_slot"])
