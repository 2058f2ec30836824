"""
Fitted Q-iteration over a two-day window of time-indexed Q-functions.

One regressor per hour slot k = 1..2T is fitted backward from k = 2T, each
bootstrapping from the already fitted slot k + 1 (slot 2T + 1 is zero).
Costs are minimized; the greedy policy only ever consults slots 1..T.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .encoder import (AnnotatedBatch, EncoderBundle, EncoderConfig, bundle_from_dict,
                      bundle_to_dict, encode, freeze_and_annotate, train_encoder)
from .mdp import HORIZON, AgentObservation, ExperienceBatch, ForecastBundle
from .regressors import (MlpQRegressor, TrainConfig, TreesQRegressor,
                         regressor_from_dict)

AGENT_KINDS = ("physq", "physq-wrong", "fqi-nn", "fqi-et")


@dataclass
class FqiDataset:
    """Feature view of a batch.

    ``exo_column`` is the column of ``next_x`` overwritten by the outside
    temperature forecast of the target slot (None when nothing is exogenous).
    """

    x: np.ndarray
    actions: np.ndarray
    u_phys: np.ndarray
    next_x: np.ndarray
    exo_column: int | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.next_x = np.atleast_2d(np.asarray(self.next_x, dtype=float))
        self.actions = np.asarray(self.actions, dtype=int)
        self.u_phys = np.asarray(self.u_phys, dtype=float)
        if not (len(self.x) == len(self.next_x) == len(self.actions) == len(self.u_phys)):
            raise ValueError("dataset columns have different lengths")

    def __len__(self):
        return len(self.x)

    def next_features(self, forecasts: ForecastBundle | None, target_index: int) -> np.ndarray:
        """``next_x`` with the exogenous column taken from forecast slot ``target_index`` (0-based)."""
        if self.exo_column is None or forecasts is None:
            return self.next_x
        out = self.next_x.copy()
        out[:, self.exo_column] = forecasts.t_ambient[target_index]
        return out


def history_dataset(batch: ExperienceBatch) -> FqiDataset:
    """Room-temperature history plus outside temperature."""
    a = batch.arrays()
    x = np.column_stack([a["hist"], a["t_amb"]])
    nx = np.column_stack([a["next_hist"], a["next_t_amb"]])
    return FqiDataset(x, a["action"], a["u_phys"], nx, exo_column=x.shape[1] - 1)


def hidden_state_dataset(annotated: AnnotatedBatch) -> FqiDataset:
    """Current room temperature, hidden-state estimate and outside temperature."""
    a = annotated.batch.arrays()
    x = np.column_stack([a["hist"][:, -1], annotated.z, a["t_amb"]])
    nx = np.column_stack([a["next_hist"][:, -1], annotated.z_next, a["next_t_amb"]])
    return FqiDataset(x, a["action"], a["u_phys"], nx, exo_column=2)


def history_features(obs: AgentObservation) -> np.ndarray:
    return np.array([*obs.t_room_history, obs.t_ambient])


def build_targets(data: FqiDataset, forecasts: ForecastBundle, k: int, next_model,
                  dt_hours: float = 1.0) -> np.ndarray:
    """Regression targets for slot ``k`` (1-based).

    target = price_k * u_phys * dt / 1000 + min_u Q_{k+1}(x_next with forecast, u),
    with Q_{2T+1} = 0 passed as ``next_model=None``.
    """
    if not 1 <= k <= forecasts.slots:
        raise IndexError(f"slot {k} outside [1, {forecasts.slots}]")
    cost = forecasts.prices[k - 1] * data.u_phys * dt_hours / 1000.0
    if next_model is None or k == forecasts.slots:
        return cost
    q_next = next_model.predict(data.next_features(forecasts, k))
    return cost + q_next.min(axis=1)


@dataclass
class QEnsemble:
    """The 2T fitted Q-functions plus whatever maps observations to features."""

    kind: str
    models: list
    horizon: int = HORIZON
    encoder: EncoderBundle | None = None
    losses: list = field(default_factory=list, repr=False)

    def features(self, obs: AgentObservation) -> np.ndarray:
        if self.encoder is not None:
            return np.array([obs.t_room, encode(self.encoder, obs), obs.t_ambient])
        return history_features(obs)

    def q_values(self, obs: AgentObservation, slot: int) -> np.ndarray:
        """Q-values of both actions at policy slot ``slot`` (1..T)."""
        if not 1 <= slot <= self.horizon:
            raise ValueError(f"policy slot must be in [1, {self.horizon}], got {slot}")
        return np.asarray(self.models[slot - 1].predict(self.features(obs)[None, :]))[0]


def _argmin_action(q) -> int:
    """Lower-cost action; ties go to 0 (off)."""
    return int(q[1] < q[0])


def greedy_action(ensemble: QEnsemble, obs: AgentObservation, slot: int) -> int:
    return _argmin_action(ensemble.q_values(obs, slot))


def epsilon_greedy_action(ensemble: QEnsemble | None, obs: AgentObservation, slot: int,
                          epsilon: float, rng: np.random.Generator) -> int:
    """Random action with probability ``epsilon`` (always, without an ensemble)."""
    if ensemble is None or rng.random() < epsilon:
        return int(rng.integers(2))
    return greedy_action(ensemble, obs, slot)


def fqi_backward(data: FqiDataset, forecasts: ForecastBundle,
                 factory: Callable[[int], object], dt_hours: float = 1.0):
    """Fit slots 2T..1 backward; returns the models ordered by slot (index 0 = slot 1)."""
    if len(data) == 0:
        raise ValueError("cannot fit on an empty batch")
    n_slots = forecasts.slots
    models = [None] * n_slots
    next_model = None
    for k in range(n_slots, 0, -1):
        targets = build_targets(data, forecasts, k, next_model, dt_hours)
        model = factory(k).fit(data.x, data.actions, targets)
        models[k - 1] = model
        next_model = model
    return models


def _check_window(forecasts: ForecastBundle, horizon: int):
    if forecasts.slots != 2 * horizon:
        raise ValueError(f"forecast window has {forecasts.slots} slots, expected {2 * horizon}")


def fqi_fit(batch, forecasts: ForecastBundle, factory, horizon: int = HORIZON,
            kind: str = "fqi-nn") -> QEnsemble:
    """Standard agent: features are the raw room history and outside temperature."""
    _check_window(forecasts, horizon)
    data = batch if isinstance(batch, FqiDataset) else history_dataset(batch)
    models = fqi_backward(data, forecasts, factory)
    return QEnsemble(kind, models, horizon)


def physq_fit(batch, forecasts: ForecastBundle, factory, horizon: int = HORIZON,
              selector: str = "correct", encoder: EncoderBundle | None = None,
              encoder_config: EncoderConfig | None = None) -> QEnsemble:
    """Hidden-state agent: train (or reuse) the encoder, freeze it, annotate, then FQI."""
    _check_window(forecasts, horizon)
    if encoder is None:
        encoder, _ = train_encoder(batch, encoder_config, selector)
    annotated = freeze_and_annotate(encoder, batch)
    models = fqi_backward(hidden_state_dataset(annotated), forecasts, factory)
    kind = "physq" if encoder.selector == "correct" else "physq-wrong"
    return QEnsemble(kind, models, horizon, encoder)


def regressor_factory(kind: str, seed: int = 0, nn_config: TrainConfig | None = None,
                      n_estimators: int = 100):
    """Fresh per-slot regressor constructor for an agent kind."""
    if kind == "fqi-et":
        return lambda k: TreesQRegressor(n_estimators, 3, 1, seed=seed * 1000 + k)
    hidden = (48, 48) if kind == "fqi-nn" else (32, 32)
    base = nn_config or TrainConfig(learning_rate=0.01 if kind == "fqi-nn" else 0.001,
                                    dtype="float32")

    def make(k):
        cfg = TrainConfig(**{**vars(base), "seed": seed * 1000 + k})
        return MlpQRegressor(hidden, cfg)
    return make


def ensemble_to_dict(ensemble: QEnsemble) -> dict:
    return {"kind": ensemble.kind, "horizon": ensemble.horizon,
            "encoder": None if ensemble.encoder is None else bundle_to_dict(ensemble.encoder),
            "models": [m.to_dict() for m in ensemble.models]}


def ensemble_from_dict(data: dict) -> QEnsemble:
    enc = data.get("encoder")
    return QEnsemble(data["kind"], [regressor_from_dict(m) for m in data["models"]],
                     data["horizon"], None if enc is None else bundle_from_dict(enc))


def save_ensemble(ensemble: QEnsemble, path) -> None:
    Path(path).write_text(json.dumps(ensemble_to_dict(ensemble)))


def load_ensemble(path) -> QEnsemble:
    return ensemble_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# small tabular MDPs with the same cost structure, for exact cross-checks

@dataclass
class TabularMdp:
    """Deterministic finite MDP: next_state[s, a], power[s, a], prices per slot."""

    next_state: np.ndarray
    power: np.ndarray
    prices: np.ndarray

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    def forecasts(self) -> ForecastBundle:
        return ForecastBundle(self.prices, np.zeros_like(self.prices))

    def dataset(self) -> FqiDataset:
        """Every (state, action) pair exactly once."""
        s, a = np.meshgrid(np.arange(self.n_states), [0, 1], indexing="ij")
        s, a = s.ravel(), a.ravel()
        return FqiDataset(s[:, None].astype(float), a, self.power[s, a],
                          self.next_state[s, a][:, None].astype(float))


def random_tabular_mdp(n_states: int, n_slots: int, rng: np.random.Generator) -> TabularMdp:
    return TabularMdp(rng.integers(n_states, size=(n_states, 2)),
                      rng.uniform(0.0, 10.0, size=(n_states, 2)),
                      rng.uniform(-20.0, 120.0, size=n_slots))


def value_iteration(mdp: TabularMdp, dt_hours: float = 1.0) -> np.ndarray:
    """Finite-horizon Q-table, shape (slots, states, 2), by backward induction."""
    n_slots = len(mdp.prices)
    q = np.zeros((n_slots, mdp.n_states, 2))
    v_next = np.zeros(mdp.n_states)
    for k in range(n_slots - 1, -1, -1):
        q[k] = mdp.prices[k] * mdp.power * dt_hours / 1000.0 + v_next[mdp.next_state]
        v_next = q[k].min(axis=1)
    return q
