"""
Physics-informed hidden-state encoder.

Three parts are trained jointly on a batch of transitions:

- encoder: observation -> scalar hidden-state estimate z (thermal-mass temperature)
- dynamics: (observation, z, delivered power) -> next room temperature
- physics coefficients omega = (a11, a12, a21, a22, b1, c11) of the first-order model

    T_r[i+1] = a11 T_r[i] + a12 z[i] + b1 u_phys[i] + c11 T_a[i]
    z[i+1]   = a21 T_r[i] + a22 z[i]

Loss = L_pred + mu * L_phys, both mean squared. The "wrong" prior replaces the
residual by z[i] - ceil(T_r[i]).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mdp import AgentObservation, ExperienceBatch
from .regressors import (Adam, MlpModel, TrainingDivergedError, _early_stop, backward,
                         forward_cached, init_mlp, load_mlp, mlp_forward,
                         numeric_gradients, relative_error, save_mlp, zeros_mlp)

SELECTORS = ("correct", "wrong")
OMEGA_NAMES = ("a11", "a12", "a21", "a22", "b1", "c11")
OMEGA_INIT = (0.9, 0.05, 0.05, 0.95, 0.1, 0.05)


def observation_features(hist, t_amb, slot) -> np.ndarray:
    """Raw encoder inputs: room history, outside temperature, hour-of-day on the circle."""
    hist = np.atleast_2d(np.asarray(hist, dtype=float))
    t_amb = np.atleast_1d(np.asarray(t_amb, dtype=float))
    angle = 2 * np.pi * (np.atleast_1d(slot) % 24) / 24.0
    return np.column_stack([hist, t_amb, np.sin(angle), np.cos(angle)])


@dataclass
class EncoderConfig:
    learning_rate: float = 0.001
    batch_size: int = 2048
    epochs: int = 3000
    patience: int | None = 200
    min_delta: float = 1e-4
    mu: float = 1.0
    seed: int = 0
    encoder_hidden: tuple = (32, 32)
    dynamics_hidden: tuple = (128,)
    omega_init: tuple = OMEGA_INIT


@dataclass
class EncoderBundle:
    encoder: MlpModel
    dynamics: MlpModel
    omega: np.ndarray
    selector: str = "correct"
    mu: float = 1.0
    x_mean: np.ndarray = None
    x_std: np.ndarray = None
    t_mean: float = 0.0
    t_std: float = 1.0
    u_scale: float = 1.0

    def __post_init__(self):
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        self.omega = np.asarray(self.omega, dtype=float)
        n_in = self.encoder.sizes[0]
        if self.x_mean is None:
            self.x_mean = np.zeros(n_in)
        if self.x_std is None:
            self.x_std = np.ones(n_in)

    def params(self) -> list:
        return [*self.encoder.params(), *self.dynamics.params(), self.omega]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self.params():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()

    def omega_dict(self) -> dict:
        return dict(zip(OMEGA_NAMES, map(float, self.omega)))


def new_bundle(n_inputs=8, selector="correct", config: EncoderConfig | None = None,
               zero=False) -> EncoderBundle:
    """Fresh bundle; ``zero=True`` gives all-zero network weights."""
    config = config or EncoderConfig()
    enc_sizes = (n_inputs, *config.encoder_hidden, 1)
    dyn_sizes = (n_inputs + 2, *config.dynamics_hidden, 1)
    if zero:
        enc, dyn = zeros_mlp(enc_sizes), zeros_mlp(dyn_sizes)
    else:
        rng = np.random.default_rng(config.seed)
        enc, dyn = init_mlp(enc_sizes, rng), init_mlp(dyn_sizes, rng)
    return EncoderBundle(enc, dyn, np.array(config.omega_init, dtype=float),
                         selector, config.mu)


def _scaled(bundle: EncoderBundle, feats):
    return (feats - bundle.x_mean) / bundle.x_std


def encode_features(bundle: EncoderBundle, feats) -> np.ndarray:
    return mlp_forward(bundle.encoder, _scaled(bundle, np.atleast_2d(feats)))[:, 0]


def encode(bundle: EncoderBundle, obs: AgentObservation) -> float:
    """Hidden-state estimate (°C) for one observation."""
    feats = observation_features(obs.t_room_history, obs.t_ambient, obs.timeslot)
    if feats.shape[1] != bundle.encoder.sizes[0]:
        raise ValueError(f"observation gives {feats.shape[1]} features, "
                         f"encoder expects {bundle.encoder.sizes[0]}")
    return float(encode_features(bundle, feats)[0])


def physics_residual(t_room, u_phys, z, z_next, t_ambient, t_room_next, omega,
                     selector="correct") -> np.ndarray:
    """Residual of the physics prior, one row per sample.

    correct: columns (T_r[i+1] - model T_r[i+1], z[i+1] - model z[i+1]);
    wrong: one column z[i] - ceil(T_r[i]).
    """
    t_room, u_phys, z = map(np.asarray, (t_room, u_phys, z))
    if selector == "wrong":
        return np.atleast_1d(z - np.ceil(t_room))[:, None]
    if selector != "correct":
        raise ValueError(f"unknown selector {selector!r}")
    a11, a12, a21, a22, b1, c11 = omega
    r_room = np.asarray(t_room_next) - (a11 * t_room + a12 * z + b1 * u_phys
                                        + c11 * np.asarray(t_ambient))
    r_mass = np.asarray(z_next) - (a21 * t_room + a22 * z)
    return np.column_stack([np.atleast_1d(r_room), np.atleast_1d(r_mass)])


@dataclass
class EncoderData:
    feats: np.ndarray
    next_feats: np.ndarray
    t_room: np.ndarray
    t_room_next: np.ndarray
    t_amb: np.ndarray
    u_phys: np.ndarray

    @classmethod
    def from_batch(cls, batch: ExperienceBatch) -> "EncoderData":
        a = batch.arrays()
        return cls(observation_features(a["hist"], a["t_amb"], a["slot"]),
                   observation_features(a["next_hist"], a["next_t_amb"], a["next_slot"]),
                   a["hist"][:, -1], a["next_hist"][:, -1], a["t_amb"], a["u_phys"])

    def __len__(self):
        return len(self.t_room)

    def subset(self, idx) -> "EncoderData":
        return EncoderData(*(getattr(self, f)[idx] for f in
                             ("feats", "next_feats", "t_room", "t_room_next", "t_amb", "u_phys")))


def loss_and_grads(bundle: EncoderBundle, data: EncoderData, with_grads=True):
    """Total loss, its two parts, and gradients aligned with ``bundle.params()``."""
    n = len(data)
    xs = _scaled(bundle, data.feats)
    xs_next = _scaled(bundle, data.next_feats)
    acts = forward_cached(bundle.encoder, xs)
    acts_next = forward_cached(bundle.encoder, xs_next)
    z, z_next = acts[-1][:, 0], acts_next[-1][:, 0]

    dyn_in = np.column_stack([xs, (z - bundle.t_mean) / bundle.t_std,
                              data.u_phys / bundle.u_scale])
    dyn_acts = forward_cached(bundle.dynamics, dyn_in)
    pred = data.t_room + bundle.t_std * dyn_acts[-1][:, 0]
    err = pred - data.t_room_next
    l_pred = float(np.mean(err ** 2))

    resid = physics_residual(data.t_room, data.u_phys, z, z_next, data.t_amb,
                             data.t_room_next, bundle.omega, bundle.selector)
    l_phys = float(np.mean(np.sum(resid ** 2, axis=1)))
    total = l_pred + bundle.mu * l_phys
    if not with_grads:
        return total, l_pred, l_phys, None

    g_pred = (2.0 / n) * err * bundle.t_std
    dgw, dgb, g_dyn_in = backward(bundle.dynamics, dyn_acts, g_pred[:, None])
    g_z = g_dyn_in[:, -2] / bundle.t_std
    g_z_next = np.zeros(n)
    g_omega = np.zeros(6)
    if bundle.selector == "correct":
        a11, a12, a21, a22, b1, c11 = bundle.omega
        g1 = (2.0 * bundle.mu / n) * resid[:, 0]
        g2 = (2.0 * bundle.mu / n) * resid[:, 1]
        g_omega[:] = [-(g1 * data.t_room).sum(), -(g1 * z).sum(),
                      -(g2 * data.t_room).sum(), -(g2 * z).sum(),
                      -(g1 * data.u_phys).sum(), -(g1 * data.t_amb).sum()]
        g_z = g_z - a12 * g1 - a22 * g2
        g_z_next = g2
    else:
        g_z = g_z + (2.0 * bundle.mu / n) * resid[:, 0]
    egw, egb, _ = backward(bundle.encoder, acts, g_z[:, None])
    egw2, egb2, _ = backward(bundle.encoder, acts_next, g_z_next[:, None])
    enc_grads = [a + b for a, b in zip(egw + egb, egw2 + egb2)]
    return total, l_pred, l_phys, [*enc_grads, *dgw, *dgb, g_omega]


def combined_grad_check(bundle: EncoderBundle, data: EncoderData, h=1e-5) -> float:
    """Max relative error of analytic vs finite-difference gradients (Omega included)."""
    _, _, _, analytic = loss_and_grads(bundle, data)
    numeric = numeric_gradients(lambda: loss_and_grads(bundle, data, False)[0],
                                bundle.params(), h)
    return relative_error(analytic, numeric)


def train_encoder(batch, config: EncoderConfig | None = None, selector="correct",
                  u_scale: float | None = None):
    """Fit encoder, dynamics and omega on a batch; returns (bundle, history).

    ``history`` maps "total", "pred" and "phys" to per-epoch full-batch losses.
    """
    config = config or EncoderConfig()
    data = batch if isinstance(batch, EncoderData) else EncoderData.from_batch(batch)
    if len(data) == 0:
        raise ValueError("cannot train the encoder on an empty batch")
    bundle = new_bundle(data.feats.shape[1], selector, config)
    bundle.x_mean = data.feats.mean(axis=0)
    bundle.x_std = np.maximum(data.feats.std(axis=0), 1e-6)
    bundle.t_mean = float(data.t_room.mean())
    bundle.t_std = max(float(data.t_room.std()), 1e-3)
    bundle.u_scale = u_scale or max(float(data.u_phys.max()), 1e-6)
    # start the hidden state near room temperature
    bundle.encoder.biases[-1][:] = bundle.t_mean

    rng = np.random.default_rng(config.seed)
    opt = Adam(bundle.params(), config.learning_rate)
    n = len(data)
    history = {"total": [], "pred": [], "phys": []}
    for epoch in range(config.epochs):
        order = rng.permutation(n) if n > config.batch_size else None
        sums = np.zeros(3)
        for start in range(0, n, config.batch_size):
            part = data if order is None else data.subset(order[start:start + config.batch_size])
            total, l_pred, l_phys, grads = loss_and_grads(bundle, part)
            if not np.isfinite(total):
                raise TrainingDivergedError(f"encoder loss became non-finite at epoch {epoch}")
            opt.step(grads)
            sums += np.array([total, l_pred, l_phys]) * len(part)
        for key, value in zip(("total", "pred", "phys"), sums / n):
            history[key].append(float(value))
        if _early_stop(history["total"], config.patience, config.min_delta):
            break
    return bundle, history


@dataclass
class AnnotatedBatch:
    """A batch plus hidden-state estimates for x_i and x_{i+1} (the modified batch)."""

    batch: ExperienceBatch
    z: np.ndarray = field(repr=False)
    z_next: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.batch)


def freeze_and_annotate(bundle: EncoderBundle, batch) -> AnnotatedBatch:
    if isinstance(batch, AnnotatedBatch):
        batch = batch.batch
    if len(batch) == 0:
        return AnnotatedBatch(batch, np.empty(0), np.empty(0))
    data = EncoderData.from_batch(batch)
    return AnnotatedBatch(batch, encode_features(bundle, data.feats),
                          encode_features(bundle, data.next_feats))


def bundle_to_dict(bundle: EncoderBundle) -> dict:
    return {"selector": bundle.selector, "mu": bundle.mu,
            "omega": bundle.omega_dict(),
            "encoder": save_mlp(bundle.encoder), "dynamics": save_mlp(bundle.dynamics),
            "x_mean": bundle.x_mean.tolist(), "x_std": bundle.x_std.tolist(),
            "t_mean": bundle.t_mean, "t_std": bundle.t_std, "u_scale": bundle.u_scale}


def bundle_from_dict(data: dict) -> EncoderBundle:
    return EncoderBundle(load_mlp(data["encoder"]), load_mlp(data["dynamics"]),
                         np.array([data["omega"][k] for k in OMEGA_NAMES]),
                         data["selector"], data["mu"], np.array(data["x_mean"]),
                         np.array(data["x_std"]), data["t_mean"], data["t_std"],
                         data["u_scale"])


def save_bundle(bundle: EncoderBundle, path) -> None:
    Path(path).write_text(json.dumps(bundle_to_dict(bundle), indent=1))


def load_bundle(path) -> EncoderBundle:
    return bundle_from_dict(json.loads(Path(path).read_text()))
