"""
Experiment configuration and its INI file format.

Sections and keys (all optional; defaults shown by ``default_config_text()``):

[building]   room_capacity, mass_capacity, resist_room_mass, resist_room_ambient,
             heater_power_max, initial_t_room, initial_t_mass
[training]   train_days, test_days, retrain_interval, epsilon0, epsilon_decay,
             replan_daily, agents, batch_ladder, replicates, seed, horizon, depth,
             fqi_learning_rate, physq_learning_rate, batch_size, nn_epochs,
             nn_patience, encoder_learning_rate, encoder_epochs,
             encoder_patience, mu, n_estimators
[prices]     scenarios, price_seed, weather_seed, weather_mean, weather_amplitude,
             weather_noise, price_csv, weather_csv
[paths]      output_dir
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .thermal_sim import RcParams

SCENARIOS = ("square", "belpex")


@dataclass
class BuildingConfig:
    params: RcParams = field(default_factory=RcParams)
    initial_t_room: float = 20.0
    initial_t_mass: float = 20.0


@dataclass
class TrainingConfig:
    train_days: int = 30
    test_days: int = 5
    retrain_interval: int = 5
    epsilon0: float = 0.6
    epsilon_decay: float = 0.91
    # also re-plan the Q-ensemble on the nights between retraining rounds
    replan_daily: bool = False
    agents: tuple = ("physq", "fqi-nn", "fqi-et")
    batch_ladder: tuple = (6, 12, 18, 24, 30)
    replicates: int = 5
    seed: int = 0
    horizon: int = 24
    depth: int = 4
    fqi_learning_rate: float = 0.01
    physq_learning_rate: float = 0.001
    batch_size: int = 2048
    nn_epochs: int = 500
    nn_patience: int = 20
    encoder_learning_rate: float = 0.001
    encoder_epochs: int = 3000
    encoder_patience: int = 200
    mu: float = 1.0
    n_estimators: int = 100

    def __post_init__(self):
        for name in ("train_days", "test_days", "retrain_interval", "replicates",
                     "horizon", "batch_size", "nn_epochs", "encoder_epochs", "n_estimators"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.epsilon0 <= 1 or not 0 < self.epsilon_decay <= 1:
            raise ValueError("epsilon0 must be in [0, 1] and epsilon_decay in (0, 1]")
        if any(d < 1 or d > self.train_days for d in self.batch_ladder):
            raise ValueError("batch ladder sizes must lie in [1, train_days]")

    def epsilon(self, day: int) -> float:
        return self.epsilon0 * self.epsilon_decay ** day


@dataclass
class PricesConfig:
    scenarios: tuple = SCENARIOS
    price_seed: int = 7
    weather_seed: int = 11
    weather_mean: float = 5.0
    weather_amplitude: float = 5.0
    weather_noise: float = 1.0
    # optional CSV inputs for the day-ahead scenario (synthetic stand-in otherwise)
    price_csv: str = ""
    weather_csv: str = ""

    def __post_init__(self):
        unknown = set(self.scenarios) - set(SCENARIOS)
        if unknown:
            raise ValueError(f"unknown scenarios {sorted(unknown)}")


@dataclass
class PathsConfig:
    output_dir: str = "results"


@dataclass
class ExperimentConfig:
    building: BuildingConfig = field(default_factory=BuildingConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    prices: PricesConfig = field(default_factory=PricesConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def with_training(self, **changes) -> "ExperimentConfig":
        return replace(self, training=replace(self.training, **changes))


def _parse(value: str, default):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"expected a boolean, got {value!r}")
        return low in ("true", "yes", "1")
    if isinstance(default, tuple):
        items = [v.strip() for v in value.split(",") if v.strip()]
        if default and isinstance(default[0], int):
            return tuple(int(v) for v in items)
        return tuple(items)
    return type(default)(value.strip())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(map(str, value))
    return str(value)


def _apply(obj, items: dict, section: str):
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, raw in items.items():
        if key not in known:
            raise ValueError(f"[{section}] unknown key {key!r}")
        try:
            changes[key] = _parse(raw, getattr(obj, key))
        except ValueError as exc:
            raise ValueError(f"[{section}] {key}: {exc}") from None
    return replace(obj, **changes)


def config_from_string(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.read_string(text)
    cfg = ExperimentConfig()
    unknown = set(parser.sections()) - {"building", "training", "prices", "paths"}
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}")
    if parser.has_section("building"):
        items = dict(parser.items("building"))
        initial = {k: items.pop(k) for k in ("initial_t_room", "initial_t_mass") if k in items}
        params = _apply(cfg.building.params, items, "building")
        building = _apply(replace(cfg.building, params=params), initial, "building")
        cfg = replace(cfg, building=building)
    for name in ("training", "prices", "paths"):
        if parser.has_section(name):
            cfg = replace(cfg, **{name: _apply(getattr(cfg, name), dict(parser.items(name)), name)})
    return cfg


def load_config(path) -> ExperimentConfig:
    return config_from_string(Path(path).read_text())


def config_to_string(cfg: ExperimentConfig) -> str:
    lines = ["[building]"]
    for f in fields(cfg.building.params):
        lines.append(f"{f.name} = {_fmt(getattr(cfg.building.params, f.name))}")
    lines.append(f"initial_t_room = {cfg.building.initial_t_room}")
    lines.append(f"initial_t_mass = {cfg.building.initial_t_mass}")
    for name in ("training", "prices", "paths"):
        section = getattr(cfg, name)
        lines += ["", f"[{name}]"]
        lines += [f"{f.name} = {_fmt(getattr(section, f.name))}" for f in fields(section)]
    return "\n".join(lines) + "\n"


def default_config_text() -> str:
    return config_to_string(ExperimentConfig())
