"""Agent-facing observations, transitions, costs and the batch file format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

HISTORY_DEPTH = 4
HORIZON = 24
BATCH_VERSION = "v1"
_BATCH_MAGIC = "thermoq-batch"


class BatchFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AgentObservation:
    """What the agent sees at the start of an hour.

    ``t_room_history`` holds the k+1 most recent hourly room temperatures,
    oldest first; ``timeslot`` is the hour index within the two-day window.
    """

    t_room_history: tuple
    t_ambient: float
    timeslot: int

    def __post_init__(self):
        object.__setattr__(self, "t_room_history",
                           tuple(float(t) for t in self.t_room_history))
        if not 0 <= self.timeslot < 2 * HORIZON:
            raise ValueError(f"timeslot {self.timeslot} outside [0, {2 * HORIZON})")

    @property
    def t_room(self) -> float:
        return self.t_room_history[-1]


@dataclass(frozen=True)
class Transition:
    obs: AgentObservation
    action: int
    next_obs: AgentObservation
    u_phys: float

    def __post_init__(self):
        if self.action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {self.action!r}")
        if not (math.isfinite(self.u_phys) and self.u_phys >= 0):
            raise ValueError(f"u_phys must be finite and >= 0, got {self.u_phys!r}")


@dataclass
class ExperienceBatch:
    """Append-only collection of transitions."""

    transitions: list = field(default_factory=list)
    seed: int = 0
    days: int = 0
    depth: int = HISTORY_DEPTH

    def __len__(self):
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)

    def __eq__(self, other):
        if not isinstance(other, ExperienceBatch):
            return NotImplemented
        return (self.transitions == other.transitions and self.seed == other.seed
                and self.days == other.days and self.depth == other.depth)

    def append(self, transition: Transition) -> None:
        if len(transition.obs.t_room_history) != self.depth + 1:
            raise ValueError("history length does not match batch depth")
        self.transitions.append(transition)

    def snapshot(self, days: int | None = None) -> "ExperienceBatch":
        """Copy holding the first ``days`` days of transitions (all by default)."""
        if days is None:
            return ExperienceBatch(list(self.transitions), self.seed, self.days, self.depth)
        return ExperienceBatch(list(self.transitions[:days * HORIZON]), self.seed,
                               days, self.depth)

    def arrays(self) -> dict:
        """Column view of the batch as numpy arrays."""
        n, width = len(self.transitions), self.depth + 1
        out = {
            "hist": np.empty((n, width)), "t_amb": np.empty(n), "slot": np.empty(n, int),
            "action": np.empty(n, int), "u_phys": np.empty(n),
            "next_hist": np.empty((n, width)), "next_t_amb": np.empty(n),
            "next_slot": np.empty(n, int),
        }
        for i, tr in enumerate(self.transitions):
            out["hist"][i] = tr.obs.t_room_history
            out["t_amb"][i] = tr.obs.t_ambient
            out["slot"][i] = tr.obs.timeslot
            out["action"][i] = tr.action
            out["u_phys"][i] = tr.u_phys
            out["next_hist"][i] = tr.next_obs.t_room_history
            out["next_t_amb"][i] = tr.next_obs.t_ambient
            out["next_slot"][i] = tr.next_obs.timeslot
        return out


@dataclass(frozen=True)
class ForecastBundle:
    """Hourly price and outside-temperature forecasts over the 2T window."""

    prices: np.ndarray
    t_ambient: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        t_amb = np.asarray(self.t_ambient, dtype=float)
        if prices.shape != t_amb.shape or prices.ndim != 1:
            raise ValueError("prices and t_ambient must be 1-D and equally long")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "t_ambient", t_amb)

    @property
    def slots(self) -> int:
        return len(self.prices)


def make_observation(history, t_ambient: float, timeslot: int,
                     depth: int = HISTORY_DEPTH) -> AgentObservation:
    """Build an observation from a buffer of hourly room temperatures.

    Short buffers (episode start) are padded by repeating the earliest sample.
    """
    history = list(history)
    if not history:
        raise ValueError("history buffer is empty")
    window = history[-(depth + 1):]
    window = [window[0]] * (depth + 1 - len(window)) + window
    return AgentObservation(tuple(window), float(t_ambient), int(timeslot))


def step_cost(price: float, u_phys: float, dt_hours: float = 1.0) -> float:
    """Energy cost in € of ``u_phys`` kW for ``dt_hours`` at ``price`` €/MWh."""
    if dt_hours <= 0:
        raise ValueError("dt_hours must be > 0")
    if u_phys < 0:
        raise ValueError("u_phys must be >= 0")
    return price * u_phys * dt_hours / 1000.0


def inject_forecast(next_obs: AgentObservation, forecasts: ForecastBundle,
                    target_slot: int) -> AgentObservation:
    """Replace the exogenous part of ``next_obs`` by the forecast for ``target_slot``."""
    if not 0 <= target_slot < forecasts.slots:
        raise IndexError(f"target_slot {target_slot} outside [0, {forecasts.slots})")
    return replace(next_obs, t_ambient=float(forecasts.t_ambient[target_slot]),
                   timeslot=int(target_slot))


def _fmt(x: float) -> str:
    return repr(float(x))


def save_batch(batch: ExperienceBatch, path) -> None:
    """Write one header line, then one transition per line.

    Line layout (comma separated): k+1 history temperatures, t_ambient,
    timeslot, action, k+1 next history temperatures, next t_ambient,
    next timeslot, u_phys.
    """
    lines = [f"{_BATCH_MAGIC} {BATCH_VERSION} k={batch.depth} n={len(batch)} "
             f"seed={batch.seed} days={batch.days}"]
    for tr in batch:
        fields = [*map(_fmt, tr.obs.t_room_history), _fmt(tr.obs.t_ambient),
                  str(tr.obs.timeslot), str(tr.action),
                  *map(_fmt, tr.next_obs.t_room_history), _fmt(tr.next_obs.t_ambient),
                  str(tr.next_obs.timeslot), _fmt(tr.u_phys)]
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def load_batch(path) -> ExperienceBatch:
    text = Path(path).read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise BatchFormatError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) < 2 or header[0] != _BATCH_MAGIC:
        raise BatchFormatError(f"{path}: not a batch file")
    if header[1] != BATCH_VERSION:
        raise BatchFormatError(f"{path}: unsupported version {header[1]!r}, "
                               f"expected {BATCH_VERSION!r}")
    meta = dict(item.split("=", 1) for item in header[2:])
    depth, count = int(meta["k"]), int(meta["n"])
    width = depth + 1
    n_fields = 2 * width + 6
    batch = ExperienceBatch([], int(meta.get("seed", 0)), int(meta.get("days", 0)), depth)
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        try:
            if len(parts) != n_fields:
                raise ValueError(f"expected {n_fields} fields, got {len(parts)}")
            vals = parts
            obs = AgentObservation(tuple(float(v) for v in vals[:width]),
                                   float(vals[width]), int(vals[width + 1]))
            action = int(vals[width + 2])
            off = width + 3
            next_obs = AgentObservation(tuple(float(v) for v in vals[off:off + width]),
                                        float(vals[off + width]), int(vals[off + width + 1]))
            batch.append(Transition(obs, action, next_obs, float(vals[-1])))
        except ValueError as exc:
            raise BatchFormatError(
                f"{path}:{lineno}: {exc}; last good line {lineno - 1}") from None
    if len(batch) != count:
        raise BatchFormatError(f"{path}: truncated, header declares {count} transitions "
                               f"but found {len(batch)}; last good line {len(lines)}")
    return batch
