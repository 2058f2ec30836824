"""
Two-state RC building simulator with a minute-resolution backup controller.

States:
- t_room: room air temperature T_r (°C), observed by the agent
- t_mass: building thermal-mass temperature T_m (°C), hidden

Model (time in hours, power in kW):
C_r dT_r/dt = (T_m - T_r)/R_rm + (T_a - T_r)/R_ra + u_phys
C_m dT_m/dt = (T_r - T_m)/R_rm

Integrated with forward Euler at 1-minute steps. The backup controller checks
T_r every minute and overrides the requested action when the room leaves the
[18, 22] °C band; an override is held until the end of the hour.

Also holds the exogenous series (hourly prices and outside temperatures),
their seeded generators and CSV loaders.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

COMFORT_LOW = 18.0
COMFORT_HIGH = 22.0
MINUTES_PER_HOUR = 60

SQUARE_LOW = 30.0
SQUARE_HIGH = 120.0
SQUARE_PEAK_HOURS = 8
# peak onsets are drawn from this range so every peak ends by midnight
SQUARE_ONSET_RANGE = (6, 16)


class SeriesFormatError(ValueError):
    """A CSV series row could not be parsed."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class SeriesShapeError(ValueError):
    """A series length is not a whole number of days."""


@dataclass(frozen=True)
class RcParams:
    """Lumped parameters of the single-zone building.

    Capacities in kWh/°C, resistances in °C/kW, heater power in kW.
    """

    room_capacity: float = 2.5
    mass_capacity: float = 10.0
    resist_room_mass: float = 0.5
    resist_room_ambient: float = 3.0
    heater_power_max: float = 10.0

    def __post_init__(self):
        for name in ("room_capacity", "mass_capacity", "resist_room_mass",
                     "resist_room_ambient", "heater_power_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        room, mass = self.rc_products()
        if not room < mass:
            raise ValueError(
                f"room time constant ({room:.2f} h) must be shorter than the "
                f"mass time constant ({mass:.2f} h)")

    def continuous_matrices(self):
        """(A, B, E) of dx/dt = A x + B u + E T_a with x = (T_r, T_m), t in hours."""
        cr, cm = self.room_capacity, self.mass_capacity
        rm, ra = self.resist_room_mass, self.resist_room_ambient
        a = np.array([[-(1 / rm + 1 / ra) / cr, 1 / (rm * cr)],
                      [1 / (rm * cm), -1 / (rm * cm)]])
        b = np.array([1 / cr, 0.0])
        e = np.array([1 / (ra * cr), 0.0])
        return a, b, e

    def rc_products(self) -> tuple[float, float]:
        """Node time constants in hours: C_r (R_rm || R_ra) and C_m R_rm."""
        rm, ra = self.resist_room_mass, self.resist_room_ambient
        return self.room_capacity * rm * ra / (rm + ra), self.mass_capacity * rm

    def time_constants(self) -> tuple[float, float]:
        """Fast (room) and slow (mass) modal time constants in hours."""
        a, _, _ = self.continuous_matrices()
        taus = sorted(-1.0 / np.linalg.eigvals(a).real)
        return float(taus[0]), float(taus[1])

    def heating_need(self, t_ambient: float, t_room: float = COMFORT_LOW) -> float:
        """Steady-state power (kW) that holds ``t_room`` against ``t_ambient``."""
        return max(0.0, (t_room - t_ambient) / self.resist_room_ambient)

    def heater_sufficient(self, t_ambient_min: float) -> bool:
        return self.heater_power_max >= self.heating_need(t_ambient_min)


@dataclass(frozen=True)
class SimState:
    t_room: float
    t_mass: float
    minute_of_sim: int = 0


@dataclass(frozen=True)
class PriceSeries:
    """Hourly prices in €/MWh, a whole number of days long."""

    values: np.ndarray
    start_day: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) % 24:
            raise SeriesShapeError(
                f"price series length {values.size} is not a multiple of 24")
        if not np.all(np.isfinite(values)):
            raise ValueError("price series contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def days(self) -> int:
        return len(self.values) // 24

    def day(self, d: int) -> np.ndarray:
        return self.values[24 * d:24 * (d + 1)]

    def slice_days(self, first: int, count: int) -> "PriceSeries":
        return PriceSeries(self.values[24 * first:24 * (first + count)].copy(),
                           start_day=self.start_day + first)


@dataclass(frozen=True)
class WeatherSeries:
    """Hourly outside air temperatures in °C."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) % 24:
            raise SeriesShapeError(
                f"weather series length {values.size} is not a multiple of 24")
        if not np.all(np.isfinite(values)):
            raise ValueError("weather series contains non-finite values")
        if values.size and (values.min() < -20 or values.max() > 45):
            raise ValueError("outside temperature outside [-20, 45] °C")
        object.__setattr__(self, "values", values)

    @property
    def days(self) -> int:
        return len(self.values) // 24

    def day(self, d: int) -> np.ndarray:
        return self.values[24 * d:24 * (d + 1)]

    def slice_days(self, first: int, count: int) -> "WeatherSeries":
        return WeatherSeries(self.values[24 * first:24 * (first + count)].copy())


def _check_finite(**values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


def rc_substep(state: SimState, params: RcParams, u_phys: float,
               t_ambient: float, dt: int = 1) -> SimState:
    """Advance the RC model by ``dt`` minutes with one forward-Euler step."""
    if dt != 1:
        raise ValueError("only 1-minute substeps are supported")
    _check_finite(t_room=state.t_room, t_mass=state.t_mass, u_phys=u_phys,
                  t_ambient=t_ambient)
    if not 0.0 <= u_phys <= params.heater_power_max:
        raise ValueError(f"u_phys={u_phys} outside [0, {params.heater_power_max}]")
    h = dt / MINUTES_PER_HOUR
    tr, tm = state.t_room, state.t_mass
    flow_rm = (tm - tr) / params.resist_room_mass
    flow_ra = (t_ambient - tr) / params.resist_room_ambient
    tr_new = tr + h * (flow_rm + flow_ra + u_phys) / params.room_capacity
    tm_new = tm - h * flow_rm / params.mass_capacity
    return SimState(tr_new, tm_new, state.minute_of_sim + dt)


def euler_step_matrices(params: RcParams, minutes: int = 1):
    """Affine map of ``minutes`` Euler substeps with constant inputs.

    Returns (A, b, e) such that x_next = A x + b u_phys + e T_a, which is
    exactly what ``minutes`` calls of :func:`rc_substep` compute.
    """
    a_c, b_c, e_c = params.continuous_matrices()
    h = 1.0 / MINUTES_PER_HOUR
    a1 = np.eye(2) + h * a_c
    a, b, e = np.eye(2), np.zeros(2), np.zeros(2)
    for _ in range(minutes):
        a, b, e = a1 @ a, a1 @ b + h * b_c, a1 @ e + h * e_c
    return a, b, e


def backup_override(t_room: float, u_requested: int, params: RcParams) -> float:
    """Delivered heater power after the comfort-band backup rule."""
    if t_room > COMFORT_HIGH:
        return 0.0
    if t_room < COMFORT_LOW:
        return params.heater_power_max
    return u_requested * params.heater_power_max


class HourOutcome(NamedTuple):
    state: SimState
    u_phys_avg: float
    minutes_overridden: int
    t_room_min: float
    t_room_max: float
    violation_minutes: int
    heat_above_band_minutes: int


def env_step_hour(state: SimState, params: RcParams, u_requested: int,
                  t_ambient: float, minutes: int = MINUTES_PER_HOUR) -> HourOutcome:
    """Simulate one control slot minute by minute with the backup active.

    ``violation_minutes`` counts minute checks with T_r outside [18, 22];
    ``heat_above_band_minutes`` counts checks where T_r > 22 and the heater
    was still delivering power (the backup should make this zero).
    """
    if u_requested not in (0, 1):
        raise ValueError(f"u_requested must be 0 or 1, got {u_requested!r}")
    _check_finite(t_room=state.t_room, t_mass=state.t_mass, t_ambient=t_ambient)
    umax = params.heater_power_max
    requested = u_requested * umax
    cr, cm = params.room_capacity, params.mass_capacity
    rm, ra = params.resist_room_mass, params.resist_room_ambient
    h = 1.0 / MINUTES_PER_HOUR

    tr, tm = state.t_room, state.t_mass
    held = None
    overridden = violations = hot_heat = 0
    energy = 0.0
    tr_min = tr_max = tr
    for _ in range(minutes):
        if held is None:
            p = backup_override(tr, u_requested, params)
            if p != requested:
                held = p
        else:
            p = held
        if held is not None:
            overridden += 1
        if tr < COMFORT_LOW or tr > COMFORT_HIGH:
            violations += 1
            if tr > COMFORT_HIGH and p > 0:
                hot_heat += 1
        # inlined rc_substep; keeps the hourly loop cheap
        flow_rm = (tm - tr) / rm
        tr = tr + h * (flow_rm + (t_ambient - tr) / ra + p) / cr
        tm = tm - h * flow_rm / cm
        energy += p
        tr_min = min(tr_min, tr)
        tr_max = max(tr_max, tr)
    new_state = SimState(tr, tm, state.minute_of_sim + minutes)
    return HourOutcome(new_state, energy / minutes, overridden, tr_min, tr_max,
                       violations, hot_heat)


def square_onsets(days: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 0x5C])
    lo, hi = SQUARE_ONSET_RANGE
    return rng.integers(lo, hi + 1, size=days)


def generate_square_prices(days: int, seed: int, low: float = SQUARE_LOW,
                           high: float = SQUARE_HIGH,
                           peak_hours: int = SQUARE_PEAK_HOURS) -> PriceSeries:
    """Two-level daily square wave whose peak onset moves from day to day."""
    if days < 1:
        raise ValueError("days must be >= 1")
    values = np.full(days * 24, low)
    for d, onset in enumerate(square_onsets(days, seed)):
        values[24 * d + onset:24 * d + onset + peak_hours] = high
    return PriceSeries(values)


def generate_dayahead_prices(days: int, seed: int) -> PriceSeries:
    """Synthetic day-ahead-like prices: night trough, morning and evening peaks.

    Stand-in for a historical market export when no CSV is configured.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = np.random.default_rng([seed, 0xDA])
    hours = np.arange(24)
    shape = (-18 * np.exp(-0.5 * ((hours - 3.5) / 2.5) ** 2)
             + 22 * np.exp(-0.5 * ((hours - 8.0) / 1.5) ** 2)
             + 30 * np.exp(-0.5 * ((hours - 18.5) / 2.0) ** 2)
             - 8 * np.exp(-0.5 * ((hours - 13.5) / 2.0) ** 2))
    out = []
    level = 60.0
    for _ in range(days):
        level = 60.0 + 0.6 * (level - 60.0) + rng.normal(0, 10)
        amp = rng.uniform(0.6, 1.5)
        shift = rng.integers(-1, 2)
        day = level + amp * np.roll(shape, shift) + rng.normal(0, 4, 24)
        out.append(np.clip(day, 5.0, None))
    return PriceSeries(np.round(np.concatenate(out), 2))


def generate_weather(days: int, seed: int, mean: float = 5.0,
                     amplitude: float = 5.0, noise: float = 1.0) -> WeatherSeries:
    """Daily sinusoid (warmest mid-afternoon) plus seeded Gaussian noise."""
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = np.random.default_rng([seed, 0x3E])
    hours = np.arange(days * 24)
    values = mean + amplitude * np.sin(2 * np.pi * (hours % 24 - 9) / 24)
    values = values + rng.normal(0.0, noise, size=values.size)
    return WeatherSeries(np.clip(values, -20.0, 45.0))


def _load_hourly_csv(path, column: str) -> np.ndarray:
    path = Path(path)
    values = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["hour", column]:
            raise SeriesFormatError(path, 1, f"expected header 'hour,{column}', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise SeriesFormatError(path, line, f"expected 2 fields, got {len(row)}")
            try:
                hour = int(row[0])
                value = float(row[1])
            except ValueError:
                raise SeriesFormatError(path, line, f"cannot parse row {row!r}") from None
            if hour != len(values):
                raise SeriesFormatError(path, line, f"expected hour {len(values)}, got {hour}")
            if not math.isfinite(value):
                raise SeriesFormatError(path, line, f"non-finite value {row[1]!r}")
            values.append(value)
    if len(values) % 24:
        raise SeriesShapeError(f"{path}: {len(values)} rows is not a multiple of 24")
    return np.array(values)


def load_price_csv(path) -> PriceSeries:
    """Read a ``hour,price_eur_mwh`` file."""
    return PriceSeries(_load_hourly_csv(path, "price_eur_mwh"))


def load_weather_csv(path) -> WeatherSeries:
    """Read a ``hour,t_ambient_c`` file."""
    return WeatherSeries(_load_hourly_csv(path, "t_ambient_c"))


def _write_hourly_csv(path, column: str, values) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", column])
        for i, v in enumerate(values):
            writer.writerow([i, repr(float(v))])


def save_price_csv(series: PriceSeries, path) -> None:
    _write_hourly_csv(path, "price_eur_mwh", series.values)


def save_weather_csv(series: WeatherSeries, path) -> None:
    _write_hourly_csv(path, "t_ambient_c", series.values)


def simulate_schedule(state: SimState, params: RcParams, actions, weather,
                      minutes_per_action: int = MINUTES_PER_HOUR):
    """Roll out a fixed binary schedule; returns per-slot HourOutcome list.

    ``weather`` is indexed per hour; with sub-hourly actions each slot uses
    the temperature of the hour it falls in.
    """
    outcomes = []
    per_hour = MINUTES_PER_HOUR // minutes_per_action
    for i, u in enumerate(actions):
        out = env_step_hour(state, params, int(u), float(weather[i // per_hour]),
                            minutes=minutes_per_action)
        outcomes.append(out)
        state = out.state
    return outcomes

