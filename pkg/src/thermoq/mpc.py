"""
Perfect-information binary MPC benchmarks and the rule-based BAU thermostat.

The MPC knows the building model and a day of prices and outside
temperatures, and picks a 0/1 heater schedule minimizing energy cost while
keeping every minute of room temperature inside the comfort band.

Two solvers share the same model:

- ``mpc_solve_dp``: forward dynamic programming over reachable states, merging
  states that fall in the same grid cell (keeping the cheapest). Returned
  schedules are exactly feasible; optimality holds up to the grid resolution.
- ``mpc_solve_exhaustive``: enumerates all 2^T schedules (small T only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .thermal_sim import (COMFORT_HIGH, COMFORT_LOW, MINUTES_PER_HOUR, RcParams,
                          euler_step_matrices)

BAU_ON_BELOW = 20.0
BAU_OFF_ABOVE = 22.0
DEFAULT_GRID = 0.02
MAX_GRID_ERROR = 0.1
# keep planned trajectories strictly inside the band so the backup never fires
BAND_MARGIN = 1e-6


class MpcInfeasibleError(RuntimeError):
    pass


def bau_action(t_room: float, heating: bool) -> int:
    """Hysteresis thermostat: switch on at or below 20 °C, off at or above 22 °C."""
    if t_room >= BAU_OFF_ABOVE:
        return 0
    if t_room <= BAU_ON_BELOW:
        return 1
    return int(heating)


@dataclass
class MpcProblem:
    params: RcParams
    prices: np.ndarray          # €/MWh per control step
    t_ambient: np.ndarray       # °C per control step
    t_room0: float
    t_mass0: float
    minutes_per_step: int = MINUTES_PER_HOUR
    low: float = COMFORT_LOW
    high: float = COMFORT_HIGH

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float)
        self.t_ambient = np.asarray(self.t_ambient, dtype=float)
        if self.prices.shape != self.t_ambient.shape or self.prices.ndim != 1:
            raise ValueError("prices and t_ambient must be 1-D and equally long")
        if MINUTES_PER_HOUR % self.minutes_per_step:
            raise ValueError("minutes_per_step must divide 60")

    @property
    def steps(self) -> int:
        return len(self.prices)

    @property
    def step_hours(self) -> float:
        return self.minutes_per_step / MINUTES_PER_HOUR

    def step_costs(self) -> np.ndarray:
        """Cost in € of running the heater at full power during each step."""
        return self.prices * self.params.heater_power_max * self.step_hours / 1000.0

    def schedule_cost(self, actions) -> float:
        return float(np.dot(self.step_costs(), np.asarray(actions, dtype=float)))

    def minute_maps(self):
        """Room temperature after each minute of a step as an affine map.

        Returns (alpha (M, 2), beta (M,), gamma (M,)) with
        T_r(m) = alpha[m] @ x + beta[m] * u + gamma[m] * T_a, u in {0, 1}.
        """
        umax = self.params.heater_power_max
        m = self.minutes_per_step
        alpha, beta, gamma = np.empty((m, 2)), np.empty(m), np.empty(m)
        for i in range(m):
            a, b, e = euler_step_matrices(self.params, i + 1)
            alpha[i], beta[i], gamma[i] = a[0], b[0] * umax, e[0]
        return alpha, beta, gamma

    def step_map(self):
        a, b, e = euler_step_matrices(self.params, self.minutes_per_step)
        return a, b * self.params.heater_power_max, e


def _advance(problem: MpcProblem, maps, x: np.ndarray, u, t: int, low, high):
    """Next states and feasibility of applying ``u`` at step ``t`` from states ``x``."""
    (alpha, beta, gamma), (a, b, e) = maps
    ta = problem.t_ambient[t]
    u = np.broadcast_to(np.asarray(u, dtype=float), (len(x),))
    minutes = x @ alpha.T + u[:, None] * beta + ta * gamma
    ok = (minutes.min(axis=1) >= low) & (minutes.max(axis=1) <= high)
    nxt = x @ a.T + u[:, None] * b + ta * e
    return nxt, ok


def _bounds(problem: MpcProblem, shrink: float):
    return problem.low + BAND_MARGIN + shrink, problem.high - BAND_MARGIN - shrink


@dataclass
class MpcSolution:
    actions: np.ndarray
    cost: float
    t_room: np.ndarray   # room temperature at each step boundary (steps + 1)
    t_mass: np.ndarray


def _rollout(problem: MpcProblem, actions) -> MpcSolution:
    a, b, e = problem.step_map()
    x = np.array([problem.t_room0, problem.t_mass0])
    traj = [x]
    for t, u in enumerate(actions):
        x = a @ x + b * u + e * problem.t_ambient[t]
        traj.append(x)
    traj = np.array(traj)
    actions = np.asarray(actions, dtype=int)
    return MpcSolution(actions, problem.schedule_cost(actions), traj[:, 0], traj[:, 1])


def mpc_solve_dp(problem: MpcProblem, grid: float = DEFAULT_GRID,
                 shrink: float = 0.0) -> MpcSolution:
    """Cheapest feasible schedule by forward DP with grid-cell state merging."""
    a, _, _ = problem.step_map()
    if grid * np.abs(a).sum(axis=1).max() > MAX_GRID_ERROR:
        raise ValueError(f"grid {grid} °C gives a per-step state error above {MAX_GRID_ERROR} °C")
    low, high = _bounds(problem, shrink)
    maps = (problem.minute_maps(), problem.step_map())
    costs = problem.step_costs()

    x = np.array([[problem.t_room0, problem.t_mass0]])
    cost = np.zeros(1)
    parents, choices = [], []
    for t in range(problem.steps):
        cand_x, cand_cost, cand_parent, cand_u = [], [], [], []
        for u in (0, 1):
            nxt, ok = _advance(problem, maps, x, u, t, low, high)
            idx = np.flatnonzero(ok)
            cand_x.append(nxt[idx])
            cand_cost.append(cost[idx] + u * costs[t])
            cand_parent.append(idx)
            cand_u.append(np.full(len(idx), u))
        nx = np.concatenate(cand_x)
        if len(nx) == 0:
            raise MpcInfeasibleError(f"no feasible action at step {t}")
        nc = np.concatenate(cand_cost)
        cells = np.floor(nx / grid).astype(np.int64)
        # cheapest per cell; equal cost prefers the warmer state
        order = np.lexsort((-nx.sum(axis=1), nc, cells[:, 1], cells[:, 0]))
        cells_sorted = cells[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = np.any(cells_sorted[1:] != cells_sorted[:-1], axis=1)
        keep = order[first]
        x, cost = nx[keep], nc[keep]
        parents.append(np.concatenate(cand_parent)[keep])
        choices.append(np.concatenate(cand_u)[keep])

    best = int(np.argmin(cost))
    actions = np.empty(problem.steps, dtype=int)
    for t in range(problem.steps - 1, -1, -1):
        actions[t] = choices[t][best]
        best = parents[t][best]
    return _rollout(problem, actions)


def mpc_solve_exhaustive(problem: MpcProblem, shrink: float = 0.0,
                         max_steps: int = 16) -> MpcSolution:
    """Enumerate every schedule; ties go to the lexicographically smallest."""
    n = problem.steps
    if n > max_steps:
        raise ValueError(f"exhaustive search limited to {max_steps} steps, got {n}")
    low, high = _bounds(problem, shrink)
    maps = (problem.minute_maps(), problem.step_map())
    codes = np.arange(2 ** n)
    # bit t of the code (most significant first) is the action at step t
    schedules = (codes[:, None] >> np.arange(n - 1, -1, -1)) & 1
    x = np.tile([problem.t_room0, problem.t_mass0], (len(codes), 1))
    feasible = np.ones(len(codes), dtype=bool)
    for t in range(n):
        x, ok = _advance(problem, maps, x, schedules[:, t], t, low, high)
        feasible &= ok
    if not feasible.any():
        raise MpcInfeasibleError("no feasible schedule")
    total = schedules @ problem.step_costs()
    total[~feasible] = np.inf
    return _rollout(problem, schedules[int(np.argmin(total))])


def hourly_to_steps(values, minutes_per_step: int) -> np.ndarray:
    """Repeat hourly values for each control step within the hour."""
    return np.repeat(np.asarray(values, dtype=float), MINUTES_PER_HOUR // minutes_per_step)
