"""
Scenario construction, day-by-day rollouts and the three experiments.

Day layout of every scenario: ``train_days`` training days, one gap day
(seen only as the next-day forecast of the last training night), the test
days, then one padding day that serves as forecast for the last test night.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, TrainingConfig
from .encoder import (AnnotatedBatch, EncoderConfig, encode, freeze_and_annotate,
                      train_encoder)
from .fqi import (QEnsemble, _argmin_action, fqi_backward, hidden_state_dataset,
                  history_dataset, regressor_factory)
from .mdp import (ExperienceBatch, ForecastBundle, Transition, make_observation,
                  step_cost)
from .mpc import DEFAULT_GRID, MpcProblem, bau_action, hourly_to_steps, mpc_solve_dp
from .regressors import TrainConfig
from .thermal_sim import (MINUTES_PER_HOUR, PriceSeries, RcParams,
                          SimState, WeatherSeries, env_step_hour, generate_dayahead_prices,
                          generate_square_prices, generate_weather, load_price_csv,
                          load_weather_csv)

log = logging.getLogger(__name__)

GAP_DAYS = 1


@dataclass
class Scenario:
    name: str
    prices: PriceSeries
    weather: WeatherSeries
    train_days: int
    test_days: int

    def __post_init__(self):
        need = self.total_days(self.train_days, self.test_days)
        if self.prices.days < need or self.weather.days < need:
            raise ValueError(f"scenario {self.name!r} needs {need} days of prices and weather")

    @staticmethod
    def total_days(train_days: int, test_days: int) -> int:
        return train_days + GAP_DAYS + test_days + 1

    @property
    def test_start(self) -> int:
        return self.train_days + GAP_DAYS

    @property
    def test_day_indices(self) -> list:
        return list(range(self.test_start, self.test_start + self.test_days))

    def t_ambient(self, day: int, hour: int) -> float:
        return float(self.weather.values[24 * day + hour])

    def price(self, day: int, hour: int) -> float:
        return float(self.prices.values[24 * day + hour])

    def forecast(self, day: int, horizon: int = 24) -> ForecastBundle:
        """Exact prices and temperatures for ``day`` and the day after."""
        lo, hi = 24 * day, 24 * day + 2 * horizon
        return ForecastBundle(self.prices.values[lo:hi], self.weather.values[lo:hi])


def build_scenario(config: ExperimentConfig, name: str) -> Scenario:
    t, p = config.training, config.prices
    days = Scenario.total_days(t.train_days, t.test_days)
    if name == "square":
        prices = generate_square_prices(days, p.price_seed)
    elif name == "belpex":
        prices = (load_price_csv(p.price_csv) if p.price_csv
                  else generate_dayahead_prices(days, p.price_seed))
    else:
        raise ValueError(f"unknown scenario {name!r}")
    weather = (load_weather_csv(p.weather_csv) if p.weather_csv and name == "belpex"
               else generate_weather(days, p.weather_seed, p.weather_mean,
                                     p.weather_amplitude, p.weather_noise))
    return Scenario(name, prices, weather, t.train_days, t.test_days)


# ---------------------------------------------------------------------------
# environment and rollouts

class BuildingEnv:
    """Simulator plus the hourly room-temperature buffer the agents observe."""

    def __init__(self, params: RcParams, scenario: Scenario, t_room0=20.0, t_mass0=20.0,
                 depth=4):
        self.params, self.scenario, self.depth = params, scenario, depth
        self.initial = (t_room0, t_mass0)
        self.reset()

    def reset(self):
        self.state = SimState(*self.initial)
        self.history = [self.state.t_room]

    def observation(self, day: int, hour: int):
        # hour may be 24: first hour of the next day, still inside the 2T window
        return make_observation(self.history, self.scenario.t_ambient(day + hour // 24, hour % 24),
                                hour, self.depth)


@dataclass
class DayLog:
    cost: float = 0.0
    violation_minutes: int = 0
    heat_above_band_minutes: int = 0
    t_room_min: float = np.inf
    t_room: list = field(default_factory=list)   # at each hour start
    t_mass: list = field(default_factory=list)
    hidden: list = field(default_factory=list)   # encoder estimate at each hour start
    actions: list = field(default_factory=list)


class Controller:
    minutes_per_step = MINUTES_PER_HOUR
    label = "controller"

    def begin_day(self, env: BuildingEnv, day: int) -> None:
        pass

    def act(self, env: BuildingEnv, day: int, step: int) -> int:
        raise NotImplementedError


class BauController(Controller):
    """Hysteresis thermostat re-evaluated every minute."""

    minutes_per_step = 1
    label = "bau"

    def __init__(self):
        self.heating = False

    def act(self, env, day, step):
        self.heating = bool(bau_action(env.state.t_room, self.heating))
        return int(self.heating)


class MpcController(Controller):
    """Perfect-information MPC solved once per day from the current state."""

    def __init__(self, minutes_per_step=MINUTES_PER_HOUR, grid=DEFAULT_GRID):
        self.minutes_per_step = minutes_per_step
        self.grid = grid
        self.label = "mpc-hourly" if minutes_per_step == 60 else "mpc-quarterly"
        self.plan = None

    def begin_day(self, env, day):
        sc = env.scenario
        problem = MpcProblem(env.params, hourly_to_steps(sc.prices.day(day), self.minutes_per_step),
                             hourly_to_steps(sc.weather.day(day), self.minutes_per_step),
                             env.state.t_room, env.state.t_mass, self.minutes_per_step)
        self.plan = mpc_solve_dp(problem, self.grid).actions

    def act(self, env, day, step):
        return int(self.plan[step])


class AgentController(Controller):
    """ε-greedy (ε = 0: greedy) use of the time-matched policy slice."""

    def __init__(self, agent: "Agent", epsilon=0.0, rng=None, plan=True):
        self.agent, self.epsilon = agent, epsilon
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.plan = plan
        self.ensemble = None
        self.label = agent.kind

    def begin_day(self, env, day):
        if self.plan and self.agent.trained:
            self.ensemble = self.agent.plan(env.scenario.forecast(day, self.agent.horizon))

    def features(self, env, obs):
        if self.agent.oracle_mass:
            return np.array([obs.t_room, env.state.t_mass, obs.t_ambient])
        return self.ensemble.features(obs)

    def act(self, env, day, step):
        if self.ensemble is None or self.rng.random() < self.epsilon:
            return int(self.rng.integers(2))
        obs = env.observation(day, step)
        q = self.ensemble.models[step].predict(self.features(env, obs)[None, :])[0]
        return _argmin_action(q)


def run_day(env: BuildingEnv, day: int, controller: Controller,
            batch: ExperienceBatch | None = None, true_mass: list | None = None,
            encoder=None) -> DayLog:
    """Simulate one day under ``controller``; optionally append hourly transitions."""
    sc, params = env.scenario, env.params
    mps = controller.minutes_per_step
    per_hour = MINUTES_PER_HOUR // mps
    out = DayLog()
    controller.begin_day(env, day)
    for hour in range(24):
        obs = env.observation(day, hour)
        mass_before = env.state.t_mass
        out.t_room.append(env.state.t_room)
        out.t_mass.append(mass_before)
        if encoder is not None:
            out.hidden.append(encode(encoder, obs))
        t_amb, price = sc.t_ambient(day, hour), sc.price(day, hour)
        energy = 0.0
        for sub in range(per_hour):
            u = controller.act(env, day, hour * per_hour + sub)
            res = env_step_hour(env.state, params, u, t_amb, minutes=mps)
            env.state = res.state
            energy += res.u_phys_avg * mps
            out.violation_minutes += res.violation_minutes
            out.heat_above_band_minutes += res.heat_above_band_minutes
            out.t_room_min = min(out.t_room_min, res.t_room_min)
            if mps == MINUTES_PER_HOUR:
                out.actions.append(u)
        u_phys = energy / MINUTES_PER_HOUR
        out.cost += step_cost(price, u_phys)
        env.history.append(env.state.t_room)
        if batch is not None:
            next_obs = env.observation(day, hour + 1)
            batch.append(Transition(obs, out.actions[-1], next_obs, u_phys))
            if true_mass is not None:
                true_mass.append((mass_before, env.state.t_mass))
    return out


# ---------------------------------------------------------------------------
# agents

def _nn_config(t: TrainingConfig, kind: str, seed: int) -> TrainConfig:
    lr = t.fqi_learning_rate if kind == "fqi-nn" else t.physq_learning_rate
    return TrainConfig(learning_rate=lr, batch_size=t.batch_size, epochs=t.nn_epochs,
                       patience=t.nn_patience, seed=seed, dtype="float32")


def encoder_config(t: TrainingConfig, seed: int) -> EncoderConfig:
    return EncoderConfig(learning_rate=t.encoder_learning_rate, batch_size=t.batch_size,
                         epochs=t.encoder_epochs, patience=t.encoder_patience, mu=t.mu,
                         seed=seed)


class Agent:
    """A learning agent: the encoder is fit once per batch, Q is planned per forecast."""

    def __init__(self, kind: str, seed: int, training: TrainingConfig,
                 u_scale: float = 10.0, oracle_mass: bool = False):
        if kind not in ("physq", "physq-wrong", "fqi-nn", "fqi-et"):
            raise ValueError(f"unknown agent kind {kind!r}")
        self.kind, self.seed, self.training = kind, seed, training
        self.horizon = training.horizon
        self.u_scale = u_scale
        self.oracle_mass = oracle_mass
        self.encoder = None
        self.dataset = None
        self.encoder_history = None
        self.factory = regressor_factory(kind, seed, None if kind == "fqi-et" else
                                         _nn_config(training, kind, seed),
                                         training.n_estimators)

    @property
    def trained(self) -> bool:
        return self.dataset is not None

    @property
    def uses_hidden_state(self) -> bool:
        return self.kind.startswith("physq")

    def train(self, batch: ExperienceBatch, true_mass=None):
        if not self.uses_hidden_state:
            self.dataset = history_dataset(batch)
            return self
        if self.oracle_mass:
            masses = np.asarray(true_mass, dtype=float)
            annotated = AnnotatedBatch(batch, masses[:, 0], masses[:, 1])
        else:
            selector = "wrong" if self.kind == "physq-wrong" else "correct"
            self.encoder, self.encoder_history = train_encoder(
                batch, encoder_config(self.training, self.seed), selector, self.u_scale)
            annotated = freeze_and_annotate(self.encoder, batch)
        self.dataset = hidden_state_dataset(annotated)
        return self

    def plan(self, forecasts: ForecastBundle) -> QEnsemble:
        models = fqi_backward(self.dataset, forecasts, self.factory)
        return QEnsemble(self.kind, models, self.horizon, self.encoder)


# ---------------------------------------------------------------------------
# experiment building blocks

@dataclass
class RunResult:
    agent: str
    batch_days: int
    replicate: int
    cost: float
    daily_costs: list
    violation_minutes: int
    heat_above_band_minutes: int
    t_room_min: float
    t_mass: np.ndarray = field(default=None, repr=False)
    hidden: np.ndarray = field(default=None, repr=False)


@dataclass
class GrowingRun:
    agent: Agent
    batch: ExperienceBatch
    true_mass: list
    daily: list          # rows (day, agent, cost_eur, epsilon)
    forecast_days: list  # days whose forecasts were used for planning


def make_env(config: ExperimentConfig, scenario: Scenario) -> BuildingEnv:
    b = config.building
    return BuildingEnv(b.params, scenario, b.initial_t_room, b.initial_t_mass,
                       config.training.depth)


def run_growing_batch(config: ExperimentConfig, kind: str, scenario: Scenario,
                      seed: int | None = None, snapshots: dict | None = None) -> GrowingRun:
    """Collect and learn online: ε-greedy days, retraining every few days.

    The agent is trained on the whole batch every ``retrain_interval`` days;
    with ``replan_daily`` the Q-ensemble is re-planned every night against
    the next day's forecast. ``snapshots`` (if given) receives batch copies at
    the configured ladder sizes.
    """
    t = config.training
    seed = t.seed if seed is None else seed
    env = make_env(config, scenario)
    agent = Agent(kind, seed, t, config.building.params.heater_power_max)
    rng = np.random.default_rng([seed, 0xE9])
    batch = ExperienceBatch(seed=seed, depth=t.depth)
    true_mass, daily, forecast_days = [], [], []
    ctrl = AgentController(agent, rng=rng, plan=False)
    for day in range(t.train_days):
        if day > 0 and day % t.retrain_interval == 0:
            agent.train(batch.snapshot(day), true_mass)
        if agent.trained and (t.replan_daily or day % t.retrain_interval == 0):
            ctrl.ensemble = agent.plan(scenario.forecast(day, t.horizon))
            forecast_days += [day, day + 1]
        ctrl.epsilon = t.epsilon(day)
        res = run_day(env, day, ctrl, batch, true_mass)
        batch.days = day + 1
        daily.append((day, kind, res.cost, ctrl.epsilon))
        if snapshots is not None and day + 1 in t.batch_ladder:
            snapshots[day + 1] = batch.snapshot(day + 1)
    agent.train(batch, true_mass)
    return GrowingRun(agent, batch, true_mass, daily, sorted(set(forecast_days)))


def evaluate_controller(config: ExperimentConfig, scenario: Scenario, controller: Controller,
                        batch_days=0, replicate=0, encoder=None) -> RunResult:
    """Greedy rollout over the test days from the configured initial state."""
    env = make_env(config, scenario)
    logs = [run_day(env, day, controller, encoder=encoder) for day in scenario.test_day_indices]
    return RunResult(controller.label, batch_days, replicate, float(sum(l.cost for l in logs)),
                     [l.cost for l in logs], sum(l.violation_minutes for l in logs),
                     sum(l.heat_above_band_minutes for l in logs),
                     min(l.t_room_min for l in logs),
                     np.concatenate([l.t_mass for l in logs]),
                     np.concatenate([l.hidden for l in logs]) if encoder is not None else None)


def evaluate_agent(config: ExperimentConfig, scenario: Scenario, agent: Agent,
                   batch_days=0, replicate=0) -> RunResult:
    return evaluate_controller(config, scenario, AgentController(agent), batch_days,
                               replicate, agent.encoder)


def make_fixed_batches(config: ExperimentConfig, scenario: Scenario) -> list:
    """Per replicate, nested batches at each ladder size collected by an fqi-nn learner."""
    t = config.training
    ladders = []
    for rep in range(t.replicates):
        snaps = {}
        run = run_growing_batch(config, "fqi-nn", scenario, seed=t.seed + 100 + rep,
                                snapshots=snaps)
        ladders.append({"snapshots": snaps, "true_mass": run.true_mass})
    return ladders


def held_out_violations(batch: ExperienceBatch, scenario: Scenario,
                        forecast_days=()) -> list:
    """Test-day values found in a training batch or in the planning forecasts."""
    test_lo = 24 * scenario.test_start
    test_hi = test_lo + 24 * scenario.test_days
    test_temps = set(scenario.weather.values[test_lo:test_hi].tolist())
    problems = []
    for i, tr in enumerate(batch):
        for where, obs in (("obs", tr.obs), ("next_obs", tr.next_obs)):
            if obs.t_ambient in test_temps:
                problems.append(f"transition {i} {where} holds a test-day temperature")
    problems += [f"forecast of test day {d} used in training" for d in forecast_days
                 if scenario.test_start <= d < scenario.test_start + scenario.test_days]
    return problems


# ---------------------------------------------------------------------------
# the suite

RESULT_FIELDS = ("scenario", "agent", "batch_days", "replicate", "cost_eur", "violation_min")


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _result_row(scenario, r: RunResult):
    return (scenario, r.agent, r.batch_days, r.replicate, round(r.cost, 6), r.violation_minutes)


@dataclass
class SuiteOutput:
    results: list = field(default_factory=list)     # (scenario, RunResult), fixed batches
    growing: list = field(default_factory=list)     # (scenario, RunResult), experiment 1
    table1: list = field(default_factory=list)      # (scenario, label, cost)
    daily: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    references: dict = field(default_factory=dict)  # scenario -> {label: RunResult}
    ladders: dict = field(default_factory=dict)     # scenario -> fixed batches per replicate


def reference_runs(config: ExperimentConfig, scenario: Scenario) -> dict:
    return {c.label: evaluate_controller(config, scenario, c)
            for c in (BauController(), MpcController(60), MpcController(15))}


def experiment1(config, scenario, out: SuiteOutput):
    run = run_growing_batch(config, "physq", scenario)
    res = evaluate_agent(config, scenario, run.agent, config.training.train_days, 0)
    out.growing.append((scenario.name, res))
    out.daily += [(d, f"{scenario.name}:{a}", round(c, 6), round(e, 6)) for d, a, c, e in run.daily]
    refs = out.references[scenario.name]
    out.table1 += [(scenario.name, "PhysQ", res.cost),
                   (scenario.name, "BAU", refs["bau"].cost),
                   (scenario.name, "Binary MPC", refs["mpc-hourly"].cost)]
    return run, res


def fixed_batch_study(config, scenario, kinds, out: SuiteOutput, ladders=None):
    """Train every kind on every ladder batch of every replicate and evaluate it."""
    t = config.training
    ladders = ladders if ladders is not None else make_fixed_batches(config, scenario)
    for rep, ladder in enumerate(ladders):
        for days in t.batch_ladder:
            batch = ladder["snapshots"][days]
            for kind in kinds:
                try:
                    agent = Agent(kind, t.seed + rep, t,
                                  config.building.params.heater_power_max).train(batch)
                    res = evaluate_agent(config, scenario, agent, days, rep)
                    out.results.append((scenario.name, res))
                except Exception as exc:  # isolate one failing replicate
                    log.exception("replicate %d %s %dd failed", rep, kind, days)
                    out.failures.append((scenario.name, kind, days, rep, repr(exc)))
    return ladders


def aggregate(out: SuiteOutput, scenario: str, kinds, ladder) -> list:
    """(batch_days, agent, mean, std, n) per ladder size and kind."""
    rows = []
    for days in ladder:
        for kind in kinds:
            costs = [r.cost for s, r in out.results
                     if s == scenario and r.agent == kind and r.batch_days == days]
            if costs:
                rows.append((days, kind, float(np.mean(costs)), float(np.std(costs, ddof=1))
                             if len(costs) > 1 else 0.0, len(costs)))
    return rows


def run_experiment_suite(config: ExperimentConfig, experiments=(1, 2, 3),
                         output_dir=None) -> SuiteOutput:
    """Run the selected experiments for every configured scenario and write CSVs."""
    outdir = Path(output_dir or config.paths.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    t = config.training
    out = SuiteOutput()
    for name in config.prices.scenarios:
        start = time.time()
        scenario = build_scenario(config, name)
        out.references[name] = reference_runs(config, scenario)
        if 1 in experiments:
            experiment1(config, scenario, out)
        kinds = []
        if 2 in experiments:
            kinds += list(t.agents)
        if 3 in experiments:
            kinds += [k for k in ("physq", "physq-wrong") if k not in kinds]
        if kinds:
            out.ladders[name] = fixed_batch_study(config, scenario, kinds, out)
        log.info("scenario %s done in %.0f s", name, time.time() - start)

    write_outputs(config, out, experiments, outdir)
    return out


def write_outputs(config, out: SuiteOutput, experiments, outdir: Path):
    t = config.training
    rows = [_result_row(s, r) for s, r in out.growing + out.results]
    for s, refs in out.references.items():
        rows += [_result_row(s, r) for r in refs.values()]
    _write_csv(outdir / "results.csv", RESULT_FIELDS, rows)
    summary = []
    if 1 in experiments:
        _write_csv(outdir / "table1.csv", ("scenario", "controller", "cost_eur"),
                   [(s, c, round(v, 6)) for s, c, v in out.table1])
        _write_csv(outdir / "daily.csv", ("day", "agent", "cost_eur", "epsilon"), out.daily)
        summary.append("Experiment 1: 5-day test cost (EUR)")
        for s, c, v in out.table1:
            summary.append(f"  {s:8s} {c:12s} {v:10.2f}")
    for exp, kinds in ((2, list(t.agents)), (3, ["physq", "physq-wrong"])):
        if exp not in experiments:
            continue
        summary.append(f"Experiment {exp}: mean (std) 5-day test cost by batch size (EUR)")
        for s in out.references:
            agg = aggregate(out, s, kinds, t.batch_ladder)
            refs = out.references[s]
            _write_csv(outdir / f"exp{exp}_{s}.csv",
                       ("batch_days", "agent", "mean_cost_eur", "std_cost_eur", "n"),
                       [(d, k, round(m, 6), round(sd, 6), n) for d, k, m, sd, n in agg]
                       + [(0, "bau", round(refs["bau"].cost, 6), 0.0, 1),
                          (0, "mpc-quarterly", round(refs["mpc-quarterly"].cost, 6), 0.0, 1)])
            summary.append(f"  {s}: BAU {refs['bau'].cost:.2f}, "
                           f"quarterly MPC {refs['mpc-quarterly'].cost:.2f}")
            for d, k, m, sd, n in agg:
                summary.append(f"    {d:3d} d  {k:12s} {m:9.2f} ({sd:.2f}) n={n}")
    if out.failures:
        summary.append("Failures:")
        summary += [f"  {f}" for f in out.failures]
    (outdir / "summary.txt").write_text("\n".join(summary) + "\n")
