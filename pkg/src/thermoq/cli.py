"""Command line entry point: ``python -m thermoq <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import SCENARIOS, ExperimentConfig, config_to_string, load_config
from .encoder import load_bundle, save_bundle
from .fqi import save_ensemble
from .harness import (Agent, BauController, build_scenario, evaluate_agent, make_env,
                      make_fixed_batches, run_day, run_experiment_suite, run_growing_batch)
from .mdp import load_batch, save_batch
from .mpc import DEFAULT_GRID, MpcProblem, hourly_to_steps, mpc_solve_dp
from .thermal_sim import SimState, env_step_hour


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "output_dir", None):
        cfg = replace(cfg, paths=replace(cfg.paths, output_dir=args.output_dir))
    return cfg


def _writer(path):
    fh = open(path, "w", newline="") if path else sys.stdout
    return fh, csv.writer(fh)


def cmd_simulate(args):
    """Generate exogenous series and roll out the BAU thermostat (or a fixed action)."""
    cfg = _config(args)
    cfg = replace(cfg, prices=replace(cfg.prices, price_seed=args.seed, weather_seed=args.seed))
    days = args.days
    cfg = cfg.with_training(train_days=days, test_days=1, batch_ladder=(days,))
    scenario = build_scenario(cfg, args.scenario)
    env = make_env(cfg, scenario)
    fh, w = _writer(args.out)
    w.writerow(["hour", "price_eur_mwh", "t_ambient_c", "t_room_c", "t_mass_c", "cost_eur",
                "violation_min"])
    if args.policy == "bau":
        ctrl = BauController()
        for day in range(days):
            log = run_day(env, day, ctrl)
            for h in range(24):
                w.writerow([24 * day + h, scenario.price(day, h), scenario.t_ambient(day, h),
                            log.t_room[h], log.t_mass[h], "", ""])
            w.writerow([f"day{day}", "", "", "", "", round(log.cost, 6), log.violation_minutes])
    else:
        u = 1 if args.policy == "on" else 0
        state = SimState(cfg.building.initial_t_room, cfg.building.initial_t_mass)
        for hour in range(24 * days):
            day, h = divmod(hour, 24)
            out = env_step_hour(state, cfg.building.params, u, scenario.t_ambient(day, h))
            cost = scenario.price(day, h) * out.u_phys_avg / 1000.0
            w.writerow([hour, scenario.price(day, h), scenario.t_ambient(day, h), state.t_room,
                        state.t_mass, round(cost, 6), out.violation_minutes])
            state = out.state
    if args.out:
        fh.close()


def cmd_train(args):
    cfg = _config(args)
    scenario = build_scenario(cfg, args.scenario)
    t = cfg.training
    if args.strategy == "growing":
        run = run_growing_batch(cfg, args.agent, scenario, seed=args.seed)
        agent, batch, days = run.agent, run.batch, t.train_days
    else:
        days = args.batch_days or max(t.batch_ladder)
        cfg1 = cfg.with_training(replicates=args.replicate + 1,
                                 batch_ladder=tuple(sorted(set(t.batch_ladder) | {days})))
        ladder = make_fixed_batches(cfg1, scenario)[args.replicate]
        batch = ladder["snapshots"][days]
        agent = Agent(args.agent, t.seed + args.replicate, t,
                      cfg.building.params.heater_power_max).train(batch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_batch(batch, out / "batch.txt")
    if agent.encoder is not None:
        save_bundle(agent.encoder, out / "encoder.json")
    (out / "config.ini").write_text(config_to_string(cfg))
    first_test = scenario.test_day_indices[0]
    save_ensemble(agent.plan(scenario.forecast(first_test, t.horizon)), out / "ensemble.json")
    (out / "agent.json").write_text(json.dumps(
        {"kind": args.agent, "seed": agent.seed, "scenario": args.scenario,
         "strategy": args.strategy, "batch_days": days}, indent=1))
    print(f"saved {args.agent} ({len(batch)} transitions) to {out}")


def load_trained_agent(path):
    path = Path(path)
    meta = json.loads((path / "agent.json").read_text())
    cfg = load_config(path / "config.ini")
    agent = Agent(meta["kind"], meta["seed"], cfg.training, cfg.building.params.heater_power_max)
    batch = load_batch(path / "batch.txt")
    if agent.uses_hidden_state:
        from .encoder import freeze_and_annotate
        from .fqi import hidden_state_dataset
        agent.encoder = load_bundle(path / "encoder.json")
        agent.dataset = hidden_state_dataset(freeze_and_annotate(agent.encoder, batch))
    else:
        agent.train(batch)
    return agent, cfg, meta


def cmd_evaluate(args):
    agent, cfg, meta = load_trained_agent(args.model)
    scenario = build_scenario(cfg, meta["scenario"])
    res = evaluate_agent(cfg, scenario, agent, meta["batch_days"], 0)
    fh, w = _writer(args.out)
    w.writerow(["scenario", "agent", "batch_days", "test_day", "cost_eur"])
    for i, c in enumerate(res.daily_costs):
        w.writerow([scenario.name, agent.kind, meta["batch_days"], i, round(c, 6)])
    w.writerow([scenario.name, agent.kind, meta["batch_days"], "total", round(res.cost, 6)])
    if args.out:
        fh.close()
    print(f"violation minutes: {res.violation_minutes}, min room temperature "
          f"{res.t_room_min:.3f} °C", file=sys.stderr)


def cmd_mpc(args):
    cfg = _config(args)
    scenario = build_scenario(cfg, args.scenario)
    day = scenario.test_start if args.day is None else args.day
    mps = 60 if args.freq == "hourly" else 15
    problem = MpcProblem(cfg.building.params, hourly_to_steps(scenario.prices.day(day), mps),
                         hourly_to_steps(scenario.weather.day(day), mps),
                         cfg.building.initial_t_room, cfg.building.initial_t_mass, mps)
    sol = mpc_solve_dp(problem, args.grid)
    costs = problem.step_costs() * sol.actions
    fh, w = _writer(args.out)
    w.writerow(["step", "start_minute", "action", "price_eur_mwh", "t_room_end_c",
                "t_mass_end_c", "cost_eur"])
    for i, u in enumerate(sol.actions):
        w.writerow([i, i * mps, int(u), problem.prices[i], round(sol.t_room[i + 1], 6),
                    round(sol.t_mass[i + 1], 6), round(costs[i], 6)])
    w.writerow(["total", "", int(sol.actions.sum()), "", "", "", round(sol.cost, 6)])
    if args.out:
        fh.close()


def _suite(args, experiments):
    cfg = _config(args)
    if args.scenario:
        cfg = replace(cfg, prices=replace(cfg.prices, scenarios=tuple(args.scenario)))
    out = run_experiment_suite(cfg, experiments)
    print(Path(cfg.paths.output_dir, "summary.txt").read_text())
    return 1 if out.failures else 0


def cmd_suite(args):
    return _suite(args, tuple(sorted(set(args.experiment or (1, 2, 3)))))


def cmd_ablate(args):
    return _suite(args, (3,))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermoq", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output_dir=False):
        sp.add_argument("--config", help="INI config file ([building], [training], [prices], [paths])")
        if output_dir:
            sp.add_argument("--output-dir", help="override [paths] output_dir")

    sp = sub.add_parser("simulate", help="simulate the building on generated series")
    sp.add_argument("--days", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scenario", choices=SCENARIOS, default="square")
    sp.add_argument("--policy", choices=("bau", "on", "off"), default="bau")
    sp.add_argument("--out")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="train one agent and save it")
    sp.add_argument("--agent", choices=("physq", "physq-wrong", "fqi-nn", "fqi-et"), required=True)
    sp.add_argument("--strategy", choices=("growing", "fixed"), default="growing")
    sp.add_argument("--scenario", choices=SCENARIOS, default="square")
    sp.add_argument("--batch-days", type=int)
    sp.add_argument("--replicate", type=int, default=0)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default="model")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="evaluate a saved agent on the test days")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("mpc", help="solve the perfect-information MPC for one day")
    sp.add_argument("--freq", choices=("hourly", "quarterly"), default="hourly")
    sp.add_argument("--day", type=int, help="day index (default: first test day)")
    sp.add_argument("--scenario", choices=SCENARIOS, default="square")
    sp.add_argument("--grid", type=float, default=DEFAULT_GRID)
    sp.add_argument("--out")
    common(sp)
    sp.set_defaults(func=cmd_mpc)

    for name, func, helptext in (("suite", cmd_suite, "run experiments 1-3"),
                                 ("ablate", cmd_ablate, "run the physics-prior ablation")):
        sp = sub.add_parser(name, help=helptext)
        if name == "suite":
            sp.add_argument("--experiment", type=int, choices=(1, 2, 3), action="append")
        sp.add_argument("--scenario", choices=SCENARIOS, action="append")
        common(sp, output_dir=True)
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    np.set_printoptions(precision=4)
    return args.func(args) or 0
