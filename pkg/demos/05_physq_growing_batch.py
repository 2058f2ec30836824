"""
Learning to heat cheaply from scratch (growing batch).

An agent starts with no data, explores with a decaying epsilon-greedy policy
for 30 days (retraining every 5), and is then evaluated greedily on five
held-out days against the thermostat and the hourly MPC. Pass ``--quick`` for
a shortened run with small training budgets.
"""

import sys
import time

import numpy as np

from thermoq.config import ExperimentConfig
from thermoq.harness import (build_scenario, evaluate_agent, held_out_violations,
                             reference_runs, run_growing_batch)

quick = "--quick" in sys.argv
kind = next((a for a in sys.argv[1:] if not a.startswith("--")), "physq")
cfg = ExperimentConfig()
if quick:
    cfg = cfg.with_training(nn_epochs=60, encoder_epochs=400, n_estimators=20)
scenario = build_scenario(cfg, "square")

start = time.time()
run = run_growing_batch(cfg, kind, scenario)
print(f"{kind}: collected {len(run.batch)} transitions in {time.time() - start:.0f} s")
for day, _, cost, eps in run.daily[::5]:
    print(f"  training day {day:2d}: epsilon {eps:.3f}, cost {cost:.2f} EUR")
leaks = held_out_violations(run.batch, scenario, run.forecast_days)
print(f"held-out audit: {'clean' if not leaks else leaks[:3]}")

res = evaluate_agent(cfg, scenario, run.agent, 30, 0)
refs = reference_runs(cfg, scenario)
print(f"test cost: {kind} {res.cost:.2f}, BAU {refs['bau'].cost:.2f}, "
      f"hourly MPC {refs['mpc-hourly'].cost:.2f}, quarterly MPC {refs['mpc-quarterly'].cost:.2f}")
print(f"comfort: min room temperature {res.t_room_min:.2f} °C, "
      f"{res.violation_minutes} minutes outside the band (backup active)")
if res.hidden is not None:
    print(f"corr(z, T_m) on the test days: {np.corrcoef(res.hidden, res.t_mass)[0, 1]:.3f}")
