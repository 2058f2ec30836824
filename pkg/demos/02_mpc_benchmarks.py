"""
Reference controllers on the square-wave price scenario.

Compares the price-blind thermostat with the perfect-information binary MPC at
hourly and 15-minute resolution over the five test days. Finer control lets
the MPC ride the comfort band closer and shift more heat out of the peak.
"""

from thermoq.config import ExperimentConfig
from thermoq.harness import BauController, MpcController, build_scenario, evaluate_controller

cfg = ExperimentConfig()
for name in ("square", "belpex"):
    scenario = build_scenario(cfg, name)
    print(f"[{name}] test days {scenario.test_day_indices}")
    for ctrl in (BauController(), MpcController(60), MpcController(15)):
        res = evaluate_controller(cfg, scenario, ctrl)
        daily = ", ".join(f"{c:.2f}" for c in res.daily_costs)
        print(f"  {ctrl.label:14s} {res.cost:7.2f} EUR  (per day: {daily}); "
              f"minutes outside band {res.violation_minutes}")
