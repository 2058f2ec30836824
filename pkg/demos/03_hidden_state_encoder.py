"""
Recovering the thermal-mass temperature from room-temperature history.

Collects a week of random heating decisions, trains the physics-informed
encoder with the correct first-order prior and with the deliberately wrong
prior z = ceil(T_r), then checks both against the true (never observed) mass
temperature on a held-out thermostat episode.
"""

import numpy as np

from thermoq.config import ExperimentConfig
from thermoq.encoder import EncoderConfig, train_encoder
from thermoq.harness import (BauController, Controller, build_scenario, evaluate_controller,
                             make_env, run_day)
from thermoq.mdp import ExperienceBatch


class Coin(Controller):
    label = "random"

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def act(self, env, day, step):
        return int(self.rng.integers(2))


cfg = ExperimentConfig().with_training(train_days=10, test_days=2, batch_ladder=(10,))
scenario = build_scenario(cfg, "square")
env = make_env(cfg, scenario)
batch = ExperienceBatch(seed=0)
coin = Coin(0)
for day in range(cfg.training.train_days):
    run_day(env, day, coin, batch)
print(f"collected {len(batch)} hourly transitions")

for selector in ("correct", "wrong"):
    bundle, hist = train_encoder(batch, EncoderConfig(epochs=1500), selector, u_scale=10.0)
    held = evaluate_controller(cfg, scenario, BauController(), encoder=bundle)
    r = np.corrcoef(held.hidden, held.t_mass)[0, 1]
    print(f"{selector:8s} prior: {len(hist['total'])} epochs, final loss {hist['total'][-1]:.4f}, "
          f"held-out corr(z, T_m) = {r:.3f}")
    if selector == "correct":
        print("  learned coefficients:", {k: round(v, 4) for k, v in bundle.omega_dict().items()})
