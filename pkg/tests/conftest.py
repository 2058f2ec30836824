import numpy as np
import pytest

from thermoq.config import ExperimentConfig
from thermoq.harness import BuildingEnv, Controller, build_scenario, run_day
from thermoq.mdp import ExperienceBatch


class RandomController(Controller):
    label = "random"

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def act(self, env, day, step):
        return int(self.rng.integers(2))


def collect_random_batch(days, seed=0, scenario="square"):
    """Random-action transitions with the true mass temperatures alongside."""
    cfg = ExperimentConfig().with_training(train_days=max(days, 1), test_days=1,
                                           batch_ladder=(max(days, 1),))
    sc = build_scenario(cfg, scenario)
    env = BuildingEnv(cfg.building.params, sc)
    batch, mass = ExperienceBatch(seed=seed, days=days), []
    ctrl = RandomController(seed)
    for day in range(days):
        run_day(env, day, ctrl, batch, mass)
    return batch, np.array(mass), sc


@pytest.fixture(scope="session")
def small_batch():
    return collect_random_batch(4, seed=1)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
