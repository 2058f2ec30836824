import csv

import pytest

from thermoq.cli import main
from thermoq.config import (ExperimentConfig, config_from_string, config_to_string,
                            default_config_text, load_config)
from thermoq.harness import (Agent, BauController, MpcController, build_scenario,
                             evaluate_agent, evaluate_controller, held_out_violations,
                             make_fixed_batches, run_experiment_suite, run_growing_batch)

TINY_TEXT = """
[training]
train_days = 6
test_days = 1
retrain_interval = 3
batch_ladder = 2,4,6
replicates = 2
nn_epochs = 3
encoder_epochs = 5
n_estimators = 3
"""


@pytest.fixture(scope="module")
def tiny():
    return config_from_string(TINY_TEXT)


def test_epsilon_schedule():
    t = ExperimentConfig().training
    assert t.epsilon(0) == 0.6
    assert t.epsilon(1) == pytest.approx(0.546)
    assert t.epsilon(10) == pytest.approx(0.6 * 0.91 ** 10)
    assert all(t.epsilon(d) > t.epsilon(d + 1) for d in range(29))


def test_config_round_trip_and_errors(tmp_path):
    cfg = config_from_string(TINY_TEXT)
    assert config_from_string(config_to_string(cfg)) == cfg
    assert config_from_string(default_config_text()) == ExperimentConfig()
    path = tmp_path / "c.ini"
    path.write_text("[building]\nroom_capacity = 3.0\ninitial_t_mass = 19.5\n")
    loaded = load_config(path)
    assert loaded.building.params.room_capacity == 3.0
    assert loaded.building.initial_t_mass == 19.5
    with pytest.raises(ValueError, match="unknown key"):
        config_from_string("[training]\nlearning = 1\n")
    with pytest.raises(ValueError, match="sections"):
        config_from_string("[extra]\na = 1\n")
    with pytest.raises(ValueError):
        config_from_string("[training]\nreplan_daily = perhaps\n")
    with pytest.raises(ValueError):
        config_from_string("[training]\nbatch_ladder = 6,40\n")


def test_scenario_layout(tiny):
    sc = build_scenario(tiny, "square")
    assert sc.test_start == 7 and sc.test_day_indices == [7]
    assert len(sc.prices.values) == 24 * 9
    fc = sc.forecast(7)
    assert fc.slots == 48
    with pytest.raises(ValueError):
        build_scenario(tiny, "spot")


def test_growing_batch_run(tiny):
    sc = build_scenario(tiny, "square")
    snaps = {}
    run = run_growing_batch(tiny, "fqi-et", sc, snapshots=snaps)
    assert len(run.batch) == 144 and run.batch.days == 6
    assert [len(snaps[d]) for d in (2, 4, 6)] == [48, 96, 144]
    assert snaps[4].transitions == run.batch.transitions[:96]
    assert [round(e, 6) for _, _, _, e in run.daily[:2]] == [0.6, 0.546]
    assert held_out_violations(run.batch, sc, run.forecast_days) == []
    again = run_growing_batch(tiny, "fqi-et", sc)
    assert again.batch == run.batch


def test_held_out_audit_detects_leaks(tiny):
    sc = build_scenario(tiny, "square")
    run = run_growing_batch(tiny, "fqi-et", sc)
    assert held_out_violations(run.batch, sc, [sc.test_start])


def test_fixed_batches_and_agent_evaluation(tiny):
    sc = build_scenario(tiny, "belpex")
    ladders = make_fixed_batches(tiny, sc)
    assert len(ladders) == 2
    assert ladders[0]["snapshots"][6] != ladders[1]["snapshots"][6]
    batch = ladders[0]["snapshots"][4]
    for kind in ("physq", "physq-wrong", "fqi-nn", "fqi-et"):
        agent = Agent(kind, 0, tiny.training).train(batch)
        res = evaluate_agent(tiny, sc, agent, 4, 0)
        assert len(res.daily_costs) == 1 and res.cost >= 0
        assert res.t_room_min >= 17.5 and res.heat_above_band_minutes == 0
        if kind.startswith("physq"):
            assert len(res.hidden) == 24


def test_references_respect_comfort(tiny):
    sc = build_scenario(tiny, "square")
    bau = evaluate_controller(tiny, sc, BauController())
    mpc = evaluate_controller(tiny, sc, MpcController(15))
    assert mpc.violation_minutes == 0
    assert mpc.cost <= bau.cost


def test_suite_writes_outputs(tiny, tmp_path):
    cfg = tiny.with_training(batch_ladder=(4, 6), replicates=2, agents=("fqi-et",))
    out = run_experiment_suite(cfg, (2, 3), tmp_path)
    assert not out.failures
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["agent"] for r in rows} >= {"fqi-et", "physq-wrong", "bau", "mpc-quarterly"}
    assert (tmp_path / "summary.txt").exists()
    for exp, kinds in ((2, {"fqi-et"}), (3, {"physq", "physq-wrong"})):
        with open(tmp_path / f"exp{exp}_square.csv") as fh:
            agg = list(csv.DictReader(fh))
        learned = [r for r in agg if r["agent"] in kinds]
        assert {(int(r["batch_days"]), r["agent"]) for r in learned} == {
            (d, k) for d in (4, 6) for k in kinds}
        assert all(int(r["n"]) == 2 for r in learned)
        assert {r["agent"] for r in agg} - kinds == {"bau", "mpc-quarterly"}


def test_cli_simulate_and_mpc(tmp_path, capsys):
    assert main(["simulate", "--days", "2", "--seed", "3", "--out", str(tmp_path / "s.csv")]) == 0
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0][0] == "hour" and len(rows) == 1 + 2 * 25
    assert main(["mpc", "--freq", "quarterly", "--out", str(tmp_path / "m.csv")]) == 0
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert len(rows) == 1 + 96 + 1 and rows[-1][0] == "total"
    assert float(rows[-1][-1]) == pytest.approx(sum(float(r[-1]) for r in rows[1:-1]), abs=1e-4)


def test_cli_train_and_evaluate(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(TINY_TEXT)
    model = tmp_path / "model"
    assert main(["train", "--agent", "physq", "--strategy", "fixed", "--batch-days", "2",
                 "--config", str(cfg), "--out", str(model)]) == 0
    for name in ("batch.txt", "encoder.json", "ensemble.json", "config.ini", "agent.json"):
        assert (model / name).exists()
    out = tmp_path / "e.csv"
    assert main(["evaluate", "--model", str(model), "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[-1][3] == "total" and float(rows[-1][4]) >= 0


def test_config_inline_comments():
    cfg = config_from_string("[building]\nroom_capacity = 3.0   ; kWh/°C\n"
                             "[prices]\nprice_csv =   ; none\n")
    assert cfg.building.params.room_capacity == 3.0 and cfg.prices.price_csv == ""
