import math

import pytest

from azsweep import plotting, sweep
from azsweep.params import DEFAULT_GRID, PARAMETER_NAMES, ConfigError, ParameterSet
from azsweep.sweep import RunOutcome, SweepGrid, SweepReport

TINY_BUDGET = dict(board_size=4, iteration=2, mctssimu=4, arenacompare=4, epoch=2)


def _diff(a: ParameterSet, b: ParameterSet):
    da, db = a.to_dict(), b.to_dict()
    return [k for k in da if da[k] != db[k]]


def test_full_grid_gives_25_one_at_a_time_runs():
    base = ParameterSet()
    runs = sweep.generate_runs(base, SweepGrid())
    assert len(runs) == 25
    assert runs[0].parameter is None and runs[0].ps == base
    for r in runs[1:]:
        assert _diff(r.ps, base) == [r.parameter]
        assert r.ps.seed == base.seed
    assert {r.parameter for r in runs[1:]} == set(PARAMETER_NAMES)


def test_single_parameter_grid_gives_three_runs():
    runs = sweep.generate_runs(ParameterSet(), SweepGrid().restricted(["Cpuct"]))
    assert [r.name for r in runs] == ["baseline", "Cpuct_min", "Cpuct_max"]
    assert _diff(runs[1].ps, runs[0].ps) == ["Cpuct"] and runs[1].ps.Cpuct == 0.5


def test_grid_default_values_are_the_parameter_defaults():
    base = ParameterSet()
    for name, (_, default, _) in DEFAULT_GRID.items():
        assert getattr(base, name) == default


@pytest.mark.parametrize("values,key", [
    ({"dropout": (0.2, 0.3, 1.5)}, "dropout"),
    ({"episode": (0, 50, 100)}, "episode"),
    ({"epoch": (15, 10, 5)}, "epoch"),
    ({"weight_decay": (1, 2, 3)}, "weight_decay"),
])
def test_bad_grid_names_the_parameter(values, key):
    with pytest.raises(ConfigError) as info:
        SweepGrid(values)
    assert info.value.key == key


def test_budget_keeps_variant_ratios():
    base = ParameterSet()
    runs = {r.name: r for r in sweep.generate_runs(base, SweepGrid())}
    budget = {"iteration": 15, "episode": 10}
    scaled = {n: sweep.apply_budget(r, base, budget).ps for n, r in runs.items()}
    assert scaled["baseline"].episode == 10 and scaled["baseline"].iteration == 15
    assert scaled["episode_min"].episode == 2 and scaled["episode_max"].episode == 20
    assert scaled["episode_max"].iteration == 15
    assert scaled["Cpuct_min"].episode == 10 and scaled["Cpuct_min"].Cpuct == 0.5
    with pytest.raises(ConfigError):
        sweep.apply_budget(runs["baseline"], base, {"nope": 1})


def _outcome(name, param, value, default, loss, elo, t):
    return RunOutcome(name, param, value, default, value, "ok", loss, elo, t, 3, 1)


def test_summary_rules():
    report = SweepReport([
        _outcome("baseline", None, None, None, 1.00, 100.0, 44.0),
        _outcome("episode_min", "episode", 10, 50, 1.00, 90.0, 17.4),
        _outcome("episode_max", "episode", 100, 50, 1.02, 110.0, 87.7),
        _outcome("epoch_min", "epoch", 5, 10, 1.30, 0.0, 44.0),
        _outcome("epoch_max", "epoch", 15, 10, 0.50, 300.0, 44.5),
    ])
    rows = {r.parameter: r for r in sweep.summarize(report)}
    ep = rows["episode"]
    assert ep.loss == "similar" and ep.elo == "similar"
    assert ep.type == "time_sensitive" and ep.time == "10"
    assert ep.values == (10, 50, 100)
    e = rows["epoch"]
    assert e.loss == "15" and e.elo == "15"
    assert e.type == "time_friendly" and e.time == "similar"
    assert sweep.summarize(report) == sweep.summarize(report)


def test_failed_runs_are_excluded_and_parallel_disables_time():
    report = SweepReport([
        _outcome("baseline", None, None, None, 1.0, 0.0, 10.0),
        _outcome("Cpuct_min", "Cpuct", 0.5, 1.0, 2.0, 0.0, 10.0),
        RunOutcome("Cpuct_max", "Cpuct", 2.0, 1.0, 2.0, "failed", error="boom"),
    ])
    row = sweep.summarize(report)[0]
    assert row.loss == "1"  # the baseline (Cpuct 1.0) has the lower loss
    assert row.type == "n/a"
    report.outcomes[2] = _outcome("Cpuct_max", "Cpuct", 2.0, 1.0, 3.0, 0.0, 30.0)
    report.parallel = True
    assert sweep.summarize(report)[0].type == "n/a"


def test_manifest_parsing():
    m = sweep.parse_manifest("""
[baseline]
seed = 3
board_size = 4
[grid]
episode = 10, 50, 100
[budget]
iteration = 2   # tiny
[sweep]
parallel = true
""")
    assert m.baseline.seed == 3 and m.baseline.board_size == 4
    assert list(m.grid.values) == ["episode"]
    assert m.budget == {"iteration": 2}
    assert m.parallel and m.rating_games == 20
    default = sweep.parse_manifest(sweep.default_manifest_text())
    assert len(sweep.generate_runs(default.baseline, default.grid)) == 25
    assert default.budget == {"iteration": 15, "episode": 10, "mctssimu": 25, "arenacompare": 10}


@pytest.mark.parametrize("text,key", [
    ("[grid]\nepisode = 10, 50\n", "episode"),
    ("[baseline]\nCpuct = -1\n", "Cpuct"),
    ("[extras]\na = 1\n", "extras"),
    ("[sweep]\nturbo = 1\n", "turbo"),
])
def test_bad_manifest(text, key):
    with pytest.raises(ConfigError) as info:
        sweep.parse_manifest(text)
    assert info.value.key == key


def test_mini_sweep_runs_and_exports(tmp_path):
    base = ParameterSet(board_size=4, seed=1)
    runs = sweep.generate_runs(base, SweepGrid().restricted(["episode"]))
    budget = dict(TINY_BUDGET, episode=4)
    budget.pop("board_size")
    report = sweep.run_sweep(runs, budget, tmp_path, rating_games=2)
    assert len(report.outcomes) == 3 and all(o.ok for o in report.outcomes)
    assert all(o.iterations == 2 for o in report.outcomes)
    rows = sweep.summarize(report)
    assert len(rows) == 1 and rows[0].type in ("time_sensitive", "time_friendly")
    for name in (sweep.REPORT_FILE, sweep.SUMMARY_FILE, sweep.TABLE_FILE, "baseline/metrics.csv",
                 "episode_max/elo.csv", "baseline/config.txt"):
        assert (tmp_path / name).exists(), name
    again = sweep.load_sweep_dir(tmp_path)
    assert [o.final_loss for o in again.outcomes] == [o.final_loss for o in report.outcomes]
    written = plotting.export_sweep(tmp_path)
    assert {p.name for p in written} >= {"sweep_loss.csv", "sweep_time.png"}

    # identical seeds and no parallelism give identical loss columns
    report2 = sweep.run_sweep(runs, budget, None, rating_games=0)
    assert [o.final_loss for o in report2.outcomes] == [o.final_loss for o in report.outcomes]


def test_failed_run_does_not_stop_the_sweep(monkeypatch):
    from azsweep import pipeline
    real = pipeline.run_training

    def flaky(ps, **kw):
        if ps.Cpuct == 2.0:
            raise pipeline.TrainingError("synthetic failure", [])
        return real(ps, **kw)

    monkeypatch.setattr(pipeline, "run_training", flaky)
    base = ParameterSet(board_size=4, iteration=1, episode=1, mctssimu=2, arenacompare=2, epoch=1)
    report = sweep.run_sweep(sweep.generate_runs(base, SweepGrid().restricted(["Cpuct"])),
                             rating_games=0)
    assert [o.status for o in report.outcomes] == ["ok", "ok", "failed"]
    assert "synthetic failure" in report.outcomes[2].error
    assert math.isnan(report.outcomes[2].final_loss)
