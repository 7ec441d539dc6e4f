import time
from types import SimpleNamespace

import pytest
from hypothesis import given, strategies as st

from azsweep import instrumentation as ins
from azsweep.instrumentation import Calibration, PhaseRecorder
from azsweep.params import ParameterSet


def test_record_phase_accumulates():
    rec = PhaseRecorder()
    rec.record_phase(1, "train", 1.0)
    rec.record_phase(1, "train", 1.0)
    assert rec.row(1).train_s == 2.0
    assert rec.row(2).phase_sum == 0.0


def test_rows_per_iteration():
    rec = PhaseRecorder()
    for it in (1, 2, 3):
        rec.record_phase(it, "self_play", 0.5, {"plies": 10})
    rows = rec.rows()
    assert [r.iteration for r in rows] == [1, 2, 3]
    assert all(r.plies == 10 for r in rows)


def test_unknown_phase_or_counter_rejected():
    rec = PhaseRecorder()
    with pytest.raises(ValueError):
        rec.record_phase(1, "lunch", 1.0)
    with pytest.raises(ValueError):
        rec.record_phase(1, "train", 1.0, {"bogus": 1})


def test_timed_context_measures_wall_clock():
    rec = PhaseRecorder()
    with rec.timed(1, "arena") as c:
        time.sleep(0.02)
        c["plies"] = 7
    assert 0.015 < rec.row(1).arena_s < 0.5
    assert rec.row(1).plies == 7


def test_breakdown_csv_round_trip(tmp_path):
    rec = PhaseRecorder()
    rec.record_phase(1, "train", 1.25, {"batches": 4})
    rec.set_total(1, 1.3)
    rec.write_csv(tmp_path / "t.csv")
    header = (tmp_path / "t.csv").read_text().splitlines()[0].split(",")
    assert header == ins.BREAKDOWN_COLUMNS
    rows = ins.read_breakdown_csv(tmp_path / "t.csv")
    assert rows[0].train_s == 1.25 and rows[0].total_s == 1.3 and rows[0].batches == 4


def _example_calib():
    # 640 examples at batchsize 32 is 20 batches per epoch
    return Calibration(t_sim_s=0.001, t_batch_s=0.005, avg_plies=30, avg_examples_per_iter=640)


def test_predict_time_example():
    ps = ParameterSet(iteration=1, episode=10, mctssimu=25, epoch=10, batchsize=32,
                      arenacompare=20)
    assert ins.predict_time(ps, _example_calib()) == pytest.approx(7.5 + 1.0 + 15.0, rel=1e-12)


def test_doubling_episode_doubles_only_self_play():
    calib = _example_calib()
    base = ParameterSet(iteration=1, episode=10, mctssimu=25, epoch=10, batchsize=32, arenacompare=20)
    assert ins.predict_time(base.with_values(episode=20), calib) == pytest.approx(23.5 + 7.5)


def test_zero_arenacompare_zeroes_arena_term():
    ps = SimpleNamespace(iteration=1, episode=10, mctssimu=25, epoch=10, batchsize=32,
                         arenacompare=0, retrainlength=20)
    assert ins.predict_time(ps, _example_calib()) == pytest.approx(8.5)


def test_calibration_must_be_positive():
    with pytest.raises(ValueError):
        Calibration(0.0, 0.1, 30, 100)


@given(st.sampled_from(["iteration", "episode", "mctssimu", "epoch", "arenacompare",
                        "retrainlength", "batchsize"]),
       st.integers(1, 60), st.integers(1, 60))
def test_predict_time_monotone(name, a, b):
    lo, hi = sorted((a, b))
    calib = Calibration(0.0004, 0.003, 28.0, 300.0)
    base = ParameterSet(iteration=20)
    t_lo = ins.predict_time(base.with_values(**{name: lo}), calib)
    t_hi = ins.predict_time(base.with_values(**{name: hi}), calib)
    if name == "batchsize":
        assert t_hi <= t_lo
    else:
        assert t_hi >= t_lo


def test_calibrate_from_probe_rows():
    row = ins.PhaseBreakdown(1, self_play_s=2.0, train_s=0.5, arena_s=1.0, total_s=3.6,
                             episodes=4, self_play_plies=120, self_play_simulations=3000,
                             batches=50, examples=120)
    c = ins.calibrate([row])
    assert c.t_sim_s == pytest.approx(2.0 / 3000)
    assert c.t_batch_s == pytest.approx(0.01)
    assert c.avg_plies == 30 and c.avg_examples_per_iter == 120


@pytest.mark.parametrize("name,times,expected", [
    ("episode", (17.4, 44.0, 87.7), ins.TIME_SENSITIVE),
    ("Cpuct", (50.7, 44.0, 49.1), ins.TIME_FRIENDLY),
    ("flat", (10, 10, 10), ins.TIME_FRIENDLY),
])
def test_classify_examples(name, times, expected):
    assert ins.classify(name, times) == expected


def test_classify_reproduces_published_types():
    rows = ins.published_time_costs()
    assert len(rows) == 12
    for r in rows:
        assert ins.classify(r.parameter, (r.t_min, r.t_default, r.t_max)) == r.type, r.parameter


def test_classify_rejects_bad_input():
    with pytest.raises(ValueError):
        ins.classify("x", (1.0, 0.0, 2.0))
    with pytest.raises(ValueError):
        ins.classify("x", (1.0, 2.0))
