"""Wall-clock accounting per training phase, a cost predictor, and the
time-sensitivity classifier."""

from __future__ import annotations

import csv
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Union

PHASES = ("self_play", "train", "arena")
SENSITIVITY_RATIO = 1.25
TIME_SENSITIVE = "time_sensitive"
TIME_FRIENDLY = "time_friendly"

BREAKDOWN_COLUMNS = ["iteration", "self_play_s", "train_s", "arena_s", "total_s",
                     "plies", "simulations", "batches"]


@dataclass
class PhaseBreakdown:
    iteration: int
    self_play_s: float = 0.0
    train_s: float = 0.0
    arena_s: float = 0.0
    total_s: float = 0.0
    episodes: int = 0
    plies: int = 0
    simulations: int = 0
    batches: int = 0
    examples: int = 0
    self_play_plies: int = 0
    self_play_simulations: int = 0

    @property
    def phase_sum(self) -> float:
        return self.self_play_s + self.train_s + self.arena_s


class PhaseRecorder:
    """Accumulates phase durations and counters, one row per iteration."""

    def __init__(self):
        self._rows: Dict[int, PhaseBreakdown] = {}

    def row(self, iteration: int) -> PhaseBreakdown:
        if iteration not in self._rows:
            self._rows[iteration] = PhaseBreakdown(iteration)
        return self._rows[iteration]

    def record_phase(self, iteration: int, phase: str, duration_s: float,
                     counters: Optional[Mapping[str, int]] = None) -> None:
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}; expected one of {PHASES}")
        row = self.row(iteration)
        setattr(row, f"{phase}_s", getattr(row, f"{phase}_s") + duration_s)
        for key, val in (counters or {}).items():
            if not hasattr(row, key) or key.endswith("_s") or key == "iteration":
                raise ValueError(f"unknown counter {key!r}")
            setattr(row, key, getattr(row, key) + val)
            if phase == "self_play" and key in ("plies", "simulations"):
                setattr(row, f"self_play_{key}", getattr(row, f"self_play_{key}") + val)

    def set_total(self, iteration: int, total_s: float) -> None:
        self.row(iteration).total_s = total_s

    @contextmanager
    def timed(self, iteration: int, phase: str, counters: Optional[Dict[str, int]] = None):
        """Time a block with the monotonic clock. The caller may fill ``counters``
        inside the block; they are recorded on exit."""
        counters = {} if counters is None else counters
        start = time.perf_counter()
        try:
            yield counters
        finally:
            self.record_phase(iteration, phase, time.perf_counter() - start, counters)

    def rows(self) -> List[PhaseBreakdown]:
        return [self._rows[k] for k in sorted(self._rows)]

    def write_csv(self, path: Union[str, Path]) -> None:
        write_breakdown_csv(path, self.rows())


def write_breakdown_csv(path, rows: Sequence[PhaseBreakdown]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BREAKDOWN_COLUMNS)
        for r in rows:
            w.writerow([r.iteration, f"{r.self_play_s:.6f}", f"{r.train_s:.6f}",
                        f"{r.arena_s:.6f}", f"{r.total_s:.6f}", r.plies, r.simulations,
                        r.batches])


def read_breakdown_csv(path) -> List[PhaseBreakdown]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(PhaseBreakdown(
                iteration=int(rec["iteration"]), self_play_s=float(rec["self_play_s"]),
                train_s=float(rec["train_s"]), arena_s=float(rec["arena_s"]),
                total_s=float(rec["total_s"]), plies=int(rec["plies"]),
                simulations=int(rec["simulations"]), batches=int(rec["batches"])))
    return out


@dataclass
class Calibration:
    t_sim_s: float
    t_batch_s: float
    avg_plies: float
    avg_examples_per_iter: float

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"calibration value {f.name} must be positive")


def calibrate(rows: Sequence[PhaseBreakdown]) -> Calibration:
    """Per-unit costs measured from a short probe run."""
    sims = sum(r.self_play_simulations for r in rows)
    plies = sum(r.self_play_plies for r in rows)
    episodes = sum(r.episodes for r in rows)
    batches = sum(r.batches for r in rows)
    if not (sims and episodes and batches):
        raise ValueError("probe rows lack self-play or training counters")
    return Calibration(
        t_sim_s=sum(r.self_play_s for r in rows) / sims,
        t_batch_s=sum(r.train_s for r in rows) / batches,
        avg_plies=plies / episodes,
        avg_examples_per_iter=sum(r.examples for r in rows) / len(rows),
    )


def predict_time(ps, calib: Calibration) -> float:
    """Predicted seconds for a full run of parameter set ``ps``.

    Self-play and arena cost plies x simulations per game. Training in
    iteration ``i`` passes ``epoch`` times over a window of
    ``min(retrainlength, i)`` iterations of examples.
    """
    sim_per_game = calib.avg_plies * ps.mctssimu * calib.t_sim_s
    self_play = ps.episode * sim_per_game
    arena = ps.arenacompare * sim_per_game
    train = 0.0
    for i in range(1, ps.iteration + 1):
        window = min(ps.retrainlength, i)
        batches = math.ceil(window * calib.avg_examples_per_iter / ps.batchsize)
        train += ps.epoch * batches * calib.t_batch_s
    return ps.iteration * (self_play + arena) + train


def classify(parameter_name: str, times) -> str:
    """``time_sensitive`` when the slowest of the three settings takes more than
    1.25x the fastest, else ``time_friendly``."""
    vals = list(times.values()) if isinstance(times, Mapping) else list(times)
    if len(vals) != 3 or min(vals) <= 0:
        raise ValueError(f"{parameter_name}: need three positive times, got {vals}")
    return TIME_SENSITIVE if max(vals) / min(vals) > SENSITIVITY_RATIO else TIME_FRIENDLY


@dataclass
class TimeCostRow:
    parameter: str
    t_min: float
    t_default: float
    t_max: float
    type: str = ""


def read_time_cost_csv(path) -> List[TimeCostRow]:
    with open(path, newline="") as fh:
        return [TimeCostRow(r["parameter"], float(r["t_min"]), float(r["t_default"]),
                            float(r["t_max"]), r.get("type", "") or "")
                for r in csv.DictReader(fh)]


def published_time_costs() -> List[TimeCostRow]:
    """Hours per (min, default, max) setting from the original 6x6 sweep, with
    the type each parameter was assigned there."""
    with resources.as_file(resources.files("azsweep") / "data" / "published_time_cost_hours.csv") as p:
        return read_time_cost_csv(p)
