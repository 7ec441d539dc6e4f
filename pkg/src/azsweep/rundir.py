"""Run directory layout.

::

    <run>/config.txt          key = value snapshot that reproduces the run
    <run>/metrics.csv         one row per iteration (losses, arena result)
    <run>/epoch_losses.csv    one row per (iteration, epoch)
    <run>/time_breakdown.csv  phase seconds and counters per iteration
    <run>/events.jsonl        one JSON object per iteration
    <run>/games.csv           rating games: checkpoint_id, opponent_id, score
    <run>/elo.csv             iteration, rating of the best model
    <run>/iter_<k>.ckpt       candidate trained in iteration k (iter_0 is the initial model)
    <run>/best.ckpt           best model so far

Everything except time_breakdown.csv and the timing fields of events.jsonl
is a deterministic function of the config.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Union

METRICS_COLUMNS = ["iteration", "loss_pi", "loss_v", "loss_total", "wins", "losses", "draws",
                   "accepted", "examples"]
EPOCH_COLUMNS = ["iteration", "epoch", "loss_pi", "loss_v", "loss_total"]

CONFIG_FILE = "config.txt"
METRICS_FILE = "metrics.csv"
EPOCH_FILE = "epoch_losses.csv"
BREAKDOWN_FILE = "time_breakdown.csv"
EVENTS_FILE = "events.jsonl"
GAMES_FILE = "games.csv"
ELO_FILE = "elo.csv"


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_config(path: Union[str, Path], values: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in values.items():
            if isinstance(val, (list, tuple)):
                val = ",".join(str(v) for v in val)
            fh.write(f"{key} = {_fmt(val)}\n")


def read_config(path: Union[str, Path]) -> Dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ValueError(f"{path}:{lineno}: empty key")
            out[key] = val
    return out


class RunWriter:
    """Record sink that appends each iteration's rows as soon as it arrives."""

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        for name, cols in ((METRICS_FILE, METRICS_COLUMNS), (EPOCH_FILE, EPOCH_COLUMNS)):
            with open(self.run_dir / name, "w", newline="") as fh:
                csv.writer(fh).writerow(cols)
        (self.run_dir / EVENTS_FILE).write_text("")

    def __call__(self, record) -> None:
        final_pi, final_v = record.epoch_losses[-1]
        with open(self.run_dir / METRICS_FILE, "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(v) for v in (
                record.iteration, final_pi, final_v, final_pi + final_v, record.wins,
                record.losses, record.draws, record.accepted, record.examples_trained)])
        with open(self.run_dir / EPOCH_FILE, "a", newline="") as fh:
            w = csv.writer(fh)
            for e, (lp, lv) in enumerate(record.epoch_losses, 1):
                w.writerow([_fmt(v) for v in (record.iteration, e, lp, lv, lp + lv)])
        with open(self.run_dir / EVENTS_FILE, "a") as fh:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_metrics(run_dir: Union[str, Path]) -> List[Dict[str, float]]:
    rows = read_csv(Path(run_dir) / METRICS_FILE)
    return [{k: float(v) for k, v in r.items()} for r in rows]


def read_epoch_losses(run_dir: Union[str, Path]) -> List[Dict[str, float]]:
    rows = read_csv(Path(run_dir) / EPOCH_FILE)
    return [{k: float(v) for k, v in r.items()} for r in rows]


def read_events(run_dir: Union[str, Path]) -> List[dict]:
    with open(Path(run_dir) / EVENTS_FILE) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path: Union[str, Path], header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(v) for v in row])
