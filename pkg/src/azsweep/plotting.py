"""Tidy series exports and matplotlib figures for runs and sweeps.

Every exported CSV has the columns ``x, y, series`` so any plotting tool can
read it. Figures are written next to the CSVs with the same stem.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

from . import instrumentation, rundir, sweep  # noqa: E402

Series = List[Tuple[float, float, str]]
TIDY_COLUMNS = ["x", "y", "series"]

RUN_EXPORTS = ("loss_by_epoch", "loss_by_iteration", "elo_by_iteration", "time_breakdown")


class ExportError(Exception):
    """Raised with one message per unreadable input file."""

    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


def _load(problems: List[str], path: Path, reader):
    if not path.exists():
        problems.append(f"{path.name}: missing")
        return None
    try:
        return reader(path)
    except (ValueError, KeyError, TypeError) as exc:
        problems.append(f"{path.name}: unreadable ({exc})")
        return None


def run_series(run_dir: Union[str, Path]) -> Tuple[Dict[str, Series], List[str]]:
    """All tidy series of a run directory, plus a list of problems found."""
    run_dir = Path(run_dir)
    problems: List[str] = []
    out: Dict[str, Series] = OrderedDict()

    epochs = _load(problems, run_dir / rundir.EPOCH_FILE, lambda p: rundir.read_epoch_losses(p.parent))
    if epochs is not None:
        per_iter = max((int(r["epoch"]) for r in epochs), default=1)
        rows: Series = []
        for r in epochs:
            x = (int(r["iteration"]) - 1) * per_iter + int(r["epoch"])
            for key in ("loss_pi", "loss_v", "loss_total"):
                rows.append((x, r[key], key))
        out["loss_by_epoch"] = rows

    metrics = _load(problems, run_dir / rundir.METRICS_FILE, lambda p: rundir.read_metrics(p.parent))
    if metrics is not None:
        out["loss_by_iteration"] = [(int(r["iteration"]), r[k], k) for r in metrics
                                    for k in ("loss_pi", "loss_v", "loss_total")]

    elo = _load(problems, run_dir / rundir.ELO_FILE, rundir.read_csv)
    if elo is not None:
        out["elo_by_iteration"] = [(int(r["iteration"]), float(r["rating"]), "elo") for r in elo]

    times = _load(problems, run_dir / rundir.BREAKDOWN_FILE, instrumentation.read_breakdown_csv)
    if times is not None:
        out["time_breakdown"] = [(r.iteration, getattr(r, k), k) for r in times
                                 for k in ("self_play_s", "train_s", "arena_s", "total_s")]
    return out, problems


def sweep_series(sweep_dir: Union[str, Path]) -> Dict[str, Series]:
    """Per-objective series of a sweep: x is the setting label (min/default/max)."""
    report = sweep.load_sweep_dir(sweep_dir)
    base = report.baseline()
    out: Dict[str, Series] = OrderedDict((k, []) for k in ("sweep_loss", "sweep_elo", "sweep_time"))
    params = [p for p in sweep.PARAMETER_NAMES if any(o.parameter == p for o in report.outcomes)]
    for p in params:
        for tag in ("min", "default", "max"):
            o = base if tag == "default" else next(
                (o for o in report.outcomes if o.name == f"{p}_{tag}"), None)
            if o is None or not o.ok:
                continue
            for key, attr in (("sweep_loss", "final_loss"), ("sweep_elo", "final_elo"),
                              ("sweep_time", "time_s")):
                out[key].append((tag, getattr(o, attr), p))
    return out


def write_tidy_csv(path: Union[str, Path], rows: Series) -> None:
    rundir.write_csv(path, TIDY_COLUMNS, rows)


def _group(rows: Series):
    groups: Dict[str, Tuple[list, list]] = OrderedDict()
    for x, y, s in rows:
        xs, ys = groups.setdefault(s, ([], []))
        xs.append(x)
        ys.append(y)
    return groups


def _line_figure(rows: Series, title: str, xlabel: str, ylabel: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, (xs, ys) in _group(rows).items():
        ax.plot(xs, ys, marker="." if len(xs) < 60 else None, label=label)
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if rows:
        ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _stacked_time_figure(rows: Series, path: Path) -> None:
    groups = _group(rows)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    bottom = None
    for phase in ("self_play_s", "train_s", "arena_s"):
        if phase not in groups:
            continue
        xs, ys = groups[phase]
        ax.bar(xs, ys, bottom=bottom, label=phase[:-2])
        bottom = ys if bottom is None else [a + b for a, b in zip(bottom, ys)]
    if "total_s" in groups:
        xs, ys = groups["total_s"]
        ax.plot(xs, ys, color="black", marker="_", markersize=18, linestyle="none",
                label="measured total")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_title("Time per iteration by phase")
    ax.set_xlabel("iteration")
    ax.set_ylabel("seconds")
    if rows:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _sweep_figure(rows: Series, title: str, ylabel: str, path: Path) -> None:
    groups = _group(rows)
    params = list(groups)
    fig, ax = plt.subplots(figsize=(max(6.4, 0.8 * len(params) + 2), 4.0))
    width = 0.27
    for j, tag in enumerate(("min", "default", "max")):
        xs, ys = [], []
        for i, p in enumerate(params):
            for x, y in zip(*groups[p]):
                if x == tag and not math.isnan(y):
                    xs.append(i + (j - 1) * width)
                    ys.append(y)
        ax.bar(xs, ys, width=width, label=tag)
    ax.set_xticks(range(len(params)))
    ax.set_xticklabels(params, rotation=45, ha="right")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    if params:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


_RUN_FIGURES = {
    "loss_by_epoch": ("Training loss per epoch", "epoch (cumulative)", "loss"),
    "loss_by_iteration": ("Training loss per iteration", "iteration", "loss"),
    "elo_by_iteration": ("Elo of the best model", "iteration", "Elo"),
}
_SWEEP_FIGURES = {
    "sweep_loss": ("Final loss by setting", "loss"),
    "sweep_elo": ("Final Elo by setting", "Elo"),
    "sweep_time": ("Training time by setting", "seconds"),
}


def export_run(run_dir: Union[str, Path], out_dir: Union[str, Path, None] = None) -> List[Path]:
    """Write the tidy CSVs and PNGs of a run; raises ExportError after writing
    whatever was readable if any input is missing or corrupt."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir / "plots"
    out.mkdir(parents=True, exist_ok=True)
    series, problems = run_series(run_dir)
    written = []
    for name, rows in series.items():
        csv_path = out / f"{name}.csv"
        write_tidy_csv(csv_path, rows)
        png = out / f"{name}.png"
        if name == "time_breakdown":
            _stacked_time_figure(rows, png)
        else:
            _line_figure(rows, *_RUN_FIGURES[name], png)
        written += [csv_path, png]
    if problems:
        raise ExportError(problems)
    return written


def export_sweep(sweep_dir: Union[str, Path], out_dir: Union[str, Path, None] = None) -> List[Path]:
    sweep_dir = Path(sweep_dir)
    out = Path(out_dir) if out_dir is not None else sweep_dir / "plots"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rows in sweep_series(sweep_dir).items():
        csv_path = out / f"{name}.csv"
        write_tidy_csv(csv_path, rows)
        png = out / f"{name}.png"
        _sweep_figure(rows, *_SWEEP_FIGURES[name], png)
        written += [csv_path, png]
    return written


def published_time_figure(path: Union[str, Path]) -> Path:
    """Bar chart of the bundled published time costs (hours) per setting."""
    rows = [(tag, getattr(r, f"t_{tag}"), r.parameter)
            for r in instrumentation.published_time_costs() for tag in ("min", "default", "max")]
    _sweep_figure(rows, "Published time cost by setting", "hours", Path(path))
    return Path(path)
