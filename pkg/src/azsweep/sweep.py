"""One-parameter-at-a-time sweeps over the twelve training parameters.

A sweep is one baseline run plus, for every swept parameter, a run at its
minimum and one at its maximum with everything else at baseline. Each run
trains a model, rates its accepted checkpoints and reports three objectives:
final loss, final Elo and wall-clock time.

Manifest format (INI)::

    [baseline]          # any ParameterSet field; unlisted fields keep defaults
    seed = 0
    board_size = 6

    [grid]              # parameter = min, default, max; omit the section to sweep all twelve
    episode = 10, 50, 100

    [budget]            # desk-scale overrides, see apply_budget
    iteration = 15

    [sweep]
    parallel = false
    rating_games = 20
"""

from __future__ import annotations

import configparser
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import instrumentation, pipeline, rundir
from .params import DEFAULT_GRID, FIELD_TYPES, PARAMETER_NAMES, ConfigError, ParameterSet, coerce

log = logging.getLogger(__name__)

LOSS_TOLERANCE = 0.05
ELO_TOLERANCE = 50.0
LOSS_SMOOTHING = 3
SIMILAR = "similar"
NOT_AVAILABLE = "n/a"

REPORT_COLUMNS = ["run", "parameter", "value", "default", "run_value", "status", "final_loss",
                  "final_elo", "time_s", "iterations", "accepted", "error"]
REPORT_FILE = "sweep_report.csv"
SUMMARY_FILE = "sweep_summary.csv"
TABLE_FILE = "sweep_summary.txt"
META_FILE = "sweep.json"
SUMMARY_COLUMNS = ["parameter", "min", "default", "max", "loss", "elo", "time", "type",
                   "time_ratio"]


@dataclass
class SweepGrid:
    values: Dict[str, Tuple] = field(default_factory=lambda: dict(DEFAULT_GRID))

    def __post_init__(self):
        for name, triple in self.values.items():
            if name not in PARAMETER_NAMES:
                raise ConfigError(name, "not a sweepable parameter")
            if len(triple) != 3:
                raise ConfigError(name, f"needs (min, default, max), got {triple!r}")
            lo, mid, hi = triple
            if not lo <= mid <= hi:
                raise ConfigError(name, f"values must satisfy min <= default <= max, got {triple!r}")
            for v in triple:
                ParameterSet(**{name: v})

    def restricted(self, names: Sequence[str]) -> "SweepGrid":
        return SweepGrid({n: self.values[n] for n in names})


@dataclass(frozen=True)
class SweepRun:
    """One planned run. ``parameter`` is None for the baseline; ``default`` is
    the baseline setting of ``parameter`` before any budget scaling."""
    name: str
    parameter: Optional[str]
    value: object
    ps: ParameterSet
    default: object = None


def generate_runs(baseline: ParameterSet, grid: SweepGrid) -> List[SweepRun]:
    """Baseline first, then the min and max variant of each grid parameter in
    canonical order. The baseline stands in for every default value."""
    runs = [SweepRun("baseline", None, None, baseline)]
    for name in PARAMETER_NAMES:
        if name not in grid.values:
            continue
        lo, _, hi = grid.values[name]
        for tag, v in (("min", lo), ("max", hi)):
            runs.append(SweepRun(f"{name}_{tag}", name, v, baseline.with_values(**{name: v}),
                                 getattr(baseline, name)))
    return runs


def apply_budget(run: SweepRun, baseline: ParameterSet,
                 overrides: Mapping[str, object]) -> SweepRun:
    """Scale a run down to a desk budget.

    Every overridden parameter is set to its override value, except in a run
    that varies that same parameter: there the variant keeps its ratio to the
    baseline value, so min:default:max survives the scaling. Counts are
    rounded and kept at 1 or more.
    """
    changes = {}
    for key, target in overrides.items():
        if key not in FIELD_TYPES:
            raise ConfigError(key, "unknown parameter in budget overrides")
        if key == run.parameter:
            scaled = getattr(run.ps, key) * target / getattr(baseline, key)
            if FIELD_TYPES[key] is int:
                scaled = max(1, int(round(scaled)))
            changes[key] = scaled
        else:
            changes[key] = target
    return SweepRun(run.name, run.parameter, run.value, run.ps.with_values(**changes), run.default)


@dataclass
class RunOutcome:
    name: str
    parameter: Optional[str]
    value: object
    default: object
    run_value: object
    status: str
    final_loss: float = float("nan")
    final_elo: float = float("nan")
    time_s: float = float("nan")
    iterations: int = 0
    accepted: int = 0
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepReport:
    outcomes: List[RunOutcome]
    parallel: bool = False
    budget: Dict[str, object] = field(default_factory=dict)

    def baseline(self) -> Optional[RunOutcome]:
        for o in self.outcomes:
            if o.parameter is None:
                return o
        return None


def smoothed_final_loss(losses: Sequence[float], window: int = LOSS_SMOOTHING) -> float:
    tail = list(losses)[-window:]
    return float(np.mean(tail)) if tail else float("nan")


def _execute(job) -> RunOutcome:
    run, run_dir, rating_games, workers = job
    value = run.value
    run_value = getattr(run.ps, run.parameter) if run.parameter else None
    try:
        if run_dir is not None:
            Path(run_dir).mkdir(parents=True, exist_ok=True)
            rundir.write_config(Path(run_dir) / rundir.CONFIG_FILE, run.ps.to_dict())
        result = pipeline.run_training(run.ps, run_dir=run_dir, rate=rating_games > 0,
                                       rating_games=rating_games, workers=workers)
    except Exception as exc:  # a failed run is reported, not fatal
        log.warning("run %s failed: %s", run.name, exc)
        n = len(getattr(exc, "records", []) or [])
        return RunOutcome(run.name, run.parameter, value, run.default, run_value, "failed",
                          iterations=n, error=f"{type(exc).__name__}: {exc}".splitlines()[0])
    recs = result.records
    elo = recs[-1].elo if recs and recs[-1].elo is not None else float("nan")
    return RunOutcome(
        run.name, run.parameter, value, run.default, run_value, "ok",
        final_loss=smoothed_final_loss([r.loss_total for r in recs]),
        final_elo=elo, time_s=float(sum(r.total_s for r in recs)), iterations=len(recs),
        accepted=sum(r.accepted for r in recs))


def run_sweep(runs: Sequence[SweepRun], budget_overrides: Optional[Mapping[str, object]] = None,
              out_dir: Union[str, Path, None] = None, parallel: bool = False,
              rating_games: int = 20, workers: int = 1, progress=None) -> SweepReport:
    """Execute ``runs`` (baseline first, as from generate_runs).

    Runs go one after another so their timings are comparable. ``parallel``
    runs them in separate processes instead; the report then carries no time
    classification. ``progress`` is called with each finished RunOutcome.
    """
    budget = dict(budget_overrides or {})
    base = next((r.ps for r in runs if r.parameter is None), None)
    if base is None:
        raise ValueError("sweep needs a baseline run")
    planned = [apply_budget(r, base, budget) for r in runs]
    out = Path(out_dir) if out_dir is not None else None
    jobs = [(r, (out / r.name) if out is not None else None, rating_games,
             1 if parallel else workers) for r in planned]
    outcomes: List[RunOutcome] = []
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=max(2, workers)) as pool:
            for o in pool.map(_execute, jobs):
                outcomes.append(o)
                if progress:
                    progress(o)
    else:
        for job in jobs:
            o = _execute(job)
            outcomes.append(o)
            if progress:
                progress(o)
    report = SweepReport(outcomes, parallel, budget)
    if out is not None:
        write_sweep_dir(out, report)
    return report


def write_sweep_dir(out: Union[str, Path], report: SweepReport) -> List["SummaryRow"]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / META_FILE).write_text(json.dumps({"parallel": report.parallel, "budget": report.budget},
                                            sort_keys=True) + "\n")
    write_report_csv(out / REPORT_FILE, report)
    summary = summarize(report)
    write_summary_csv(out / SUMMARY_FILE, summary)
    (out / TABLE_FILE).write_text(render_table(summary) + "\n")
    return summary


def load_sweep_dir(path: Union[str, Path]) -> SweepReport:
    path = Path(path)
    report = read_report_csv(path / REPORT_FILE)
    if (path / META_FILE).exists():
        meta = json.loads((path / META_FILE).read_text())
        report.parallel = bool(meta.get("parallel", False))
        report.budget = dict(meta.get("budget", {}))
    return report


@dataclass
class SummaryRow:
    parameter: str
    values: Tuple[object, object, object]
    loss: str
    elo: str
    time: str
    type: str
    time_ratio: float = float("nan")


def _pick(values, scores, tolerance, best) -> str:
    pairs = [(v, s) for v, s in zip(values, scores) if np.isfinite(s)]
    if len(pairs) < 2:
        return NOT_AVAILABLE
    ss = [s for _, s in pairs]
    if max(ss) - min(ss) < tolerance:
        return SIMILAR
    return _fmt_value(best(pairs, key=lambda p: p[1])[0])


def _fmt_value(v) -> str:
    if isinstance(v, float) and v.is_integer() and abs(v) >= 1:
        return str(int(v))
    return str(v)


def summarize(report: SweepReport) -> List[SummaryRow]:
    """Per-parameter best value for each objective plus the time-sensitivity type.

    Loss and Elo cells read "similar" when the spread over the three settings
    is under 0.05 and 50 respectively. The time cell names the cheapest value
    for a time-sensitive parameter and reads "similar" otherwise.
    """
    base = report.baseline()
    rows = []
    if base is None or not base.ok:
        return rows
    seen = [p for p in PARAMETER_NAMES if any(o.parameter == p for o in report.outcomes)]
    for p in seen:
        planned = [o for o in report.outcomes if o.parameter == p]
        lo = next((o for o in planned if o.name.endswith("_min")), None)
        hi = next((o for o in planned if o.name.endswith("_max")), None)
        default = planned[0].default
        triple = [(o.value if o else None, o if o and o.ok else None) for o in (lo, None, hi)]
        triple[1] = (default, base)
        triple = [(v, o) for v, o in triple if o is not None]
        values = [v for v, _ in triple]
        loss = _pick(values, [o.final_loss for _, o in triple], LOSS_TOLERANCE, min)
        elo = _pick(values, [o.final_elo for _, o in triple], ELO_TOLERANCE, max)
        times = [o.time_s for _, o in triple]
        if report.parallel or len(triple) != 3 or not all(t > 0 for t in times):
            kind, tcell, ratio = NOT_AVAILABLE, NOT_AVAILABLE, float("nan")
        else:
            kind = instrumentation.classify(p, times)
            ratio = max(times) / min(times)
            tcell = _fmt_value(values[int(np.argmin(times))]) if kind == instrumentation.TIME_SENSITIVE else SIMILAR
        rows.append(SummaryRow(p, (lo.value if lo else None, default, hi.value if hi else None),
                               loss, elo, tcell, kind, ratio))
    return rows


def write_report_csv(path: Union[str, Path], report: SweepReport) -> None:
    rundir.write_csv(path, REPORT_COLUMNS, [
        [o.name, o.parameter or "", "" if o.value is None else o.value,
         "" if o.default is None else o.default, "" if o.run_value is None else o.run_value, o.status, o.final_loss, o.final_elo,
         o.time_s, o.iterations, o.accepted, o.error] for o in report.outcomes])


def read_report_csv(path: Union[str, Path]) -> SweepReport:
    outcomes = []
    for r in rundir.read_csv(path):
        param = r["parameter"] or None
        value = coerce(param, r["value"]) if param else None
        default = coerce(param, r["default"]) if param else None
        run_value = coerce(param, r["run_value"]) if param and r["run_value"] else None
        outcomes.append(RunOutcome(
            r["run"], param, value, default, run_value, r["status"], float(r["final_loss"]),
            float(r["final_elo"]), float(r["time_s"]), int(r["iterations"]),
            int(r["accepted"]), r["error"]))
    return SweepReport(outcomes)


def write_summary_csv(path: Union[str, Path], rows: Sequence[SummaryRow]) -> None:
    rundir.write_csv(path, SUMMARY_COLUMNS, [
        [r.parameter, *("" if v is None else v for v in r.values), r.loss, r.elo, r.time, r.type,
         r.time_ratio] for r in rows])


def render_table(rows: Sequence[SummaryRow]) -> str:
    """Fixed-width text table of a summary."""
    header = ["parameter", "min/default/max", "loss", "elo", "time", "type"]
    body = [[r.parameter, "/".join(_fmt_value(v) for v in r.values), r.loss, r.elo, r.time, r.type]
            for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)).rstrip()
             for line in [header, ["-" * w for w in widths], *body]]
    return "\n".join(lines)


# manifests

@dataclass
class Manifest:
    baseline: ParameterSet
    grid: SweepGrid
    budget: Dict[str, object]
    parallel: bool = False
    rating_games: int = 20
    workers: int = 1


def _parse_triple(name: str, text: str) -> Tuple:
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(name, f"grid entry needs three comma-separated values, got {text!r}")
    return tuple(coerce(name, s) for s in parts)


def parse_manifest(text: str) -> Manifest:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # parameter names are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("manifest", str(exc).splitlines()[0]) from None
    unknown = set(cp.sections()) - {"baseline", "grid", "budget", "sweep"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown manifest section")
    base = {k: coerce(k, v) for k, v in cp["baseline"].items()} if cp.has_section("baseline") else {}
    baseline = ParameterSet(**base)
    if cp.has_section("grid"):
        grid = SweepGrid({k: _parse_triple(k, v) for k, v in cp["grid"].items()})
    else:
        grid = SweepGrid()
    budget = {k: coerce(k, v) for k, v in cp["budget"].items()} if cp.has_section("budget") else {}
    opts = cp["sweep"] if cp.has_section("sweep") else {}
    extra = set(opts) - {"parallel", "rating_games", "workers"}
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown [sweep] option")
    try:
        parallel = cp.getboolean("sweep", "parallel", fallback=False)
        rating_games = cp.getint("sweep", "rating_games", fallback=20)
        workers = cp.getint("sweep", "workers", fallback=1)
    except ValueError as exc:
        raise ConfigError("sweep", str(exc)) from None
    if rating_games < 0 or workers < 1:
        raise ConfigError("sweep", "rating_games must be >= 0 and workers >= 1")
    return Manifest(baseline, grid, budget, parallel, rating_games, workers)


def load_manifest(path: Union[str, Path]) -> Manifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def default_manifest_text() -> str:
    return (resources.files("azsweep") / "data" / "desk_sweep.ini").read_text(encoding="utf-8")
