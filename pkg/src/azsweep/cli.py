"""Command-line entry point: ``azsweep {train,sweep,report,export-plots,play}``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, checkpoint, game, instrumentation, pipeline, plotting, rundir, sweep
from .network import NetworkConfig
from .params import FIELD_TYPES, ConfigError, ParameterSet, coerce
from .players import HumanPlayer, RandomPlayer, SearchPlayer, play_game

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

GAMES = {"othello4": 4, "othello6": 6}


@dataclass
class RunConfig:
    """Everything ``train`` needs; its snapshot reproduces the run."""
    params: ParameterSet
    game: str = "othello6"
    out_dir: str = ""
    workers: int = 1
    rating_games: int = 20
    hidden_layers: List[int] = field(default_factory=lambda: [128, 128])
    augment: bool = False

    def snapshot(self) -> Dict[str, object]:
        d = {"game": self.game}
        d.update({k: v for k, v in self.params.to_dict().items() if k != "board_size"})
        d.update(workers=self.workers, rating_games=self.rating_games,
                 hidden_layers=self.hidden_layers, augment=self.augment)
        return d

    def net_config(self) -> NetworkConfig:
        return NetworkConfig.for_board(self.params.board_size, hidden_layers=list(self.hidden_layers),
                                       dropout_rate=self.params.dropout)


EXTRA_KEYS = ("game", "out_dir", "workers", "rating_games", "hidden_layers", "augment")
CONFIG_KEYS = tuple(k for k in FIELD_TYPES if k != "board_size") + EXTRA_KEYS


def _parse_bool(key: str, text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _parse_int(key: str, text: str, minimum: int) -> int:
    try:
        v = int(str(text).strip())
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None
    if v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    return v


def build_config(values: Dict[str, str]) -> RunConfig:
    """Validate raw ``key -> text`` settings. Absent seed is drawn from entropy."""
    for key in values:
        if key not in CONFIG_KEYS:
            raise ConfigError(key, "unknown configuration key")
    game_name = values.get("game", "othello6").strip()
    if game_name not in GAMES:
        raise ConfigError("game", f"expected one of {sorted(GAMES)}, got {game_name!r}")
    kw = {k: coerce(k, v) for k, v in values.items() if k in FIELD_TYPES}
    if "seed" not in kw:
        kw["seed"] = int(np.random.SeedSequence().entropy % (2 ** 32))
    kw["board_size"] = GAMES[game_name]
    ps = ParameterSet(**kw)
    hidden_text = values.get("hidden_layers", "128,128")
    try:
        hidden = [int(x) for x in str(hidden_text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError("hidden_layers", f"expected comma-separated widths, got {hidden_text!r}") from None
    if not hidden or min(hidden) < 1:
        raise ConfigError("hidden_layers", "needs at least one positive width")
    out_dir = values.get("out_dir", "").strip() or f"runs/{game_name}-seed{ps.seed}"
    return RunConfig(
        params=ps, game=game_name, out_dir=out_dir,
        workers=_parse_int("workers", values.get("workers", "1"), 1),
        rating_games=_parse_int("rating_games", values.get("rating_games", "20"), 0),
        hidden_layers=hidden, augment=_parse_bool("augment", values.get("augment", "false")))


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    for key in CONFIG_KEYS:
        flag = "--" + key.replace("_", "-") if key in EXTRA_KEYS else "--" + key
        p.add_argument(flag, dest=f"cfg_{key}", metavar="V", default=None)
    p.add_argument("--out", dest="cfg_out_dir", metavar="DIR", default=None,
                   help="run directory (same as --out-dir)")
    p.add_argument("--quiet", action="store_true", help="no per-iteration lines")


def _collect(args) -> Dict[str, str]:
    values: Dict[str, str] = {}
    if args.config:
        try:
            values.update(rundir.read_config(args.config))
        except (OSError, ValueError) as exc:
            raise ConfigError("config", str(exc)) from None
    for key in CONFIG_KEYS:
        v = getattr(args, f"cfg_{key}", None)
        if v is not None:
            values[key] = v
    return values


def _iteration_line(rec: pipeline.IterationRecord, total: int) -> str:
    lp, lv = rec.epoch_losses[-1]
    verdict = "accepted" if rec.accepted else "rejected"
    return (f"iter {rec.iteration}/{total}  loss {lp + lv:.4f} (pi {lp:.4f}, v {lv:.4f})  "
            f"arena {rec.wins}-{rec.losses}-{rec.draws} {verdict}  "
            f"examples {rec.examples_trained}  {rec.total_s:.1f}s")


def cmd_train(args) -> int:
    cfg = build_config(_collect(args))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rundir.write_config(out / rundir.CONFIG_FILE, cfg.snapshot())
    total = cfg.params.iteration
    sinks = [] if args.quiet else [lambda r: print(_iteration_line(r, total), flush=True)]
    print(f"run directory {out}  seed {cfg.params.seed}", flush=True)
    try:
        result = pipeline.run_training(cfg.params, sinks=sinks, run_dir=out, net_config=cfg.net_config(),
                                       augment=cfg.augment, workers=cfg.workers,
                                       rate=cfg.rating_games > 0, rating_games=cfg.rating_games)
    except pipeline.TrainingError as exc:
        print(f"error: {exc} ({len(exc.records)} iterations completed)", file=sys.stderr)
        return EXIT_RUNTIME
    accepted = sum(r.accepted for r in result.records)
    line = f"done: {len(result.records)} iterations, {accepted} accepted"
    if result.elo_curve:
        line += f", final Elo {result.elo_curve[-1][1]:.1f}"
    print(line)
    return EXIT_OK


def cmd_sweep(args) -> int:
    text = Path(args.manifest).read_text(encoding="utf-8") if args.manifest else sweep.default_manifest_text()
    m = sweep.parse_manifest(text)
    grid = m.grid
    if args.only:
        names = [n.strip() for n in args.only.split(",") if n.strip()]
        for n in names:
            if n not in grid.values:
                raise ConfigError(n, "not in the manifest grid")
        grid = grid.restricted(names)
    budget = dict(m.budget)
    for item in args.budget or []:
        if "=" not in item:
            raise ConfigError("budget", f"expected key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        budget[k] = coerce(k, v)
    parallel = m.parallel or args.parallel
    runs = sweep.generate_runs(m.baseline, grid)
    for r in runs:  # surfaces bad budget keys or values as config errors before any run starts
        sweep.apply_budget(r, m.baseline, budget)
    out = Path(args.out)
    print(f"sweep: {len(runs)} runs into {out}" + (" (parallel, no time classification)" if parallel else ""),
          flush=True)

    def progress(o: sweep.RunOutcome):
        if o.ok:
            print(f"  {o.name:<22} loss {o.final_loss:.4f}  elo {o.final_elo:8.1f}  {o.time_s:8.1f}s",
                  flush=True)
        else:
            print(f"  {o.name:<22} FAILED {o.error}", flush=True)

    report = sweep.run_sweep(runs, budget, out, parallel=parallel, rating_games=m.rating_games,
                             workers=m.workers, progress=progress)
    print()
    print(sweep.render_table(sweep.summarize(report)))
    plotting.export_sweep(out)
    failed = [o.name for o in report.outcomes if not o.ok]
    if failed:
        print(f"{len(failed)} run(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _report_published(path: Optional[str], out: Optional[Path]) -> int:
    rows = instrumentation.read_time_cost_csv(path) if path else instrumentation.published_time_costs()
    header = f"{'parameter':<16}{'min':>8}{'default':>9}{'max':>8}{'ratio':>8}  {'type':<15}{'published':<15}"
    print(header.rstrip())
    matches = 0
    table = []
    for r in rows:
        times = (r.t_min, r.t_default, r.t_max)
        kind = instrumentation.classify(r.parameter, times)
        ok = (kind == r.type) if r.type else None
        matches += bool(ok)
        table.append([r.parameter, *times, max(times) / min(times), kind, r.type])
        print(f"{r.parameter:<16}{r.t_min:>8.1f}{r.t_default:>9.1f}{r.t_max:>8.1f}"
              f"{max(times) / min(times):>8.3f}  {kind:<15}{r.type or '-'}")
    labelled = sum(1 for r in rows if r.type)
    if labelled:
        print(f"{matches}/{labelled} types match")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        rundir.write_csv(out / "time_cost_types.csv",
                         ["parameter", "t_min", "t_default", "t_max", "ratio", "type", "published_type"],
                         table)
        if not path:
            plotting.published_time_figure(out / "time_cost_types.png")
    return EXIT_OK if matches == labelled else EXIT_RUNTIME


def _report_run(path: Path, out: Optional[Path]) -> int:
    series, problems = plotting.run_series(path)
    metrics = rundir.read_metrics(path) if (path / rundir.METRICS_FILE).exists() else []
    times = {r.iteration: r for r in instrumentation.read_breakdown_csv(path / rundir.BREAKDOWN_FILE)} \
        if (path / rundir.BREAKDOWN_FILE).exists() else {}
    elo = {int(x): y for x, y, _ in series.get("elo_by_iteration", [])}
    print(f"{'iter':>4} {'loss':>8} {'loss_pi':>8} {'loss_v':>8} {'arena':>9} {'acc':>4} "
          f"{'elo':>8} {'self_play':>9} {'train':>7} {'arena_s':>7} {'total':>7}")
    for m in metrics:
        it = int(m["iteration"])
        t = times.get(it)
        arena = f"{int(m['wins'])}-{int(m['losses'])}-{int(m['draws'])}"
        e = f"{elo[it]:8.1f}" if it in elo else f"{'-':>8}"
        tt = (f"{t.self_play_s:9.2f} {t.train_s:7.2f} {t.arena_s:7.2f} {t.total_s:7.2f}" if t else "")
        print(f"{it:>4} {m['loss_total']:8.4f} {m['loss_pi']:8.4f} {m['loss_v']:8.4f} {arena:>9} "
              f"{'yes' if m['accepted'] else 'no':>4} {e} {tt}")
    if times:
        phase = sum(t.phase_sum for t in times.values())
        total = sum(t.total_s for t in times.values())
        print(f"phases {phase:.1f}s of {total:.1f}s measured")
    if out is not None:
        try:
            plotting.export_run(path, out)
        except plotting.ExportError:
            pass
    for p in problems:
        print(f"problem: {p}", file=sys.stderr)
    return EXIT_RUNTIME if problems else EXIT_OK


def _report_sweep(path: Path, out: Optional[Path]) -> int:
    report = sweep.load_sweep_dir(path)
    summary = sweep.summarize(report)
    print(sweep.render_table(summary))
    failed = [o.name for o in report.outcomes if not o.ok]
    if failed:
        print(f"failed runs (excluded): {', '.join(failed)}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        sweep.write_summary_csv(out / sweep.SUMMARY_FILE, summary)
        plotting.export_sweep(path, out)
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else None
    if args.published or args.path is None:
        return _report_published(None, out)
    path = Path(args.path)
    if path.is_file():
        return _report_published(str(path), out)
    if (path / sweep.REPORT_FILE).exists():
        return _report_sweep(path, out)
    if path.is_dir():
        return _report_run(path, out)
    print(f"error: {path} does not exist", file=sys.stderr)
    return EXIT_RUNTIME


def cmd_export(args) -> int:
    path = Path(args.path)
    if (path / sweep.REPORT_FILE).exists():
        written = plotting.export_sweep(path, args.out)
    else:
        if not path.is_dir():
            print(f"error: {path} is not a directory", file=sys.stderr)
            return EXIT_RUNTIME
        try:
            written = plotting.export_run(path, args.out)
        except plotting.ExportError as exc:
            for p in exc.problems:
                print(f"error: {p}", file=sys.stderr)
            return EXIT_RUNTIME
    for w in written:
        print(w)
    return EXIT_OK


def cmd_play(args) -> int:
    try:
        model = checkpoint.load(args.checkpoint)
    except (OSError, checkpoint.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    size = int(round(((model.config.action_count - 1) ** 0.5)))
    if args.mctssimu < 1 or args.cpuct <= 0 or args.games < 1:
        raise ConfigError("play", "mctssimu and games must be >= 1 and cpuct > 0")
    me = SearchPlayer(model, args.cpuct, args.mctssimu)
    if args.opponent == "random":
        them = RandomPlayer()
    elif args.opponent == "checkpoint":
        other = checkpoint.load(args.against, action_count=model.config.action_count) if args.against else model
        them = SearchPlayer(other, args.cpuct, args.mctssimu)
    else:
        them = HumanPlayer(sys.stdin, sys.stdout)
    show = args.opponent == "human-stdin" or args.games == 1 or args.show_boards

    def on_move(state, move):
        if show:
            who = "black" if state.to_move == game.BLACK else "white"
            print(f"{game.format_board(state)}\n{who} plays {game.move_name(move, size)}\n")

    w = l = d = 0
    for g in range(args.games):
        pair = g // 2
        rng_b = pipeline.derive_rng(args.seed, pair, 0)
        rng_w = pipeline.derive_rng(args.seed, pair, 1)
        colour = game.BLACK if g % 2 == 0 else game.WHITE
        black, white = (me, them) if colour == game.BLACK else (them, me)
        rec = play_game(black, white, size, rng_b, rng_w, on_move=on_move)
        score = rec.score_for(colour)
        w, l, d = w + (score == 1.0), l + (score == 0.0), d + (score == 0.5)
        if show:
            print(f"{game.format_board(rec.final)}\n"
                  f"game {g + 1}: checkpoint as {'black' if colour == game.BLACK else 'white'} "
                  f"{'wins' if score == 1 else 'loses' if score == 0 else 'draws'} "
                  f"({rec.final.count(colour)}-{rec.final.count(-colour)})\n")
    print(f"checkpoint vs {args.opponent}: {w} wins, {l} losses, {d} draws over {args.games} games; "
          f"win rate {w / args.games:.2f}, score {(w + 0.5 * d) / args.games:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="azsweep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the training loop into a run directory")
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="one-at-a-time parameter sweep")
    s.add_argument("manifest", nargs="?", help="INI manifest (default: bundled desk-scale sweep)")
    s.add_argument("--out", default="sweep", help="sweep directory (default: %(default)s)")
    s.add_argument("--only", help="comma-separated subset of grid parameters")
    s.add_argument("--budget", action="append", metavar="KEY=VALUE", help="extra budget override")
    s.add_argument("--parallel", action="store_true", help="run in parallel (disables time types)")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="summarize a run, a sweep or a time-cost table")
    r.add_argument("path", nargs="?", help="run dir, sweep dir or time-cost CSV")
    r.add_argument("--published", action="store_true", help="classify the bundled published time costs")
    r.add_argument("--out", help="also write CSV and PNG output here")
    r.set_defaults(func=cmd_report)

    e = sub.add_parser("export-plots", help="write tidy x,y,series CSVs and PNG figures")
    e.add_argument("path", help="run or sweep directory")
    e.add_argument("--out", help="output directory (default: <path>/plots)")
    e.set_defaults(func=cmd_export)

    g = sub.add_parser("play", help="play a checkpoint against an opponent")
    g.add_argument("checkpoint")
    g.add_argument("--opponent", choices=["random", "checkpoint", "human-stdin"], default="random")
    g.add_argument("--against", help="opponent checkpoint (default: the same checkpoint)")
    g.add_argument("--games", type=int, default=1)
    g.add_argument("--mctssimu", type=int, default=25)
    g.add_argument("--cpuct", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--show-boards", action="store_true", help="print every board")
    g.set_defaults(func=cmd_play)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
