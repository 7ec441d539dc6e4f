"""Self-play, training and arena gating, iterated.

Each iteration:

1. plays ``episode`` self-play games with the current best model,
2. pushes them into a replay window of the last ``retrainlength`` iterations,
3. trains a copy of the best model on the whole window,
4. pits the copy against the best model for ``arenacompare`` games and keeps
   it when it wins at least ``updateThreshold`` of the decisive games.

Randomness for every episode, training call and arena pair is derived from
``(seed, stage, iteration, index)``, so results do not depend on whether
episodes run in worker processes.
"""

from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import checkpoint, game, mcts, rating, rundir
from .instrumentation import PhaseRecorder
from .network import NetworkConfig, PolicyValueNet, TrainingExample, batch_count, train
from .params import ParameterSet
from .players import RandomPlayer, SearchPlayer, play_game

log = logging.getLogger(__name__)

_INIT, _SELF_PLAY, _TRAIN, _ARENA, _RATING = range(5)


def derive_rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


class TrainingError(RuntimeError):
    def __init__(self, message: str, records):
        super().__init__(message)
        self.records = records


@dataclass
class ReplayBuffer:
    capacity: int
    lists: List[Tuple[int, List[TrainingExample]]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.lists)

    def iterations(self) -> List[int]:
        return [it for it, _ in self.lists]

    def flatten(self) -> List[TrainingExample]:
        return [ex for _, exs in self.lists for ex in exs]


def update_buffer(buffer: ReplayBuffer, new_examples: List[TrainingExample], retrainlength: int,
                  iteration: Optional[int] = None) -> ReplayBuffer:
    """Append one iteration's examples; drop the oldest list once over capacity."""
    buffer.capacity = retrainlength
    tag = iteration if iteration is not None else (buffer.lists[-1][0] + 1 if buffer.lists else 1)
    buffer.lists.append((tag, list(new_examples)))
    if len(buffer.lists) > retrainlength:
        buffer.lists.pop(0)
    return buffer


@dataclass
class IterationRecord:
    iteration: int
    epoch_losses: List[Tuple[float, float]]
    wins: int
    losses: int
    draws: int
    accepted: bool
    examples_trained: int
    buffer_iterations: List[int]
    self_play_digest: str
    self_play_s: float = 0.0
    train_s: float = 0.0
    arena_s: float = 0.0
    total_s: float = 0.0
    elo: Optional[float] = None

    @property
    def loss_total(self) -> float:
        lp, lv = self.epoch_losses[-1]
        return lp + lv

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epoch_losses"] = [list(x) for x in self.epoch_losses]
        return d


def model_digest(model: PolicyValueNet) -> str:
    h = hashlib.sha256()
    for name, p in model.params.items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()[:16]


def execute_episode(model, ps: ParameterSet, rng: np.random.Generator,
                    augment: bool = False) -> List[TrainingExample]:
    """One self-play game. Every ply yields (canonical state, search policy, z)
    with z the final result for the player to move at that ply."""
    state = game.initial_state(ps.board_size)
    history = []
    step = 0
    while not state.is_terminal():
        pi = mcts.search(state, model, ps.Cpuct, ps.mctssimu, rng_seed=int(rng.integers(2 ** 63)))
        history.append((state, pi))
        move = mcts.select_action(pi, step, ps.tempThreshold, rng)
        state = game.apply_move(state, move)
        step += 1
    examples = []
    for s, pi in history:
        z = float(game.terminal_value(state, s.to_move))
        pairs = game.symmetries(s, pi) if augment else [(s, pi)]
        for s2, pi2 in pairs:
            examples.append(TrainingExample(game.encode(s2), pi2.astype(np.float32), z))
    return examples


def _episode_job(args):
    model, ps, key, augment = args
    return execute_episode(model, ps, derive_rng(*key), augment)


def arena(candidate, incumbent, ps: ParameterSet, seed: Sequence[int] = (0,),
          workers: int = 1, counters: Optional[dict] = None) -> Tuple[int, int, int]:
    """Play ``ps.arenacompare`` greedy games; returns candidate (wins, losses, draws).

    The candidate has black in games 0, 2, 4, ... and white in the others. Each
    consecutive pair shares its random streams by colour, so a model playing
    itself produces mirrored pairs. Either side may also be a player object
    such as ``RandomPlayer``.
    """
    jobs = [(candidate, incumbent, ps, tuple(seed), g) for g in range(ps.arenacompare)]
    results = _map(_arena_game, jobs, workers)
    wins = losses = draws = 0
    for score, rec in results:
        if score == 1.0:
            wins += 1
        elif score == 0.0:
            losses += 1
        else:
            draws += 1
        if counters is not None:
            counters["plies"] = counters.get("plies", 0) + rec.plies
            counters["simulations"] = counters.get("simulations", 0) + rec.simulations
    return wins, losses, draws


def _as_player(side, ps: ParameterSet):
    """A model searches greedily; an object that already has ``choose`` is used as is."""
    if hasattr(side, "choose"):
        return side
    return SearchPlayer(side, ps.Cpuct, ps.mctssimu)


def _arena_game(args):
    candidate, incumbent, ps, seed, g = args
    cand = _as_player(candidate, ps)
    inc = _as_player(incumbent, ps)
    pair = g // 2
    rng_b, rng_w = derive_rng(*seed, pair, 0), derive_rng(*seed, pair, 1)
    if g % 2 == 0:
        rec = play_game(cand, inc, ps.board_size, rng_b, rng_w)
        return rec.score_for(game.BLACK), rec
    rec = play_game(inc, cand, ps.board_size, rng_b, rng_w)
    return rec.score_for(game.WHITE), rec


def accept_model(wins: int, losses: int, draws: int, update_threshold: float) -> bool:
    """Accept when wins / (wins + losses) >= threshold; all-draw arenas reject."""
    decisive = wins + losses
    if decisive == 0:
        return False
    return wins / decisive >= update_threshold


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class RunResult:
    best: PolicyValueNet
    records: List[IterationRecord]
    breakdown: list
    accepted_models: List[Tuple[int, PolicyValueNet]]
    elo_curve: List[Tuple[int, float]] = field(default_factory=list)
    game_log: List[rating.GameResult] = field(default_factory=list)


Sink = Callable[[IterationRecord], None]


def run_training(ps: ParameterSet, sinks: Iterable[Sink] = (), run_dir: Union[str, Path, None] = None,
                 net_config: Optional[NetworkConfig] = None, augment: bool = False,
                 workers: int = 1, rate: bool = False, rating_games: int = 20,
                 on_iteration_start: Optional[Callable[[int, PolicyValueNet], None]] = None,
                 initial_model: Optional[PolicyValueNet] = None) -> RunResult:
    """Run ``ps.iteration`` iterations and return the final best model and records.

    With ``run_dir`` the run directory is written as records are produced.
    With ``rate`` every accepted checkpoint plays rating games after the last
    iteration and the records get their Elo estimates (this is not part of the
    timed iterations).
    """
    sinks = list(sinks)
    run_path = Path(run_dir) if run_dir is not None else None
    if run_path is not None:
        sinks.insert(0, rundir.RunWriter(run_path))
    if net_config is None:
        net_config = NetworkConfig.for_board(ps.board_size, dropout_rate=ps.dropout)
    if initial_model is not None:
        best = initial_model.copy()
    else:
        best = PolicyValueNet.initialize(net_config, seed=derive_rng(ps.seed, _INIT).integers(2 ** 63))
    if best.config.action_count != ps.board_size ** 2 + 1:
        raise ValueError("network does not match board size")
    if run_path is not None:
        checkpoint.save(best, run_path / "iter_0.ckpt")
        checkpoint.save(best, run_path / "best.ckpt")

    buffer = ReplayBuffer(ps.retrainlength)
    recorder = PhaseRecorder()
    records: List[IterationRecord] = []
    accepted_models = [(0, best)]
    try:
        for it in range(1, ps.iteration + 1):
            t_start = time.perf_counter()
            if on_iteration_start is not None:
                on_iteration_start(it, best)
            digest = model_digest(best)

            with recorder.timed(it, "self_play") as c:
                jobs = [(best, ps, (ps.seed, _SELF_PLAY, it, e), augment) for e in range(ps.episode)]
                episodes = _map(_episode_job, jobs, workers)
                new_examples = [ex for ep in episodes for ex in ep]
                plies = len(new_examples) // (8 if augment else 1)
                c.update(episodes=ps.episode, plies=plies, simulations=plies * ps.mctssimu)
            update_buffer(buffer, new_examples, ps.retrainlength, iteration=it)
            pool = buffer.flatten()

            with recorder.timed(it, "train") as c:
                candidate = best.copy()
                history = train(candidate, pool, ps.epoch, ps.batchsize, ps.learningrate,
                                ps.dropout, rng_seed=derive_rng(ps.seed, _TRAIN, it).integers(2 ** 63))
                candidate.training_iteration = it
                c.update(batches=ps.epoch * batch_count(len(pool), ps.batchsize),
                         examples=len(new_examples))

            with recorder.timed(it, "arena") as c:
                wins, losses, draws = arena(candidate, best, ps, (ps.seed, _ARENA, it),
                                            workers=workers, counters=c)
            accepted = accept_model(wins, losses, draws, ps.updateThreshold)
            if accepted:
                best = candidate
                accepted_models.append((it, best))
            if run_path is not None:
                checkpoint.save(candidate, run_path / f"iter_{it}.ckpt")
                if accepted:
                    checkpoint.save(best, run_path / "best.ckpt")

            row = recorder.row(it)
            rec = IterationRecord(
                iteration=it, epoch_losses=[(float(a), float(b)) for a, b in history],
                wins=wins, losses=losses, draws=draws, accepted=accepted,
                examples_trained=len(pool), buffer_iterations=buffer.iterations(),
                self_play_digest=digest, self_play_s=row.self_play_s, train_s=row.train_s,
                arena_s=row.arena_s)
            rec.total_s = time.perf_counter() - t_start
            recorder.set_total(it, rec.total_s)
            records.append(rec)
            for sink in sinks:
                sink(rec)
            if run_path is not None:
                recorder.write_csv(run_path / rundir.BREAKDOWN_FILE)
            log.info("iter %d loss=%.4f arena=%d/%d/%d %s", it, rec.loss_total, wins, losses,
                     draws, "accepted" if accepted else "rejected")
    except Exception as exc:
        raise TrainingError(f"run aborted in iteration {len(records) + 1}: {exc}", records) from exc

    result = RunResult(best, records, recorder.rows(), accepted_models)
    if rate:
        rate_checkpoints(result, ps, rating_games, workers=workers)
        if run_path is not None:
            rating.write_game_log(run_path / rundir.GAMES_FILE, result.game_log)
            rating.write_elo_curve(run_path / rundir.ELO_FILE, result.elo_curve)
    return result


def _rating_game(args):
    """Checkpoint (first) against an opponent; colours alternate by game index."""
    model, opponent, ps, seed, g, sample_plies = args
    me = SearchPlayer(model, ps.Cpuct, ps.mctssimu)
    if opponent is None:
        them = RandomPlayer()
    else:
        me.sample_plies = sample_plies
        them = SearchPlayer(opponent, ps.Cpuct, ps.mctssimu, sample_plies)
    rng_b, rng_w = derive_rng(*seed, g, 0), derive_rng(*seed, g, 1)
    if g % 2 == 0:
        return play_game(me, them, ps.board_size, rng_b, rng_w).score_for(game.BLACK)
    return play_game(them, me, ps.board_size, rng_b, rng_w).score_for(game.WHITE)


def rate_checkpoints(result: RunResult, ps: ParameterSet, games: int = 20, workers: int = 1,
                     sample_plies: int = 4, k_policy=None) -> None:
    """Rating games for every accepted checkpoint: ``games`` against the random
    anchor and ``games`` against the previous accepted checkpoint. Fills
    ``result.game_log``, ``result.elo_curve`` and each record's ``elo``."""
    log_: List[rating.GameResult] = []
    prev_id = None
    prev_model = None
    for it, model in result.accepted_models:
        pid = f"iter_{it}"
        pairings = [(None, rating.ANCHOR_ID)]
        if prev_model is not None:
            pairings.append((prev_model, prev_id))
        for opponent, opp_id in pairings:
            tag = 0 if opponent is None else 1
            jobs = [(model, opponent, ps, (ps.seed, _RATING, it, tag), g, sample_plies)
                    for g in range(games)]
            for score in _map(_rating_game, jobs, workers):
                log_.append(rating.GameResult(pid, opp_id, score))
        prev_id, prev_model = pid, model
    ids = [f"iter_{it}" for it, _ in result.accepted_models]
    table = rating.rate_run(log_, ids, k_policy)
    curve = [(0, table["iter_0"].rating)]
    current = "iter_0"
    accepted_at = {it for it, _ in result.accepted_models}
    for rec in result.records:
        if rec.iteration in accepted_at:
            current = f"iter_{rec.iteration}"
        rec.elo = table[current].rating
        curve.append((rec.iteration, rec.elo))
    result.game_log = log_
    result.elo_curve = curve


def win_rate_vs_random(model, ps: ParameterSet, games: int = 50, seed: Sequence[int] = (0,),
                       workers: int = 1) -> Tuple[float, Tuple[int, int, int]]:
    """Score fraction of ``model`` (searching with ps.mctssimu) against uniform random."""
    jobs = [(model, None, ps, tuple(seed), g, 0) for g in range(games)]
    scores = _map(_rating_game, jobs, workers)
    w = sum(1 for s in scores if s == 1.0)
    l = sum(1 for s in scores if s == 0.0)
    return sum(scores) / games, (w, l, games - w - l)
