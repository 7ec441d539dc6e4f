"""Incremental Elo ratings for checkpoint strength curves."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

ANCHOR_ID = "random"


@dataclass
class RatedPlayer:
    id: str
    rating: float = 0.0
    games_played: int = 0


@dataclass(frozen=True)
class GameResult:
    player_a: str
    player_b: str
    score_a: float

    def __post_init__(self):
        if self.score_a not in (0.0, 0.5, 1.0):
            raise ValueError(f"score must be 0, 0.5 or 1, got {self.score_a!r}")


def expected_score(r_a: float, r_b: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))


def update_rating(r_a: float, e_a: float, s_a: float, k: float) -> float:
    return r_a + k * (s_a - e_a)


def fixed_k(k: float = 32.0) -> Callable[[RatedPlayer], float]:
    return lambda player: k


def two_stage_k(early: float = 40.0, late: float = 20.0,
                threshold: int = 30) -> Callable[[RatedPlayer], float]:
    """Larger steps while a player is new, smaller once established."""
    return lambda player: early if player.games_played < threshold else late


def _table(players, anchor, initial):
    table = {pid: RatedPlayer(pid, initial) for pid in players}
    table[anchor] = RatedPlayer(anchor, 0.0)
    return table


def _apply(table: Dict[str, RatedPlayer], g: GameResult, k_policy, anchor: str) -> None:
    for pid in (g.player_a, g.player_b):
        if pid not in table:
            raise KeyError(f"unknown player {pid!r} in game log")
    a, b = table[g.player_a], table[g.player_b]
    e_a = expected_score(a.rating, b.rating)
    e_b = expected_score(b.rating, a.rating)
    new_a = update_rating(a.rating, e_a, g.score_a, k_policy(a))
    new_b = update_rating(b.rating, e_b, 1.0 - g.score_a, k_policy(b))
    if a.id != anchor:
        a.rating = new_a
    if b.id != anchor:
        b.rating = new_b
    a.games_played += 1
    b.games_played += 1


def rate_run(game_log: Iterable[GameResult], players: Sequence[str],
             k_policy: Optional[Callable[[RatedPlayer], float]] = None,
             anchor: str = ANCHOR_ID, initial: float = 0.0) -> Dict[str, RatedPlayer]:
    """Apply ``game_log`` in order and return every player's final rating.

    Both sides are updated from their pre-game ratings; the anchor never moves.
    The result depends on game order.
    """
    k_policy = k_policy or fixed_k()
    table = _table(players, anchor, initial)
    for g in game_log:
        _apply(table, g, k_policy, anchor)
    return table


def rating_trajectory(game_log: Iterable[GameResult], player: str, players: Sequence[str],
                      k_policy=None, anchor: str = ANCHOR_ID) -> List[float]:
    """Rating of ``player`` after each game it takes part in."""
    k_policy = k_policy or fixed_k()
    table = _table(players, anchor, 0.0)
    history = []
    for g in game_log:
        _apply(table, g, k_policy, anchor)
        if player in (g.player_a, g.player_b):
            history.append(table[player].rating)
    return history


def write_game_log(path: Union[str, Path], log: Iterable[GameResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["checkpoint_id", "opponent_id", "score"])
        for g in log:
            w.writerow([g.player_a, g.player_b, g.score_a])


def read_game_log(path: Union[str, Path]) -> List[GameResult]:
    with open(path, newline="") as fh:
        return [GameResult(r["checkpoint_id"], r["opponent_id"], float(r["score"]))
                for r in csv.DictReader(fh)]


def write_elo_curve(path: Union[str, Path], curve: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "rating"])
        for it, r in curve:
            w.writerow([it, repr(float(r))])
