"""Players and the game loop shared by arena, rating and interactive play."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Callable, Optional, TextIO

import numpy as np

from . import game, mcts


class RandomPlayer:
    """Uniform over legal moves; the fixed rating anchor."""

    simulations = 0

    def choose(self, state: game.GameState, step: int, rng: np.random.Generator) -> int:
        moves = game.legal_moves(state)
        return moves[int(rng.integers(len(moves)))]


class SearchPlayer:
    """Plays the argmax of its search policy, or samples from it while
    ``step < sample_plies``."""

    def __init__(self, model, cpuct: float, simulations: int, sample_plies: int = 0):
        self.model = model
        self.cpuct = cpuct
        self.simulations = simulations
        self.sample_plies = sample_plies

    def choose(self, state: game.GameState, step: int, rng: np.random.Generator) -> int:
        pi = mcts.search(state, self.model, self.cpuct, self.simulations,
                         rng_seed=int(rng.integers(2 ** 63)))
        return mcts.select_action(pi, step, self.sample_plies, rng)


class HumanPlayer:
    """Reads moves like ``c4`` or ``pass`` from a text stream, re-prompting on bad input."""

    simulations = 0

    def __init__(self, stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout):
        self.stdin = stdin
        self.stdout = stdout

    def choose(self, state: game.GameState, step: int, rng) -> int:
        legal = game.legal_moves(state)
        while True:
            self.stdout.write(game.format_board(state))
            self.stdout.write("your move: ")
            self.stdout.flush()
            line = self.stdin.readline()
            if not line:
                raise EOFError("input closed")
            try:
                move = game.parse_move(line, state.size)
            except ValueError as exc:
                self.stdout.write(f"{exc}\n")
                continue
            if move not in legal:
                names = ", ".join(game.move_name(m, state.size) for m in legal)
                self.stdout.write(f"illegal move; legal: {names}\n")
                continue
            return move


@dataclass
class GameRecord:
    final: game.GameState
    plies: int
    simulations: int

    def score_for(self, player: int) -> float:
        """1, 0.5 or 0 for ``player`` (BLACK or WHITE)."""
        return (game.terminal_value(self.final, player) + 1) / 2


def play_game(black, white, size: int, rng_black: np.random.Generator,
              rng_white: np.random.Generator,
              on_move: Optional[Callable[[game.GameState, int], None]] = None) -> GameRecord:
    """Play one game; each side draws its randomness from its own stream."""
    state = game.initial_state(size)
    plies = sims = 0
    while not state.is_terminal():
        if state.to_move == game.BLACK:
            player, rng = black, rng_black
        else:
            player, rng = white, rng_white
        move = player.choose(state, plies, rng)
        sims += player.simulations
        if on_move is not None:
            on_move(state, move)
        state = game.apply_move(state, move)
        plies += 1
    return GameRecord(state, plies, sims)
