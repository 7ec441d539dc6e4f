"""PUCT tree search guided by a policy/value evaluator.

An evaluator is any object with ``evaluate(state) -> (priors, value)`` (or a
bare callable with that signature). ``priors`` is a vector over all
``size*size + 1`` actions and ``value`` is from the point of view of the
player to move in ``state``.

A fresh tree is built for each call. The root is expanded before the first
simulation, so root visit counts always sum to the number of simulations.
"""

from __future__ import annotations

import math
from typing import Callable, List, Optional, TextIO

import numpy as np

from . import game

# keeps the exploration term alive at a node whose children are all unvisited,
# so the first descent follows the priors
_SQRT_FLOOR = 1e-8


class SearchError(RuntimeError):
    pass


class Node:
    __slots__ = ("state", "moves", "prior", "visits", "value_sum", "children", "terminal_value")

    def __init__(self, state: game.GameState):
        self.state = state
        self.moves: List[int] = []
        self.prior: Optional[np.ndarray] = None
        self.visits: Optional[np.ndarray] = None
        self.value_sum: Optional[np.ndarray] = None
        self.children: List[Optional["Node"]] = []
        self.terminal_value: Optional[int] = None

    def q_values(self) -> np.ndarray:
        return np.divide(self.value_sum, self.visits, out=np.zeros_like(self.value_sum),
                         where=self.visits > 0)


def _evaluator(model) -> Callable:
    return getattr(model, "evaluate", model)


class SearchTree:
    def __init__(self, root: game.GameState, model, cpuct: float, rng_seed=0,
                 trace: bool = False):
        if cpuct <= 0:
            raise ValueError("cpuct must be positive")
        if root.is_terminal():
            raise game.TerminalStateError("search called on a terminal root")
        self.cpuct = float(cpuct)
        self.evaluate = _evaluator(model)
        self.rng = np.random.default_rng(rng_seed)
        self.trace: Optional[List[List[float]]] = [] if trace else None
        self.evaluations = 0
        self.root = Node(root)
        self._expand(self.root)

    def _expand(self, node: Node) -> float:
        state = node.state
        tv = game.terminal_value(state, state.to_move)
        if tv is not None:
            node.terminal_value = tv
            return float(tv)
        priors, value = self.evaluate(state)
        self.evaluations += 1
        priors = np.asarray(priors, dtype=np.float64)
        value = float(value)
        if not (math.isfinite(value) and np.all(np.isfinite(priors))):
            raise SearchError(f"evaluator returned non-finite output at\n{game.format_board(state)}")
        moves = game.legal_moves(state)
        p = priors[moves]
        total = p.sum()
        p = p / total if total > 0 else np.full(len(moves), 1.0 / len(moves))
        node.moves = moves
        node.prior = p
        node.visits = np.zeros(len(moves), dtype=np.int64)
        node.value_sum = np.zeros(len(moves), dtype=np.float64)
        node.children = [None] * len(moves)
        return value

    def _select(self, node: Node) -> int:
        n = node.visits
        q = node.q_values()
        u = q + self.cpuct * node.prior * math.sqrt(n.sum() + _SQRT_FLOOR) / (1.0 + n)
        best = np.flatnonzero(u == u.max())
        if len(best) == 1:
            return int(best[0])
        return int(best[self.rng.integers(len(best))])

    def simulate(self) -> None:
        node = self.root
        path = []
        while True:
            i = self._select(node)
            path.append((node, i))
            child = node.children[i]
            if child is None:
                child = Node(game.apply_move(node.state, node.moves[i]))
                node.children[i] = child
                value = self._expand(child)
                break
            if child.terminal_value is not None:
                value = float(child.terminal_value)
                break
            node = child
        # ``value`` is for the player to move at the leaf; each edge stores
        # values for the player choosing at its parent
        backed = []
        for parent, i in reversed(path):
            value = -value
            parent.visits[i] += 1
            parent.value_sum[i] += value
            backed.append(value)
        if self.trace is not None:
            self.trace.append(backed)

    def run(self, simulations: int) -> "SearchTree":
        if simulations < 1:
            raise ValueError("simulations must be >= 1")
        for _ in range(simulations):
            self.simulate()
        return self

    def policy(self) -> np.ndarray:
        pi = np.zeros(self.root.state.action_count, dtype=np.float64)
        pi[self.root.moves] = self.root.visits
        return pi / pi.sum()

    def table(self) -> str:
        root = self.root
        size = root.state.size
        q = root.q_values()
        lines = [f"{'move':>5} {'N':>6} {'Q':>8} {'P':>7}"]
        for j, m in enumerate(root.moves):
            lines.append(f"{game.move_name(m, size):>5} {root.visits[j]:>6d} {q[j]:>8.4f} "
                         f"{root.prior[j]:>7.4f}")
        return "\n".join(lines)


def search(root: game.GameState, model, cpuct: float, simulations: int, rng_seed=0,
           debug: Optional[TextIO] = None) -> np.ndarray:
    """Visit-count policy after ``simulations`` PUCT descents from ``root``."""
    tree = SearchTree(root, model, cpuct, rng_seed).run(simulations)
    if debug is not None:
        debug.write(tree.table() + "\n")
    return tree.policy()


def select_action(policy: np.ndarray, game_step: int, temp_threshold: int, rng) -> int:
    """Sample from ``policy`` during the opening plies, then play its argmax
    (lowest index on ties)."""
    policy = np.asarray(policy, dtype=np.float64)
    if game_step < temp_threshold:
        return int(rng.choice(len(policy), p=policy / policy.sum()))
    return int(np.argmax(policy))
