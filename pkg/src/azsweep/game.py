"""Othello rules for square boards of size 4 and 6.

States are immutable values. The board is a flat tuple of cells in
row-major order holding ``BLACK`` (1), ``WHITE`` (-1) or ``EMPTY`` (0).
Moves are integer indices into that tuple; index ``size * size`` is the
pass move.

Text board format (used by fixtures and the ``play`` command)::

    ......
    ......
    ..WB..
    ..BW..
    ......
    ......
    to-move: B
    passes: 0

``size`` lines of ``size`` characters from ``.``, ``B`` and ``W``, then a
``to-move:`` line. The ``passes:`` line is optional and defaults to 0.
Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

EMPTY, BLACK, WHITE = 0, 1, -1
SUPPORTED_SIZES = (4, 6)

_DIRECTIONS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
_CHARS = {EMPTY: ".", BLACK: "B", WHITE: "W"}


class IllegalMoveError(ValueError):
    pass


class TerminalStateError(ValueError):
    """Raised when an operation that needs a live game gets a finished one."""


@lru_cache(maxsize=None)
def _rays(size: int) -> Tuple[Tuple[Tuple[int, ...], ...], ...]:
    rays = []
    for idx in range(size * size):
        r, c = divmod(idx, size)
        cell_rays = []
        for dr, dc in _DIRECTIONS:
            ray = []
            rr, cc = r + dr, c + dc
            while 0 <= rr < size and 0 <= cc < size:
                ray.append(rr * size + cc)
                rr += dr
                cc += dc
            if len(ray) >= 2:
                cell_rays.append(tuple(ray))
        rays.append(tuple(cell_rays))
    return tuple(rays)


def _flips(board: Sequence[int], idx: int, player: int, size: int) -> List[int]:
    flipped: List[int] = []
    opp = -player
    for ray in _rays(size)[idx]:
        if board[ray[0]] != opp:
            continue
        run = []
        for j in ray:
            v = board[j]
            if v == opp:
                run.append(j)
            else:
                if v == player:
                    flipped.extend(run)
                break
    return flipped


def _has_flip(board: Sequence[int], idx: int, player: int, size: int) -> bool:
    opp = -player
    for ray in _rays(size)[idx]:
        if board[ray[0]] != opp:
            continue
        for j in ray[1:]:
            v = board[j]
            if v == player:
                return True
            if v == EMPTY:
                break
    return False


@dataclass(frozen=True)
class GameState:
    size: int
    board: Tuple[int, ...]
    to_move: int = BLACK
    consecutive_passes: int = 0

    def __post_init__(self):
        if self.size not in SUPPORTED_SIZES:
            raise ValueError(f"unsupported board size {self.size}")
        if len(self.board) != self.size * self.size:
            raise ValueError("board length does not match size")
        if self.to_move not in (BLACK, WHITE):
            raise ValueError(f"bad player {self.to_move!r}")
        if not 0 <= self.consecutive_passes <= 2:
            raise ValueError("consecutive_passes must be in 0..2")

    @property
    def action_count(self) -> int:
        return self.size * self.size + 1

    @property
    def pass_move(self) -> int:
        return self.size * self.size

    def count(self, player: int) -> int:
        return sum(1 for v in self.board if v == player)

    def placements(self) -> List[int]:
        """Cells where the mover flanks at least one disc (cached per state)."""
        try:
            return self._placements
        except AttributeError:
            pass
        board, size, player = self.board, self.size, self.to_move
        moves = [i for i, v in enumerate(board) if v == EMPTY and _has_flip(board, i, player, size)]
        object.__setattr__(self, "_placements", moves)
        return moves

    def is_terminal(self) -> bool:
        if self.consecutive_passes >= 2:
            return True
        if self.placements():
            return False
        # neither side can place: finished without playing out two passes
        return not _any_placement(self, -self.to_move)

    def __str__(self) -> str:
        return format_board(self)


def _any_placement(state: GameState, player: int) -> bool:
    board, size = state.board, state.size
    return any(v == EMPTY and _has_flip(board, i, player, size) for i, v in enumerate(board))


def initial_state(size: int = 6) -> GameState:
    """Standard start: white on the main diagonal of the central 2x2, black off it."""
    board = [EMPTY] * (size * size)
    h = size // 2
    board[(h - 1) * size + (h - 1)] = WHITE
    board[h * size + h] = WHITE
    board[(h - 1) * size + h] = BLACK
    board[h * size + (h - 1)] = BLACK
    return GameState(size, tuple(board), BLACK, 0)


def legal_moves(state: GameState) -> List[int]:
    if state.is_terminal():
        raise TerminalStateError("legal_moves called on a terminal state")
    return list(state.placements()) or [state.pass_move]


def apply_move(state: GameState, move: int) -> GameState:
    size = state.size
    if state.consecutive_passes >= 2:
        raise TerminalStateError("game is over")
    if move == state.pass_move:
        if state.placements():
            raise IllegalMoveError("pass is only legal when no placement flanks")
        return GameState(size, state.board, -state.to_move, state.consecutive_passes + 1)
    if not (isinstance(move, (int, np.integer)) and 0 <= move < size * size):
        raise IllegalMoveError(f"move {move!r} out of range")
    if state.board[move] != EMPTY:
        raise IllegalMoveError(f"cell {move} is occupied")
    flipped = _flips(state.board, move, state.to_move, size)
    if not flipped:
        raise IllegalMoveError(f"cell {move} flanks nothing")
    board = list(state.board)
    board[move] = state.to_move
    for j in flipped:
        board[j] = state.to_move
    return GameState(size, tuple(board), -state.to_move, 0)


def terminal_value(state: GameState, perspective: int) -> Optional[int]:
    """+1 win, -1 loss, 0 draw for ``perspective``; None while the game runs."""
    if not state.is_terminal():
        return None
    diff = sum(state.board) * perspective
    return (diff > 0) - (diff < 0)


def encode(state: GameState) -> np.ndarray:
    """Two planes from the mover's side, shape (2, size, size): plane 0 marks
    the mover's discs, plane 1 the opponent's."""
    arr = np.asarray(state.board, dtype=np.float32).reshape(state.size, state.size)
    arr = arr * np.float32(state.to_move)
    return np.stack([(arr > 0), (arr < 0)]).astype(np.float32)


def encoding_shape(size: int) -> Tuple[int, int, int]:
    return (2, size, size)


def canonical_key(state: GameState) -> Tuple[int, ...]:
    p = state.to_move
    return tuple(v * p for v in state.board)


def swap_colors(state: GameState) -> GameState:
    return GameState(state.size, tuple(-v for v in state.board), -state.to_move,
                     state.consecutive_passes)


@lru_cache(maxsize=None)
def _dihedral_indices(size: int) -> List[np.ndarray]:
    grid = np.arange(size * size).reshape(size, size)
    out = []
    for flip in (False, True):
        g = np.fliplr(grid) if flip else grid
        for k in range(4):
            out.append(np.rot90(g, k).ravel())
    return out


def transform(state: GameState, policy: np.ndarray, index: int) -> Tuple[GameState, np.ndarray]:
    """Apply dihedral transform ``index`` (0..7, 0 is identity) to a (state, policy) pair."""
    perm = _dihedral_indices(state.size)[index]
    board = tuple(state.board[j] for j in perm)
    pol = np.asarray(policy)
    new_pol = np.empty_like(pol)
    new_pol[:-1] = pol[:-1][perm]
    new_pol[-1] = pol[-1]
    return GameState(state.size, board, state.to_move, state.consecutive_passes), new_pol


def symmetries(state: GameState, policy: np.ndarray) -> List[Tuple[GameState, np.ndarray]]:
    if len(policy) != state.action_count:
        raise ValueError(f"policy length {len(policy)} != {state.action_count}")
    return [transform(state, policy, k) for k in range(8)]


def format_board(state: GameState) -> str:
    rows = []
    for r in range(state.size):
        rows.append("".join(_CHARS[v] for v in state.board[r * state.size:(r + 1) * state.size]))
    rows.append(f"to-move: {_CHARS[state.to_move]}")
    if state.consecutive_passes:
        rows.append(f"passes: {state.consecutive_passes}")
    return "\n".join(rows) + "\n"


def parse_board(text: str) -> GameState:
    rows: List[str] = []
    to_move = None
    passes = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("to-move:"):
            tok = line.split(":", 1)[1].strip()
            if tok not in ("B", "W"):
                raise ValueError(f"bad to-move value {tok!r}")
            to_move = BLACK if tok == "B" else WHITE
        elif line.startswith("passes:"):
            passes = int(line.split(":", 1)[1])
        else:
            if to_move is not None:
                raise ValueError("board rows after the to-move line")
            rows.append(line)
    if to_move is None:
        raise ValueError("missing to-move line")
    size = len(rows)
    if any(len(r) != size for r in rows):
        raise ValueError("board must be square")
    lookup = {".": EMPTY, "B": BLACK, "W": WHITE}
    try:
        board = tuple(lookup[ch] for r in rows for ch in r)
    except KeyError as exc:
        raise ValueError(f"bad cell character {exc.args[0]!r}") from None
    return GameState(size, board, to_move, passes)


def move_name(move: int, size: int) -> str:
    if move == size * size:
        return "pass"
    r, c = divmod(move, size)
    return f"{'abcdef'[c]}{r + 1}"


def parse_move(text: str, size: int) -> int:
    text = text.strip().lower()
    if text == "pass":
        return size * size
    if len(text) != 2 or text[0] not in "abcdef"[:size] or not text[1].isdigit():
        raise ValueError(f"cannot parse move {text!r}")
    c, r = "abcdef".index(text[0]), int(text[1]) - 1
    if not 0 <= r < size:
        raise ValueError(f"row out of range in {text!r}")
    return r * size + c


def play_out(state: GameState, moves: Iterable[int]) -> GameState:
    for m in moves:
        state = apply_move(state, m)
    return state
