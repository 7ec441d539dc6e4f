"""The twelve training parameters, their defaults, and the sweep grid."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, Tuple

PARAMETER_NAMES = (
    "iteration", "episode", "tempThreshold", "mctssimu", "Cpuct", "retrainlength",
    "epoch", "batchsize", "learningrate", "dropout", "arenacompare", "updateThreshold",
)

# (minimum, default, maximum) per parameter
DEFAULT_GRID: Dict[str, Tuple] = {
    "iteration": (50, 100, 150),
    "episode": (10, 50, 100),
    "tempThreshold": (10, 15, 20),
    "mctssimu": (25, 100, 200),
    "Cpuct": (0.5, 1.0, 2.0),
    "retrainlength": (1, 20, 40),
    "epoch": (5, 10, 15),
    "batchsize": (32, 64, 96),
    "learningrate": (0.001, 0.005, 0.01),
    "dropout": (0.2, 0.3, 0.4),
    "arenacompare": (20, 40, 100),
    "updateThreshold": (0.5, 0.6, 0.7),
}

_COUNTS = ("iteration", "episode", "tempThreshold", "mctssimu", "retrainlength", "epoch",
           "batchsize", "arenacompare")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ParameterSet:
    iteration: int = 100
    episode: int = 50
    tempThreshold: int = 15
    mctssimu: int = 100
    Cpuct: float = 1.0
    retrainlength: int = 20
    epoch: int = 10
    batchsize: int = 64
    learningrate: float = 0.005
    dropout: float = 0.3
    arenacompare: int = 40
    updateThreshold: float = 0.6
    seed: int = 0
    board_size: int = 6

    def __post_init__(self):
        for name in _COUNTS:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(name, f"must be an integer, got {v!r}")
            if v < 1:
                raise ConfigError(name, f"must be >= 1, got {v}")
        for name in ("Cpuct", "learningrate", "dropout", "updateThreshold"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(name, f"must be a number, got {v!r}")
        if not self.Cpuct > 0:
            raise ConfigError("Cpuct", f"must be > 0, got {self.Cpuct}")
        if not self.learningrate > 0:
            raise ConfigError("learningrate", f"must be > 0, got {self.learningrate}")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout", f"must be in [0, 1), got {self.dropout}")
        if not 0 < self.updateThreshold < 1:
            raise ConfigError("updateThreshold", f"must be in (0, 1), got {self.updateThreshold}")
        if self.board_size not in (4, 6):
            raise ConfigError("board_size", f"must be 4 or 6, got {self.board_size}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {self.seed!r}")

    def with_values(self, **changes) -> "ParameterSet":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


FIELD_TYPES = {f.name: (int if f.type in ("int", int) else float) for f in fields(ParameterSet)}


def coerce(key: str, text: str):
    """Parse a config string into the type of ParameterSet field ``key``."""
    if key not in FIELD_TYPES:
        raise ConfigError(key, "unknown parameter")
    try:
        if FIELD_TYPES[key] is int:
            f = float(text)
            if not f.is_integer():
                raise ValueError
            return int(f)
        return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {FIELD_TYPES[key].__name__}") from None
