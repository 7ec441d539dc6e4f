"""Dense policy/value network written directly against numpy.

The network maps a board encoding to a distribution over ``size*size + 1``
actions and a scalar value in [-1, 1]. Hidden layers share one activation;
the policy head is a softmax and the value head a tanh. Output layers start
at zero, so a fresh model predicts a uniform policy and a value of exactly 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import game

LOG_EPS = 1e-10

_ACTIVATIONS = ("relu", "tanh")


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class NetworkConfig:
    input_shape: Tuple[int, int]
    action_count: int
    hidden_layers: List[int] = field(default_factory=lambda: [128, 128])
    activation: str = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.hidden_layers = [int(w) for w in self.hidden_layers]
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValueError("hidden_layers must be non-empty positive widths")
        cells = self.input_shape[-1] * self.input_shape[-2]
        if self.action_count != cells + 1:
            raise ValueError(
                f"action_count {self.action_count} does not match a board of {cells} cells")

    @property
    def input_size(self) -> int:
        return int(np.prod(self.input_shape))

    @classmethod
    def for_board(cls, size: int, **kw) -> "NetworkConfig":
        return cls(input_shape=game.encoding_shape(size), action_count=size * size + 1, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d


@dataclass
class TrainingExample:
    state_encoding: np.ndarray
    target_policy: np.ndarray
    outcome: float


def param_names(config: NetworkConfig) -> List[str]:
    names = []
    for i in range(len(config.hidden_layers)):
        names += [f"hidden{i}.weight", f"hidden{i}.bias"]
    return names + ["policy.weight", "policy.bias", "value.weight", "value.bias"]


def param_shapes(config: NetworkConfig) -> Dict[str, Tuple[int, ...]]:
    shapes = {}
    fan_in = config.input_size
    for i, width in enumerate(config.hidden_layers):
        shapes[f"hidden{i}.weight"] = (fan_in, width)
        shapes[f"hidden{i}.bias"] = (width,)
        fan_in = width
    shapes["policy.weight"] = (fan_in, config.action_count)
    shapes["policy.bias"] = (config.action_count,)
    shapes["value.weight"] = (fan_in, 1)
    shapes["value.bias"] = (1,)
    return shapes


class PolicyValueNet:
    def __init__(self, config: NetworkConfig, params: Dict[str, np.ndarray],
                 training_iteration: int = 0):
        self.config = config
        shapes = param_shapes(config)
        if set(params) != set(shapes):
            raise ShapeError(f"parameter names {sorted(params)} do not match config")
        for name, shape in shapes.items():
            if params[name].shape != shape:
                raise ShapeError(f"{name}: shape {params[name].shape} != {shape}")
        self.params = {name: params[name] for name in param_names(config)}
        self.training_iteration = training_iteration

    @classmethod
    def initialize(cls, config: NetworkConfig, seed=0, dtype=np.float32,
                   zero_heads: bool = True) -> "PolicyValueNet":
        """He-style scaled normal init for hidden layers; zero heads unless told otherwise."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(config).items():
            is_head = name.startswith(("policy.", "value."))
            if name.endswith(".bias") or (is_head and zero_heads):
                params[name] = np.zeros(shape, dtype=dtype)
            else:
                scale = math.sqrt(2.0 / shape[0])
                params[name] = (rng.standard_normal(shape) * scale).astype(dtype)
        return cls(config, params)

    @property
    def dtype(self):
        return self.params["policy.bias"].dtype

    def copy(self) -> "PolicyValueNet":
        return PolicyValueNet(self.config, {k: v.copy() for k, v in self.params.items()},
                              self.training_iteration)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in param_names(self.config)])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for name in param_names(self.config):
            p = self.params[name]
            self.params[name] = np.asarray(flat[offset:offset + p.size], dtype=p.dtype).reshape(p.shape)
            offset += p.size

    def check_finite(self) -> None:
        for name, p in self.params.items():
            if not np.all(np.isfinite(p)):
                raise NonFiniteError(f"parameter {name} holds non-finite values")

    def _hidden(self, x, dropout=0.0, rng=None, cache=None):
        n_hidden = len(self.config.hidden_layers)
        relu = self.config.activation == "relu"
        h = x
        for i in range(n_hidden):
            a = h @ self.params[f"hidden{i}.weight"] + self.params[f"hidden{i}.bias"]
            h = np.maximum(a, 0) if relu else np.tanh(a)
            mask = None
            if dropout > 0.0:
                keep = 1.0 - dropout
                mask = (rng.random(h.shape) < keep).astype(h.dtype) / h.dtype.type(keep)
                h = h * mask
            if cache is not None:
                cache.append((a, h, mask))
        return h

    def forward(self, x: np.ndarray, dropout: float = 0.0, rng=None, cache=None):
        """Batch forward pass: ``x`` is (batch, input_size). Returns (probs, values, logits)."""
        h = self._hidden(x, dropout, rng, cache)
        logits = h @ self.params["policy.weight"] + self.params["policy.bias"]
        probs = _softmax(logits)
        values = np.tanh(h @ self.params["value.weight"] + self.params["value.bias"])[:, 0]
        return probs, values, logits

    def predict(self, state_encoding: np.ndarray,
                legal_mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
        """Inference on one encoding, no dropout. With ``legal_mask`` the policy is
        restricted to legal actions and renormalized."""
        enc = np.asarray(state_encoding)
        if enc.shape != self.config.input_shape:
            raise ShapeError(f"encoding shape {enc.shape} != {self.config.input_shape}")
        x = enc.reshape(1, -1).astype(self.dtype, copy=False)
        h = self._hidden(x)
        logits = (h @ self.params["policy.weight"] + self.params["policy.bias"])[0]
        value = float(np.tanh(h @ self.params["value.weight"] + self.params["value.bias"])[0, 0])
        if not (np.all(np.isfinite(logits)) and math.isfinite(value)):
            self.check_finite()
            raise NonFiniteError("network produced non-finite output")
        logits = logits.astype(np.float64)
        if legal_mask is not None:
            logits = np.where(legal_mask, logits, -np.inf)
        logits -= logits.max()
        p = np.exp(logits)
        p /= p.sum()
        return p, value

    def evaluate(self, state: game.GameState) -> Tuple[np.ndarray, float]:
        """Search-facing evaluator: masked priors and value for the player to move."""
        mask = np.zeros(state.action_count, dtype=bool)
        mask[game.legal_moves(state)] = True
        return self.predict(game.encode(state), mask)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss(target_pi, z, pred_pi, v) -> Tuple[float, float, float]:
    """Cross-entropy policy loss plus squared value error for one example."""
    target_pi = np.asarray(target_pi, dtype=np.float64)
    pred_pi = np.asarray(pred_pi, dtype=np.float64)
    if target_pi.shape != pred_pi.shape:
        raise ShapeError("policy vectors differ in length")
    loss_pi = float(-np.sum(target_pi * np.log(pred_pi + LOG_EPS)))
    loss_v = float((v - z) ** 2)
    return loss_pi, loss_v, loss_pi + loss_v


def batch_losses(target_pi: np.ndarray, z: np.ndarray, probs: np.ndarray,
                 values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    loss_pi = -np.sum(target_pi * np.log(probs + LOG_EPS), axis=1)
    loss_v = (values - z) ** 2
    return loss_pi, loss_v


def _backward(model: PolicyValueNet, x, target_pi, z, probs, values, cache) -> Dict[str, np.ndarray]:
    """Gradient of the mean total loss with respect to every parameter."""
    n = x.shape[0]
    # d/dlogits of -sum(pi * log(p + eps)), keeping the eps term exact
    r = target_pi * probs / (probs + LOG_EPS)
    d_logits = (probs * r.sum(axis=1, keepdims=True) - r) / n
    d_vraw = (2.0 * (values - z) * (1.0 - values ** 2) / n)[:, None]

    h_last = cache[-1][1] if cache else x
    grads = {
        "policy.weight": h_last.T @ d_logits,
        "policy.bias": d_logits.sum(axis=0),
        "value.weight": h_last.T @ d_vraw,
        "value.bias": d_vraw.sum(axis=0),
    }
    dh = d_logits @ model.params["policy.weight"].T + d_vraw @ model.params["value.weight"].T
    relu = model.config.activation == "relu"
    for i in range(len(cache) - 1, -1, -1):
        a, h, mask = cache[i]
        if mask is not None:
            dh = dh * mask
        if relu:
            da = dh * (a > 0)
        else:
            t = np.tanh(a)
            da = dh * (1.0 - t * t)
        h_prev = cache[i - 1][1] if i > 0 else x
        grads[f"hidden{i}.weight"] = h_prev.T @ da
        grads[f"hidden{i}.bias"] = da.sum(axis=0)
        if i > 0:
            dh = da @ model.params[f"hidden{i}.weight"].T
    return grads


def _stack(examples: Sequence[TrainingExample], dtype):
    x = np.stack([np.asarray(e.state_encoding).ravel() for e in examples]).astype(dtype)
    pi = np.stack([np.asarray(e.target_policy) for e in examples]).astype(dtype)
    z = np.asarray([e.outcome for e in examples], dtype=dtype)
    return x, pi, z


def gradient(model: PolicyValueNet, batch: Sequence[TrainingExample]) -> np.ndarray:
    """Flat analytic gradient of the batch-mean total loss, dropout disabled."""
    x, pi, z = _stack(batch, model.dtype)
    cache: list = []
    probs, values, _ = model.forward(x, cache=cache)
    grads = _backward(model, x, pi, z, probs, values, cache)
    return np.concatenate([grads[n].ravel() for n in param_names(model.config)])


def mean_total_loss(model: PolicyValueNet, batch: Sequence[TrainingExample]) -> float:
    x, pi, z = _stack(batch, model.dtype)
    probs, values, _ = model.forward(x)
    lp, lv = batch_losses(pi, z, probs, values)
    return float(np.mean(lp + lv))


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            params[name] = params[name] - update.astype(params[name].dtype)


def batch_count(n_examples: int, batch_size: int) -> int:
    return -(-n_examples // batch_size)


def train(model: PolicyValueNet, examples: Sequence[TrainingExample], epochs: int,
          batch_size: int, learning_rate: float, dropout: Optional[float] = None,
          rng_seed=0) -> List[Tuple[float, float]]:
    """Fit ``model`` in place with Adam on the mean total loss.

    The pool is reshuffled every epoch and cut into ``ceil(n / batch_size)``
    batches, the last one possibly short. Returns the example-weighted mean
    (loss_pi, loss_v) of each epoch, measured on the training forward passes.
    """
    if not examples:
        raise ValueError("train needs at least one example")
    if epochs < 1 or batch_size < 1:
        raise ValueError("epochs and batch_size must be >= 1")
    if dropout is None:
        dropout = model.config.dropout_rate
    rng = np.random.default_rng(rng_seed)
    x_all, pi_all, z_all = _stack(examples, model.dtype)
    n = len(examples)
    opt = Adam(learning_rate)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        sum_pi = sum_v = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x, pi, z = x_all[idx], pi_all[idx], z_all[idx]
            cache: list = []
            probs, values, _ = model.forward(x, dropout=dropout, rng=rng, cache=cache)
            lp, lv = batch_losses(pi, z, probs, values)
            if not (np.all(np.isfinite(lp)) and np.all(np.isfinite(lv))):
                raise NonFiniteError(f"non-finite loss in epoch {epoch}, batch starting at {start}")
            sum_pi += float(lp.sum())
            sum_v += float(lv.sum())
            opt.step(model.params, _backward(model, x, pi, z, probs, values, cache))
        history.append((sum_pi / n, sum_v / n))
    return history
