import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from azsweep import checkpoint, game, network
from azsweep.network import NetworkConfig, PolicyValueNet, TrainingExample

import oracles
from test_game import _state_after


def _examples(size, n, rng, legal_targets=True):
    """Random positions with random legal-move targets and outcomes."""
    states = oracles.random_playout_states(size, rng, max_games=max(1, n // 8))
    states = [s for s in states if not s.is_terminal()]
    out = []
    for i in range(n):
        s = states[int(rng.integers(len(states)))]
        pi = np.zeros(s.action_count)
        moves = game.legal_moves(s) if legal_targets else range(s.action_count)
        pi[list(moves)] = rng.random(len(moves))
        pi /= pi.sum()
        out.append(TrainingExample(game.encode(s), pi, float(rng.choice([-1.0, 0.0, 1.0]))))
    return out


def relative_error(analytic, numeric, floor=1e-6):
    return float(np.max(np.abs(analytic - numeric)
                        / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)))


def gradient_check(seed):
    """Max relative error of the analytic gradient on one random float64 model/batch."""
    rng = np.random.default_rng(seed)
    size = 4
    hidden = [int(rng.integers(3, 9)) for _ in range(int(rng.integers(1, 3)))]
    activation = "relu" if seed % 2 == 0 else "tanh"
    cfg = NetworkConfig.for_board(size, hidden_layers=hidden, activation=activation)
    model = PolicyValueNet.initialize(cfg, seed=seed, dtype=np.float64, zero_heads=False)
    # random biases keep pre-activations off the ReLU kink at exactly 0
    for name, p in model.params.items():
        if name.endswith(".bias"):
            p[...] = rng.normal(0.0, 0.5, p.shape)
    batch = _examples(size, int(rng.integers(1, 6)), rng)
    analytic = network.gradient(model, batch)
    base = model.flat_params()

    def f(flat):
        m = model.copy()
        m.set_flat_params(flat)
        return network.mean_total_loss(m, batch)

    numeric = oracles.central_difference(f, base.copy(), step=1e-5)
    return relative_error(analytic, numeric)


def test_fresh_model_is_uniform_with_zero_value():
    cfg = NetworkConfig.for_board(6)
    model = PolicyValueNet.initialize(cfg, seed=3)
    s = game.initial_state(6)
    pi, v = model.predict(game.encode(s))
    np.testing.assert_allclose(pi, np.full(37, 1 / 37), rtol=0, atol=1e-12)
    assert v == 0.0
    pi, v = model.evaluate(s)
    legal = game.legal_moves(s)
    np.testing.assert_allclose(pi[legal], 0.25, atol=1e-12)
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig((2, 6, 6), 36)
    with pytest.raises(ValueError):
        NetworkConfig((2, 6, 6), 37, dropout_rate=1.0)
    cfg = NetworkConfig.for_board(4)
    assert cfg.input_shape == (2, 4, 4) and cfg.action_count == 17


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(0, 1000), max_size=25))
def test_predict_normalizes_and_masks(seed, choices):
    cfg = NetworkConfig.for_board(6, hidden_layers=[16])
    model = PolicyValueNet.initialize(cfg, seed=seed, zero_heads=False)
    s = _state_after(6, choices)
    if s.is_terminal():
        return
    pi, v = model.predict(game.encode(s))
    assert abs(pi.sum() - 1) <= 1e-9 and -1 <= v <= 1
    pi, _ = model.evaluate(s)
    assert abs(pi.sum() - 1) <= 1e-9
    legal = set(game.legal_moves(s))
    assert {int(i) for i in np.flatnonzero(pi)} <= legal


def test_masked_position_with_four_moves():
    model = PolicyValueNet.initialize(NetworkConfig.for_board(6), seed=1, zero_heads=False)
    pi, _ = model.evaluate(game.initial_state(6))
    assert np.count_nonzero(pi) == 4


def test_predict_errors():
    model = PolicyValueNet.initialize(NetworkConfig.for_board(6), seed=1)
    with pytest.raises(network.ShapeError):
        model.predict(np.zeros((2, 4, 4)))
    model.params["hidden0.weight"][0, 0] = np.nan
    with pytest.raises(network.NonFiniteError):
        model.predict(game.encode(game.initial_state(6)))


def test_loss_examples():
    one_hot = np.array([0.0, 1.0, 0.0])
    assert network.loss(one_hot, 1.0, one_hot, 1.0)[2] == pytest.approx(0.0, abs=1e-9)
    u = np.full(4, 0.25)
    assert network.loss(u, 0.0, u, 0.0)[0] == pytest.approx(math.log(4), abs=1e-9)
    assert network.loss(u, 1.0, u, 0.5)[1] == pytest.approx(0.25, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1, 1), st.floats(-1, 1))
def test_loss_decomposes_and_is_nonnegative(seed, z, v):
    rng = np.random.default_rng(seed)
    pi = rng.random(5)
    pi /= pi.sum()
    p = rng.random(5)
    p /= p.sum()
    lp, lv, total = network.loss(pi, z, p, v)
    assert lp >= 0 and lv >= 0
    assert total == lp + lv


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    assert gradient_check(seed) < 1e-4


def test_symmetric_batch_gives_equal_policy_gradients():
    cfg = NetworkConfig.for_board(4, hidden_layers=[6])
    model = PolicyValueNet.initialize(cfg, seed=0, dtype=np.float64)
    for p in model.params.values():
        p[...] = 0.0
    s = game.initial_state(4)
    pi = np.zeros(17)
    legal = game.legal_moves(s)
    pi[legal] = 0.25
    g = network.gradient(model, [TrainingExample(game.encode(s), pi, 1.0)])
    names = network.param_names(cfg)
    shapes = network.param_shapes(cfg)
    offset = sum(int(np.prod(shapes[n])) for n in names[:names.index("policy.bias")])
    gb = g[offset:offset + 17]
    assert np.all(gb[legal] == gb[legal[0]])
    illegal = [a for a in range(17) if a not in legal]
    assert np.all(gb[illegal] == gb[illegal[0]])


def test_duplicated_example_gives_the_same_gradient():
    rng = np.random.default_rng(4)
    cfg = NetworkConfig.for_board(4, hidden_layers=[8])
    model = PolicyValueNet.initialize(cfg, seed=2, dtype=np.float64, zero_heads=False)
    ex = _examples(4, 1, rng)
    np.testing.assert_allclose(network.gradient(model, ex), network.gradient(model, ex * 2),
                               rtol=1e-12, atol=1e-15)


def test_batch_count_and_sizes():
    assert network.batch_count(100, 32) == 4
    assert network.batch_count(32, 32) == 1
    sizes = [len(range(100)[s:s + 32]) for s in range(0, 100, 32)]
    assert sizes == [32, 32, 32, 4]


def test_one_batch_one_epoch_is_one_optimizer_step(monkeypatch):
    calls = []
    original = network.Adam.step

    def counting(self, params, grads):
        calls.append(1)
        return original(self, params, grads)

    monkeypatch.setattr(network.Adam, "step", counting)
    rng = np.random.default_rng(0)
    model = PolicyValueNet.initialize(NetworkConfig.for_board(4, hidden_layers=[8]), seed=0)
    network.train(model, _examples(4, 10, rng), epochs=1, batch_size=32, learning_rate=0.01)
    assert len(calls) == 1
    calls.clear()
    network.train(model, _examples(4, 100, rng), epochs=2, batch_size=32, learning_rate=0.01)
    assert len(calls) == 8


def test_overfit_probe():
    rng = np.random.default_rng(0)
    exs = []
    for s in oracles.random_playout_states(6, rng, max_games=2)[:8]:
        pi = np.zeros(37)
        pi[game.legal_moves(s)[0] if not s.is_terminal() else 36] = 1.0
        exs.append(TrainingExample(game.encode(s), pi, float(rng.choice([-1.0, 1.0]))))
    model = PolicyValueNet.initialize(NetworkConfig.for_board(6), seed=0)
    hist = network.train(model, exs, epochs=200, batch_size=8, learning_rate=0.005, dropout=0.0)
    assert sum(hist[-1]) < 0.05
    assert network.mean_total_loss(model, exs) < 0.05


def test_zero_learning_rate_leaves_parameters_identical():
    rng = np.random.default_rng(1)
    model = PolicyValueNet.initialize(NetworkConfig.for_board(4, hidden_layers=[8]), seed=0)
    before = model.flat_params().copy()
    network.train(model, _examples(4, 20, rng), epochs=2, batch_size=8, learning_rate=0.0,
                  dropout=0.3)
    np.testing.assert_array_equal(model.flat_params(), before)


def test_training_is_deterministic_given_seed():
    rng = np.random.default_rng(2)
    exs = _examples(4, 40, rng)
    runs = []
    for _ in range(2):
        m = PolicyValueNet.initialize(NetworkConfig.for_board(4, hidden_layers=[8]), seed=0)
        h = network.train(m, exs, epochs=3, batch_size=16, learning_rate=0.01, dropout=0.0,
                          rng_seed=5)
        runs.append((h, m.flat_params()))
    assert runs[0][0] == runs[1][0]
    np.testing.assert_array_equal(runs[0][1], runs[1][1])


def test_dropout_rate_does_not_affect_inference():
    a = PolicyValueNet.initialize(NetworkConfig.for_board(6, dropout_rate=0.0), seed=7,
                                  zero_heads=False)
    b = PolicyValueNet(NetworkConfig.for_board(6, dropout_rate=0.4),
                       {k: v.copy() for k, v in a.params.items()})
    enc = game.encode(_state_after(6, [1, 1]))
    pa, va = a.predict(enc)
    pb, vb = b.predict(enc)
    np.testing.assert_array_equal(pa, pb)
    assert va == vb


def test_dropout_changes_training_forward_pass():
    model = PolicyValueNet.initialize(NetworkConfig.for_board(6), seed=7, zero_heads=False)
    x = game.encode(game.initial_state(6)).reshape(1, -1)
    plain = model.forward(x)[2]
    dropped = model.forward(x, dropout=0.5, rng=np.random.default_rng(0))[2]
    assert not np.array_equal(plain, dropped)


def test_train_errors():
    model = PolicyValueNet.initialize(NetworkConfig.for_board(4, hidden_layers=[4]), seed=0)
    with pytest.raises(ValueError):
        network.train(model, [], 1, 8, 0.01)
    ex = _examples(4, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        network.train(model, ex, 0, 8, 0.01)
    bad = [TrainingExample(ex[0].state_encoding, ex[0].target_policy, float("nan"))]
    with pytest.raises(network.NonFiniteError):
        network.train(model, bad, 1, 8, 0.01)


# checkpoints

def test_checkpoint_round_trip_is_bit_identical(tmp_path):
    model = PolicyValueNet.initialize(NetworkConfig.for_board(6), seed=11, zero_heads=False)
    model.training_iteration = 4
    path = tmp_path / "m.ckpt"
    checkpoint.save(model, path)
    loaded = checkpoint.load(path)
    assert loaded.training_iteration == 4
    assert loaded.config == model.config
    for s in oracles.random_playout_states(6, np.random.default_rng(0), max_games=2):
        pa, va = model.predict(game.encode(s))
        pb, vb = loaded.predict(game.encode(s))
        np.testing.assert_array_equal(pa, pb)
        assert va == vb
    assert not (tmp_path / "m.ckpt.tmp").exists()


def test_checkpoint_errors(tmp_path):
    model = PolicyValueNet.initialize(NetworkConfig.for_board(6, hidden_layers=[8]), seed=0)
    good = tmp_path / "good.ckpt"
    checkpoint.save(model, good)
    data = good.read_bytes()

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(bad_magic)

    version = tmp_path / "version.ckpt"
    version.write_bytes(data[:4] + struct.pack("<I", 99) + data[8:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(version)

    for cut in (10, 20, len(data) - 3):
        short = tmp_path / f"short{cut}.ckpt"
        short.write_bytes(data[:cut])
        with pytest.raises(checkpoint.CheckpointError):
            checkpoint.load(short)

    extra = tmp_path / "extra.ckpt"
    extra.write_bytes(data + b"\0\0\0\0")
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(extra)

    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(good, action_count=17)
    assert checkpoint.load(good, action_count=37).config.action_count == 37
