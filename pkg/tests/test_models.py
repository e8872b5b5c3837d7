import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drivestyle.models import (TrainConfig, as_array, build_cnn, build_irnn, build_nopool_cnn,
                               build_pretrain_irnn, build_stacked_irnn, row_standardization, top_activations,
                               train)
from drivestyle.nn import MaxPool1D, Sigmoid


def toy_data(n=24, classes=3, shape=(35, 32), seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % classes
    x = rng.normal(size=(n,) + shape) + y[:, None, None] * 0.8
    return x, y


# --- shapes ------------------------------------------------------------------

def test_cnn_shape_chain():
    model = build_cnn((35, 128), 50)
    time_extents = [s[1] for s in model.shapes()[:8] if len(s) == 2]
    assert time_extents == [124, 124, 62, 60, 60, 30, 28, 28]
    assert model.shapes()[8] == (1792,)
    assert [s for s in model.shapes()[9:]] == [(128,), (128,), (128,), (128,), (50,), (50,)]
    conv1 = model.layers[0].params["W"]
    assert conv1.shape == (32, 35, 5)


def test_nopool_shape_chain():
    model = build_nopool_cnn((35, 128), 50)
    assert [s[1] for s in model.shapes() if len(s) == 2 and s[0] != 35][::2] == [124, 122, 120]
    assert model.shapes()[6] == (7680,)
    assert model.num_params() > build_cnn((35, 128), 50).num_params()


@settings(max_examples=40, deadline=None)
@given(st.integers(24, 256))
def test_shapes_for_any_frame_count(f):
    t = ((f - 4) // 2 - 2) // 2 - 2
    assert build_cnn((35, f), 7).shapes()[8] == (64 * t,)
    assert build_nopool_cnn((35, f), 7).shapes()[6] == (64 * (f - 8),)
    assert build_irnn((35, f), 7).shapes()[0] == (100,)
    assert build_stacked_irnn((35, f), 7).shapes()[:2] == [(100, f), (100,)]
    pre = build_pretrain_irnn(build_cnn((35, f), 7))
    assert pre.shapes()[7] == (64, t)


def test_cnn_rejects_short_input():
    with pytest.raises(ValueError):
        build_cnn((35, 23), 5)


def test_irnn_identity_init():
    for model in (build_irnn(num_classes=5), build_stacked_irnn(num_classes=5)):
        for layer in model.layers:
            if layer.kind == "recurrent_relu":
                np.testing.assert_array_equal(layer.params["W_hh"], np.eye(100))
    assert build_stacked_irnn(num_classes=5).layers[0].return_sequences


def test_pretrain_prefix_is_frozen():
    x, y = toy_data(classes=3)
    cnn = build_cnn((35, 32), 3)
    train(cnn, x, y, TrainConfig(epochs=1, batch_size=8))
    pre = build_pretrain_irnn(cnn)
    assert pre.layers[8].in_features == 64
    before = {k: v.copy() for k, v in pre.params.items()}
    prefix_out = pre.activations(x, 7)
    train(pre, x, y, TrainConfig(epochs=2, batch_size=8, learning_rate=1e-3))
    after = pre.params
    for k in before:
        changed = not np.array_equal(before[k], after[k])
        assert changed == (int(k.split(".")[0]) >= 8), k
    np.testing.assert_array_equal(pre.activations(x, 7), prefix_out)
    np.testing.assert_allclose(pre.forward(x).sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        build_pretrain_irnn(build_irnn((35, 32), 3))


def test_sigmoid_pool_commute():
    x = np.random.default_rng(3).normal(size=(4, 6, 20)) * 5
    a = MaxPool1D(2).forward(Sigmoid().forward(x))
    b = Sigmoid().forward(MaxPool1D(2).forward(x))
    np.testing.assert_array_equal(a, b)


# --- training ----------------------------------------------------------------

def test_training_deterministic():
    x, y = toy_data()
    runs = []
    for _ in range(2):
        model = build_stacked_irnn((35, 32), 3, hidden=8, seed=1)
        _, hist = train(model, x, y, TrainConfig(epochs=3, batch_size=5, learning_rate=1e-3))
        runs.append((model.params, hist))
    assert runs[0][1] == runs[1][1]
    for k in runs[0][0]:
        assert np.array_equal(runs[0][0][k], runs[1][0][k])


@pytest.mark.parametrize("builder", [build_cnn, build_stacked_irnn])
def test_zero_learning_rate_keeps_params(builder):
    x, y = toy_data()
    model = builder((35, 32), 3)
    before = {k: v.copy() for k, v in model.params.items()}
    train(model, x, y, TrainConfig(epochs=3, batch_size=7, learning_rate=0.0))
    for k, v in model.params.items():
        assert np.array_equal(v, before[k])


def test_cnn_loss_decreases_on_toy_problem():
    x, y = toy_data(n=30)
    model = build_cnn((35, 32), 3)
    _, hist = train(model, x, y, TrainConfig(epochs=6, batch_size=5))
    assert hist[-1]["loss"] < hist[0]["loss"]
    assert all(np.isfinite(h["loss"]) for h in hist)


def test_cnn_synthetic_five_drivers(trained):
    hist = trained.reports["cnn"].history
    assert len(hist) == 30
    assert hist[-1]["accuracy"] > 0.8


def test_standardization_invariance():
    x, _ = toy_data()
    scale = np.random.default_rng(1).uniform(0.1, 50, size=35)
    xs = x * scale[None, :, None]
    mean, std = row_standardization(x)
    mean_s, std_s = row_standardization(xs)
    za = (x - mean[:, None]) / std[:, None]
    zb = (xs - mean_s[:, None]) / std_s[:, None]
    np.testing.assert_allclose(za, zb, rtol=1e-10, atol=1e-12)


def test_standardization_stored_and_constant_rows():
    x, y = toy_data()
    x[:, 4, :] = 3.0
    model = build_irnn((35, 32), 3, hidden=4)
    train(model, x, y, TrainConfig(epochs=1))
    mean, std = model.norm
    assert std[4] == 1.0 and mean[4] == 3.0


def test_train_errors():
    x, y = toy_data()
    model = build_irnn((35, 32), 3, hidden=4)
    with pytest.raises(ValueError):
        train(model, x[:0], y[:0])
    with pytest.raises(ValueError):
        train(model, x, y + 5)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_default_optimizers():
    cfg = TrainConfig()
    assert cfg.batch_size == 128
    sgd = cfg.make_optimizer("CNN")
    assert (sgd.kind, sgd.learning_rate, sgd.decay, sgd.momentum) == ("sgd_nesterov", 0.05, 1e-6, 0.9)
    rms = cfg.make_optimizer("StackedIRNN")
    assert (rms.kind, rms.learning_rate, rms.rho, rms.epsilon) == ("rmsprop", 1e-6, 0.9, 1e-6)


# --- inspection --------------------------------------------------------------

def brute_force_top(model, x, k):
    layer = model.layers[1]
    first = model.layers[0]
    out = []
    finals = []
    for xi in x:
        h = first.forward(model.standardize(xi)[None])
        finals.append(layer.forward(h)[0])
    finals = np.array(finals)
    for j in range(finals.shape[1]):
        pairs = sorted(((-finals[i, j], i) for i in range(len(x))))[:k]
        out.append([(i, -a) for a, i in pairs])
    return out


def test_top_activations_match_brute_force():
    x, y = toy_data(n=12)
    model = build_stacked_irnn((35, 32), 3, hidden=6, seed=2)
    for layer in model.layers[:2]:
        layer.params["W_in"] *= 200  # make activations non-trivial
    train(model, x, y, TrainConfig(epochs=1, batch_size=4, learning_rate=1e-4))
    got = top_activations(model, x, k=5)
    assert len(got) == 6 and all(len(r) == 5 for r in got)
    assert got == brute_force_top(model, x, 5)
    for row in got:
        acts = [a for _, a in row]
        assert acts == sorted(acts, reverse=True)


def test_top_activations_edge_cases():
    x, _ = toy_data(n=3)
    model = build_stacked_irnn((35, 32), 3, hidden=4)
    single = top_activations(model, x[:1], k=1)
    assert len(single) == 4 and all(len(r) == 1 and r[0][0] == 0 for r in single)
    # all-zero activations tie: lowest segment id first
    model.layers[1].params["b"][:] = -1.0
    assert [i for i, _ in top_activations(model, x, k=3)[0]] == [0, 1, 2]
    with pytest.raises(ValueError):
        top_activations(model, x, k=4)
    ids = top_activations(model, x, k=2, segment_ids=[30, 10, 20])
    assert [i for i, _ in ids[0]] == [10, 20]


def test_as_array_accepts_lists():
    x, _ = toy_data(n=2)
    assert as_array(list(x)).shape == (2, 35, 32)
