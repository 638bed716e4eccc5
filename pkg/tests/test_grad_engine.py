import math

import numpy as np
import pytest

from featcomp.competition import CorruptionParams
from featcomp.data_forge import gen_dataset, synth_bank
from featcomp.grad_engine import (
    CheckpointError,
    Dense,
    FeatureExtractor,
    ModelGraph,
    NonFiniteActivation,
    ReLU,
    Sequential,
    Sigmoid,
    Tanh,
    TrainConfig,
    TrainingDivergence,
    Twin,
    backward,
    build_autoencoder,
    build_discriminator,
    build_generator,
    build_mlp,
    build_twin_classifier,
    clip_parameters,
    fit_probe,
    fit_reconstruction,
    forward,
    load_checkpoint,
    restore,
    save_checkpoint,
    train_autoencoder,
    train_gan,
    train_probe,
    train_supervised,
    train_wgan,
)
from featcomp.grad_engine.checkpoint import dumps_checkpoint, loads_checkpoint
from featcomp.grad_engine.losses import sigmoid_bce
from featcomp.grad_engine.optim import Adam
from featcomp.grad_engine.train import MetricLog


@pytest.fixture(scope="module")
def bank():
    return synth_bank(10, 200, 14, seed=0)


def _snapshot(model):
    return {k: v.tobytes() for k, v in model.parameters().items()}


# -- forward --------------------------------------------------------------------

def test_identity_dense():
    d = Dense(5, 5, "id")
    d.W[...] = np.eye(5)
    m = ModelGraph([d], "mlp", 5)
    x = np.random.default_rng(0).normal(size=(3, 5))
    assert np.array_equal(forward(m, x), x)


def test_relu_negative_input():
    m = ModelGraph([ReLU()], "mlp", 4)
    assert np.all(forward(m, -np.abs(np.random.default_rng(1).normal(size=(6, 4))) - 0.1) == 0)


def test_forward_matches_manual_matmul():
    m = build_mlp([6, 5, 3], seed=4, activation="tanh")
    x = np.random.default_rng(2).normal(size=(7, 6))
    p = m.parameters()
    w0, b0, w1, b1 = p["0.fc0.W"], p["0.fc0.b"], p["2.fc1.W"], p["2.fc1.b"]
    expect = np.zeros((7, 3))
    for i in range(7):
        h = [math.tanh(sum(x[i, a] * w0[a, j] for a in range(6)) + b0[j]) for j in range(5)]
        expect[i] = [sum(h[j] * w1[j, k] for j in range(5)) + b1[k] for k in range(3)]
    np.testing.assert_allclose(forward(m, x), expect, rtol=1e-12, atol=1e-12)
    before = _snapshot(m)
    forward(m, x)
    assert _snapshot(m) == before


def test_forward_errors():
    m = build_mlp([4, 3], seed=0)
    with pytest.raises(ValueError, match="does not match"):
        forward(m, np.zeros((2, 5)))
    x = np.zeros((1, 4))
    x[0, 0] = np.inf
    with pytest.raises(NonFiniteActivation):
        forward(m, x)


def test_graph_rejects_broken_chain():
    with pytest.raises(ValueError):
        ModelGraph([Dense(4, 3, "a"), Dense(5, 2, "b")], "mlp", 4)
    with pytest.raises(ValueError):
        ModelGraph([Dense(4, 3, "a")], "tree", 4)


def test_parameter_names_unique():
    for m in (build_twin_classifier(10, 0), build_autoencoder(0), build_generator(0), build_discriminator(0)):
        names = list(m.parameters())
        assert len(names) == len(set(names))


def test_architecture_widths():
    assert build_twin_classifier(10, 0).prefix().output_dim == 100
    assert build_autoencoder(0).prefix().output_dim == 100
    assert build_discriminator(0).prefix().output_dim == 100
    assert build_generator(0).input_dim == 64 and build_generator(0).output_dim == 392


# -- backward -------------------------------------------------------------------

def test_stationary_point():
    d = Dense(3, 2, "lin")
    d.W[...] = 0
    m = ModelGraph([d], "mlp", 3)
    _, grads = backward(m, "mse", np.zeros((4, 3)), np.zeros((4, 2)))
    assert all(np.all(g == 0) for g in grads.values())


def test_perfect_softmax_prediction():
    d = Dense(4, 4, "lin")
    d.W[...] = 50.0 * np.eye(4)
    m = ModelGraph([d], "mlp", 4)
    x = np.eye(4)
    loss, grads = backward(m, "softmax-xent", x, np.arange(4))
    assert loss < 1e-6
    assert math.sqrt(sum(float(np.sum(g * g)) for g in grads.values())) < 1e-6


def test_unknown_loss():
    with pytest.raises(ValueError, match="unknown loss"):
        backward(build_mlp([2, 2], 0), "hinge", np.zeros((1, 2)), np.zeros(1))


def test_loss_shape_mismatch():
    m = build_mlp([3, 2], 0)
    with pytest.raises(ValueError):
        backward(m, "mse", np.zeros((4, 3)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        backward(m, "softmax-xent", np.zeros((4, 3)), np.zeros(5, dtype=int))


def _targets(kind, n, out, rng):
    if kind == "softmax-xent":
        return rng.integers(0, out, size=n)
    if kind == "sigmoid-bce":
        return rng.integers(0, 2, size=(n, out)).astype(float)
    if kind == "mse":
        return rng.normal(size=(n, out))
    return rng.choice([-1.0, 1.0], size=(n, out))


def _fd_max_rel_error(model, kind, x, t, eps=1e-4):
    _, grads = backward(model, kind, x, t)
    worst = 0.0
    for name, p in model.parameters().items():
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up, _ = backward(model, kind, x, t)
            p[idx] = old - eps
            down, _ = backward(model, kind, x, t)
            p[idx] = old
            num[idx] = (up - down) / (2 * eps)
        a = grads[name]
        rel = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
        worst = max(worst, float(rel.max()))
    return worst


def _small_models(rng):
    seed = int(rng.integers(2**32))
    yield "relu", build_mlp([4, 6, 3], seed, "relu")
    yield "sigmoid", build_mlp([4, 6, 3], seed, "sigmoid")
    yield "tanh", build_mlp([4, 5, 5, 3], seed, "tanh")
    r = np.random.default_rng(seed)
    twin = Twin(
        Sequential([Dense(2, 4, "a", r), Tanh(), Dense(4, 2, "b", r), ReLU()]),
        Sequential([Dense(2, 3, "a", r), Sigmoid()]),
        split=2,
    )
    yield "twin", ModelGraph([twin, Dense(5, 3, "head", r)], "twin-mlp", 4)
    yield "sigmoid-out", ModelGraph([Dense(4, 5, "a", r), ReLU(), Dense(5, 3, "b", r), Sigmoid()], "mlp", 4)


@pytest.mark.parametrize("kind", ["softmax-xent", "sigmoid-bce", "mse", "wasserstein-linear"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    for _, model in _small_models(rng):
        assert model.num_parameters() <= 200
        x = rng.normal(size=(5, 4))
        t = _targets(kind, 5, 3, rng)
        assert _fd_max_rel_error(model, kind, x, t) < 1e-4


def test_input_gradient_matches_finite_differences():
    m = build_mlp([3, 4, 1], 7, "tanh")
    x = np.random.default_rng(3).normal(size=(2, 3))
    out, caches = m.run(x)
    dx, _ = m.pullback(caches, np.ones_like(out))
    num = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += 1e-5
        xm[idx] -= 1e-5
        num[idx] = (m(xp).sum() - m(xm).sum()) / 2e-5
    np.testing.assert_allclose(dx, num, rtol=1e-6, atol=1e-9)


# -- supervised -----------------------------------------------------------------

def test_supervised_zero_lr_keeps_parameters(bank):
    d = gen_dataset(bank, CorruptionParams(1.0, 0.0), 200, seed=0)
    m = build_twin_classifier(10, 0)
    before = _snapshot(m)
    train_supervised(m, d, TrainConfig(epochs=1, lr=0.0, optimizer="sgd"))
    assert _snapshot(m) == before
    train_supervised(m, d, TrainConfig(epochs=1, lr=0.0))
    assert _snapshot(m) == before


def test_supervised_deterministic(bank):
    d = gen_dataset(bank, CorruptionParams(0.5, 0.5), 300, seed=1)
    a, b = build_twin_classifier(10, 3), build_twin_classifier(10, 3)
    ra = train_supervised(a, d, TrainConfig(epochs=2, seed=5))
    rb = train_supervised(b, d, TrainConfig(epochs=2, seed=5))
    assert _snapshot(a) == _snapshot(b)
    assert ra.metrics.to_csv() == rb.metrics.to_csv()


def test_supervised_learns_left_digit(bank):
    d = gen_dataset(bank, CorruptionParams(1.0, 0.0), 4000, seed=2)
    res = train_supervised(build_twin_classifier(10, 0), d, TrainConfig(epochs=10, seed=0))
    assert res.metrics.values("accuracy")[-1] >= 0.90


def test_supervised_head_width_checked(bank):
    d = gen_dataset(bank, CorruptionParams(1.0, 0.0), 20, seed=0)
    with pytest.raises(ValueError, match="head width"):
        train_supervised(build_twin_classifier(7, 0), d, TrainConfig(epochs=1))


def test_full_batch_loss_decreases_monotonically():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(60, 3))
    y = (x @ np.array([1.0, -2.0, 0.5]) > 0).astype(int)
    m = build_mlp([3, 2], 1)
    log = MetricLog()
    from featcomp.grad_engine.train import _fit

    _fit(m, x, y, "softmax-xent", TrainConfig(optimizer="sgd", lr=0.05, batch_size=60, epochs=40), log)
    losses = log.values("loss")
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_divergence_is_reported(bank):
    d = gen_dataset(bank, CorruptionParams(1.0, 0.0), 64, seed=0)
    with np.errstate(all="ignore"), pytest.raises(TrainingDivergence):
        train_supervised(build_twin_classifier(10, 0), d, TrainConfig(optimizer="sgd", lr=1e300, epochs=3))


@pytest.mark.parametrize(
    "kw",
    [dict(lr=-1.0), dict(lr=float("nan")), dict(optimizer="rmsprop"), dict(batch_size=0), dict(wgan_clip=0.0),
     dict(n_critic=0), dict(gan_balance="greedy"), dict(tau_d=0.0), dict(seed=-1)],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# -- probe ----------------------------------------------------------------------

def test_probe_on_perfect_features():
    rng = np.random.default_rng(0)
    y_tr, y_te = rng.integers(0, 10, 2000), rng.integers(0, 10, 1000)
    res = fit_probe(np.eye(10)[y_tr], y_tr, np.eye(10)[y_te], y_te, 10, TrainConfig(epochs=10, lr=1e-2))
    assert res.accuracy >= 0.99


def test_probe_on_constant_features():
    rng = np.random.default_rng(1)
    n = 2000
    y_tr, y_te = rng.integers(0, 10, n), rng.integers(0, 10, n)
    z = np.ones((n, 5))
    res = fit_probe(z, y_tr, z, y_te, 10, TrainConfig(epochs=5, lr=1e-2))
    # a constant-feature probe can only predict a single class
    assert abs(res.accuracy - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / n) + np.abs(np.bincount(y_te, minlength=10) / n - 0.1).max()
    assert len(set(res.predict(z).tolist())) == 1


def test_probe_shape_mismatch():
    with pytest.raises(ValueError):
        fit_probe(np.zeros((4, 3)), np.zeros(4, int), np.zeros((4, 2)), np.zeros(4, int), 2, TrainConfig())
    probe = build_mlp([5, 2], 0)
    with pytest.raises(ValueError, match="probe expects"):
        fit_probe(np.zeros((4, 3)), np.zeros(4, int), np.zeros((4, 3)), np.zeros(4, int), 2, TrainConfig(), probe)


def test_untrained_extractor_beats_chance(bank):
    p = CorruptionParams(1.0, 0.0)
    tr, te = gen_dataset(bank, p, 2000, seed=0), gen_dataset(bank, p, 1000, seed=1, split="test")
    res = train_probe(FeatureExtractor(build_twin_classifier(10, 0)), tr, te, "y_r")
    assert res.accuracy > 0.1 + 3 * math.sqrt(0.09 / 1000)


def test_freeze_contract(bank):
    p = CorruptionParams(1.0, 0.0)
    tr, te = gen_dataset(bank, p, 300, seed=0), gen_dataset(bank, p, 100, seed=1, split="test")
    m = build_twin_classifier(10, 0)
    fe = FeatureExtractor(m)
    before = _snapshot(fe.graph)
    train_probe(fe, tr, te, "y_r", TrainConfig(epochs=2))
    assert _snapshot(fe.graph) == before
    assert fe.frozen
    with pytest.raises(ValueError):
        next(iter(fe.parameters().values()))[...] = 0.0
    # the extractor is a copy: training the source model later does not leak into it
    train_supervised(m, tr, TrainConfig(epochs=1))
    assert _snapshot(fe.graph) == before


def test_probe_requires_frozen_extractor(bank):
    p = CorruptionParams(1.0, 0.0)
    d = gen_dataset(bank, p, 50, seed=0)
    m = build_twin_classifier(10, 0)
    with pytest.raises(ValueError, match="frozen"):
        train_probe(m.prefix(), d, d)


# -- autoencoder ----------------------------------------------------------------

def test_autoencoder_memorizes_four_vectors():
    x = np.eye(4)
    m = build_mlp([4, 8, 4], seed=0)
    log = fit_reconstruction(m, x, TrainConfig(epochs=1500, lr=1e-2, batch_size=4))
    assert log.values("holdout_mse")[-1] < 1e-4


def test_autoencoder_zero_lr_is_flat(bank):
    d = gen_dataset(bank, CorruptionParams(1.0, 0.0), 100, seed=0)
    res = train_autoencoder(d, TrainConfig(epochs=2, lr=0.0))
    assert len(set(res.metrics.values("holdout_mse"))) == 1


def test_autoencoder_reconstruction_halves(bank):
    d = gen_dataset(bank, CorruptionParams(1.0, 0.0), 3000, seed=0)
    res = train_autoencoder(d, TrainConfig(epochs=5, seed=0))
    assert res.final_mse < 0.5 * res.initial_mse
    assert res.extractor.width == 100


# -- adversarial ----------------------------------------------------------------

def _separable(n=512, seed=0):
    rng = np.random.default_rng(seed)
    real = np.clip(rng.normal(0.8, 0.05, size=(n, 392)), 0, 1)
    return real


def test_discriminator_alone_separates():
    res = train_gan(_separable(), TrainConfig(epochs=10, k_g=0, seed=0))
    assert set(res.trace.actors()) == {"D"}
    assert res.trace.d_losses()[-5:].mean() < 0.1


def test_indistinguishable_batches_force_confusion():
    rng = np.random.default_rng(0)
    disc = build_discriminator(0, in_dim=20)
    params = disc.parameters()
    opt = Adam(1e-2)
    for _ in range(300):
        x = rng.normal(size=(64, 20))
        s, caches = disc.run(x)
        lr_, gr = sigmoid_bce(s, np.ones(64))
        lf_, gf = sigmoid_bce(s, np.zeros(64))
        _, g = disc.pullback(caches, gr + gf)
        opt.step(params, g)
    x = rng.normal(size=(2000, 20))
    s = disc(x)
    v = sigmoid_bce(s, np.ones(2000))[0] + sigmoid_bce(s, np.zeros(2000))[0]
    assert v == pytest.approx(math.log(4), abs=1e-3)
    p_real = 1 / (1 + np.exp(-s))
    assert np.abs(p_real - 0.5).mean() < 0.01


def test_gan_alternation_and_trace_csv():
    res = train_gan(_separable(128), TrainConfig(epochs=2, batch_size=32, k_d=2, k_g=1, seed=0))
    assert res.trace.actors() == ["D", "D", "G", "D", "D", "G", "D", "D"]
    lines = res.trace.to_csv().splitlines()
    assert lines[0] == "step,actor,d_loss,g_loss" and len(lines) == 9


def test_gan_threshold_rule():
    res = train_gan(_separable(256), TrainConfig(epochs=4, batch_size=32, gan_balance="threshold", seed=0))
    for actor, d_loss in zip(res.trace.actors(), res.trace.d_losses()):
        assert (actor == "D") == (d_loss > math.log(2))


def test_gan_deterministic():
    cfg = TrainConfig(epochs=1, batch_size=64, seed=3)
    a, b = train_gan(_separable(256), cfg), train_gan(_separable(256), cfg)
    assert a.trace.to_csv() == b.trace.to_csv()
    assert _snapshot(a.generator) == _snapshot(b.generator)


def test_wgan_clip_contract():
    clip = 0.01
    seen = []

    def check(step, gen, critic):
        seen.append(max(float(np.abs(p).max()) for p in critic.parameters().values()))

    train_wgan(_separable(256), TrainConfig(epochs=3, batch_size=32, wgan_clip=clip, seed=0), on_step=check)
    assert len(seen) == 24 and max(seen) <= clip


def test_wgan_critic_alone_gap_grows():
    res = train_wgan(_separable(), TrainConfig(epochs=10, k_g=0, lr=1e-4, seed=0))
    gap = -res.trace.d_losses()
    assert gap[-5:].mean() > gap[:5].mean() + 1e-3


def test_clip_parameters():
    p = {"w": np.array([-1.0, 0.005, 3.0])}
    clip_parameters(p, 0.01)
    assert p["w"].tolist() == [-0.01, 0.005, 0.01]


def test_adversarial_divergence_is_reported():
    x = _separable(64)
    with np.errstate(all="ignore"), pytest.raises(TrainingDivergence):
        train_gan(x, TrainConfig(optimizer="sgd", lr=1e300, epochs=3, batch_size=16))


# -- checkpoints / metrics ------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    m = build_discriminator(0)
    path = tmp_path / "d.fcmg"
    save_checkpoint(m, path)
    ck = load_checkpoint(path)
    assert ck.topology == "discriminator"
    fresh = restore(build_discriminator(1), ck)
    for k, v in m.parameters().items():
        assert np.array_equal(fresh.parameters()[k], v.astype(np.float32).astype(np.float64))


def test_checkpoint_errors():
    raw = dumps_checkpoint(build_generator(0))
    bad = bytearray(raw)
    bad[40] ^= 1
    with pytest.raises(CheckpointError, match="checksum"):
        loads_checkpoint(bytes(bad))
    with pytest.raises(CheckpointError, match="magic"):
        loads_checkpoint(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        restore(build_discriminator(0), loads_checkpoint(raw))


def test_metrics_csv():
    log = MetricLog()
    log.add(1, "loss", 0.5)
    log.add(2, "loss", 0.25)
    assert log.to_csv() == "step,metric,value\n1,loss,0.5\n2,loss,0.25\n"
