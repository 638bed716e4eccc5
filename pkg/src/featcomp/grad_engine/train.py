"""Training loops: supervised twin classifier, logistic probe, autoencoder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .graph import FeatureExtractor, ModelGraph, NonFiniteActivation
from .layers import Dense
from .losses import get_loss
from .models import build_autoencoder
from .optim import make_optimizer

BALANCE_RULES = ("alternate", "threshold")


class TrainingDivergence(RuntimeError):
    def __init__(self, step: int, what: str):
        super().__init__(f"training diverged at step {step}: {what}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 64
    epochs: int = 5
    seed: int = 0
    wgan_clip: float = 0.01
    n_critic: int = 5
    gan_balance: str = "alternate"
    k_d: int = 1
    k_g: int = 1
    tau_d: float = math.log(2.0)
    noise_dim: int = 64

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        # lr == 0 is accepted so zero-step runs can be checked
        if not (math.isfinite(self.lr) and self.lr >= 0):
            raise ValueError("learning rate must be finite and non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not self.wgan_clip > 0:
            raise ValueError("wgan_clip must be > 0")
        if self.n_critic < 1 or self.k_d < 1 or self.k_g < 0:
            raise ValueError("n_critic and k_d must be >= 1, k_g >= 0")
        if self.gan_balance not in BALANCE_RULES:
            raise ValueError(f"gan_balance must be one of {BALANCE_RULES}")
        if not self.tau_d > 0:
            raise ValueError("tau_d must be > 0")
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass
class MetricLog:
    rows: list = field(default_factory=list)

    def add(self, step: int, metric: str, value: float) -> None:
        self.rows.append((int(step), metric, float(value)))

    def values(self, metric: str) -> list[float]:
        return [v for _, m, v in self.rows if m == metric]

    def to_csv(self) -> str:
        lines = ["step,metric,value"] + [f"{s},{m},{v!r}" for s, m, v in self.rows]
        return "\n".join(lines) + "\n"


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield perm[i: i + batch_size]


def _check(loss: float, step: int, what: str) -> None:
    if not math.isfinite(loss):
        raise TrainingDivergence(step, f"{what} loss is {loss}")


def _fit(model: ModelGraph, x: np.ndarray, y, loss_kind: str, cfg: TrainConfig, log: MetricLog,
         on_epoch=None) -> None:
    loss_fn = get_loss(loss_kind)
    opt = make_optimizer(cfg)
    params = model.parameters()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        total, seen = 0.0, 0
        try:
            for idx in _batches(x.shape[0], cfg.batch_size, rng):
                out, caches = model.run(x[idx])
                loss, dout = loss_fn(out, y[idx])
                _check(loss, step, loss_kind)
                _, grads = model.pullback(caches, dout)
                opt.step(params, grads)
                step += 1
                total += loss * idx.size
                seen += idx.size
            log.add(epoch, "loss", total / seen)
            if on_epoch is not None:
                on_epoch(epoch)
        except NonFiniteActivation as e:
            raise TrainingDivergence(step, str(e)) from e


def accuracy(model, x: np.ndarray, y: np.ndarray, batch_size: int = 2048) -> float:
    if x.shape[0] == 0:
        raise ValueError("empty evaluation set")
    hits = 0
    for i in range(0, x.shape[0], batch_size):
        hits += int(np.sum(np.argmax(model(x[i: i + batch_size]), axis=1) == y[i: i + batch_size]))
    return hits / x.shape[0]


@dataclass
class TrainResult:
    model: ModelGraph
    metrics: MetricLog


def train_supervised(model: ModelGraph, data, cfg: TrainConfig, target: str = "y_l") -> TrainResult:
    """Softmax training of ``model`` (in place) on one label of ``data``."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    if model.output_dim != data.params.num_classes:
        raise ValueError(f"head width {model.output_dim} != num_classes {data.params.num_classes}")
    x, y = data.inputs(), data.labels(target)
    log = MetricLog()
    _fit(model, x, y, "softmax-xent", cfg, log, lambda e: log.add(e, "accuracy", accuracy(model, x, y)))
    return TrainResult(model, log)


# -- probe ------------------------------------------------------------------

@dataclass
class ProbeResult:
    probe: ModelGraph
    accuracy: float
    train_accuracy: float
    mean: np.ndarray
    scale: np.ndarray
    metrics: MetricLog

    def predict(self, z: np.ndarray) -> np.ndarray:
        return np.argmax(self.probe((z - self.mean) / self.scale), axis=1)


def fit_probe(train_z: np.ndarray, train_y: np.ndarray, test_z: np.ndarray, test_y: np.ndarray,
              num_classes: int, cfg: TrainConfig, probe: Optional[ModelGraph] = None) -> ProbeResult:
    """Multinomial logistic regression on standardized features; accuracy is on the test set."""
    train_z = np.asarray(train_z, dtype=np.float64)
    test_z = np.asarray(test_z, dtype=np.float64)
    if train_z.ndim != 2 or test_z.ndim != 2 or train_z.shape[1] != test_z.shape[1]:
        raise ValueError(f"feature shapes disagree: {train_z.shape} vs {test_z.shape}")
    width = train_z.shape[1]
    if probe is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        probe = ModelGraph([Dense(width, num_classes, "probe", rng)], "mlp", width)
        # logistic regression starts from zero weights
        for p in probe.parameters().values():
            p[...] = 0.0
    elif probe.input_dim != width or probe.output_dim != num_classes:
        raise ValueError(f"probe expects {probe.input_dim} -> {probe.output_dim}, features are {width} wide")
    mean = train_z.mean(axis=0)
    scale = train_z.std(axis=0)
    scale[scale < 1e-8] = 1.0
    zs = (train_z - mean) / scale
    log = MetricLog()
    _fit(probe, zs, np.asarray(train_y), "softmax-xent", cfg, log)
    train_acc = accuracy(probe, zs, train_y)
    test_acc = accuracy(probe, (test_z - mean) / scale, test_y)
    log.add(cfg.epochs, "train_accuracy", train_acc)
    log.add(cfg.epochs, "test_accuracy", test_acc)
    return ProbeResult(probe, test_acc, train_acc, mean, scale, log)


def train_probe(features, train, test, target: str = "y_r", cfg: Optional[TrainConfig] = None) -> ProbeResult:
    """Fit a probe on frozen ``features`` of ``train`` and score it on ``test``."""
    cfg = cfg or TrainConfig(epochs=20, lr=1e-2)
    if not getattr(features, "frozen", False):
        raise ValueError("feature extractor must be frozen before probing")
    if train.params.num_classes != test.params.num_classes:
        raise ValueError("train and test disagree on num_classes")
    z_tr, z_te = features(train.inputs()), features(test.inputs())
    width = getattr(features, "width", None)
    if width is not None and (z_tr.shape[1] != width or z_te.shape[1] != width):
        raise ValueError(f"extractor declares width {width}, produced {z_tr.shape[1]}")
    return fit_probe(z_tr, train.labels(target), z_te, test.labels(target), train.params.num_classes, cfg)


# -- autoencoder ------------------------------------------------------------

@dataclass
class AEResult:
    extractor: FeatureExtractor
    model: ModelGraph
    metrics: MetricLog

    @property
    def initial_mse(self) -> float:
        return self.metrics.values("holdout_mse")[0]

    @property
    def final_mse(self) -> float:
        return self.metrics.values("holdout_mse")[-1]


def fit_reconstruction(model: ModelGraph, x: np.ndarray, cfg: TrainConfig, holdout: Optional[np.ndarray] = None) -> MetricLog:
    """Train ``model`` to reproduce ``x``; logs held-out mse before and after every epoch."""
    holdout = x if holdout is None else holdout
    log = MetricLog()

    def evaluate(epoch):
        log.add(epoch, "holdout_mse", get_loss("mse")(model(holdout), holdout)[0])

    evaluate(0)
    _fit(model, x, x, "mse", cfg, log, evaluate)
    return log


def train_autoencoder(data, cfg: TrainConfig, holdout=None, model: Optional[ModelGraph] = None) -> AEResult:
    """Twin encoder / mirrored decoder trained on pixel mse.

    Without ``holdout`` the last tenth of ``data`` is held out.
    """
    x = data.inputs()
    if holdout is None:
        cut = x.shape[0] - max(1, x.shape[0] // 10)
        if cut < 1:
            raise ValueError("need at least two examples to hold one out")
        x, x_hold = x[:cut], x[cut:]
    else:
        x_hold = holdout.inputs()
    model = model or build_autoencoder(cfg.seed, half=x.shape[1] // 2)
    log = fit_reconstruction(model, x, cfg, x_hold)
    return AEResult(FeatureExtractor(model), model, log)


__all__ = [
    "AEResult", "MetricLog", "ProbeResult", "TrainConfig", "TrainResult", "TrainingDivergence",
    "accuracy", "fit_probe", "fit_reconstruction", "train_autoencoder", "train_probe",
    "train_supervised",
]
