"""GAN and WGAN training with explicit update-balancing rules.

Each step draws one real batch and one noise batch, evaluates the
discriminator on both, then updates exactly one network. The number of
steps is ``epochs * ceil(n / batch_size)``, so ``epochs`` counts passes
over the real data regardless of which network a step trains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .graph import FeatureExtractor, ModelGraph, NonFiniteActivation
from .losses import sigmoid_bce, wasserstein_linear
from .models import build_discriminator, build_generator
from .optim import make_optimizer
from .train import TrainConfig, TrainingDivergence


@dataclass
class AdversarialTrace:
    """Per-step record: which network trained and both losses before the update."""

    rows: list = field(default_factory=list)

    def add(self, step: int, actor: str, d_loss: float, g_loss: float) -> None:
        self.rows.append((step, actor, float(d_loss), float(g_loss)))

    def actors(self) -> list[str]:
        return [r[1] for r in self.rows]

    def d_losses(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    def g_losses(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    def to_csv(self) -> str:
        lines = ["step,actor,d_loss,g_loss"] + [f"{s},{a},{d!r},{g!r}" for s, a, d, g in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class GanResult:
    extractor: FeatureExtractor
    generator: ModelGraph
    discriminator: ModelGraph
    trace: AdversarialTrace


def _real_stream(x: np.ndarray, batch_size: int, rng: np.random.Generator, steps: int):
    n = x.shape[0]
    done = 0
    while done < steps:
        perm = rng.permutation(n)
        for i in range(0, n, batch_size):
            if done == steps:
                return
            yield x[perm[i: i + batch_size]]
            done += 1


def _alternation(k_first: int, k_second: int):
    period = k_first + k_second
    return lambda step: step % period < k_first


class _Pair:
    """Shared forward pass of D on a real and a generated batch."""

    def __init__(self, gen: ModelGraph, disc: ModelGraph, real: np.ndarray, z: np.ndarray, step: int):
        try:
            self.fake, self.g_caches = gen.run(z)
            self.s_real, self.r_caches = disc.run(real)
            self.s_fake, self.f_caches = disc.run(self.fake)
        except NonFiniteActivation as e:
            raise TrainingDivergence(step, str(e)) from e


def _check(step: int, *losses: float) -> None:
    for v in losses:
        if not math.isfinite(v):
            raise TrainingDivergence(step, f"loss is {v}")


def _merge(a: dict, b: dict) -> dict:
    return {k: a[k] + b[k] for k in a}


def _noise(rng, n, dim):
    return rng.uniform(-1.0, 1.0, size=(n, dim))


def _models(x, cfg, generator, discriminator, topology):
    gen = generator or build_generator(cfg.seed, out_dim=x.shape[1], noise_dim=cfg.noise_dim)
    disc = discriminator or build_discriminator(cfg.seed + 1, in_dim=x.shape[1], topology=topology)
    if gen.output_dim != x.shape[1] or disc.input_dim != x.shape[1] or disc.output_dim != 1:
        raise ValueError("generator / discriminator shapes do not match the data")
    return gen, disc


def _steps(n: int, cfg: TrainConfig) -> int:
    return cfg.epochs * -(-n // cfg.batch_size)


def train_gan(data, cfg: TrainConfig, generator: Optional[ModelGraph] = None,
              discriminator: Optional[ModelGraph] = None, on_step: Optional[Callable] = None) -> GanResult:
    """Standard GAN with non-saturating generator loss.

    ``cfg.gan_balance``: ``alternate`` runs k_d discriminator steps then k_g
    generator steps (k_g = 0 trains D alone); ``threshold`` trains D while
    its loss exceeds ``tau_d`` and G otherwise. D's loss is the sum of the
    real and fake cross-entropies, so confusion reads log 4 nats.
    ``on_step(step, generator, discriminator)`` runs after every update.
    """
    x = data if isinstance(data, np.ndarray) else data.inputs()
    gen, disc = _models(x, cfg, generator, discriminator, "discriminator")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    d_opt, g_opt = make_optimizer(cfg), make_optimizer(cfg)
    d_params, g_params = disc.parameters(), gen.parameters()
    d_turn = _alternation(cfg.k_d, cfg.k_g)
    trace = AdversarialTrace()
    for step, real in enumerate(_real_stream(x, cfg.batch_size, rng, _steps(x.shape[0], cfg))):
        p = _Pair(gen, disc, real, _noise(rng, real.shape[0], gen.input_dim), step)
        lr_, gr_ = sigmoid_bce(p.s_real, np.ones(real.shape[0]))
        lf_, gf_ = sigmoid_bce(p.s_fake, np.zeros(real.shape[0]))
        d_loss = lr_ + lf_
        g_loss, g_out = sigmoid_bce(p.s_fake, np.ones(real.shape[0]))
        _check(step, d_loss, g_loss)
        if cfg.gan_balance == "threshold":
            train_d = d_loss > cfg.tau_d
        else:
            train_d = d_turn(step)
        if train_d:
            _, g1 = disc.pullback(p.r_caches, gr_)
            _, g2 = disc.pullback(p.f_caches, gf_)
            d_opt.step(d_params, _merge(g1, g2))
        else:
            dx, _ = disc.pullback(p.f_caches, g_out)
            _, gg = gen.pullback(p.g_caches, dx)
            g_opt.step(g_params, gg)
        trace.add(step, "D" if train_d else "G", d_loss, g_loss)
        if on_step is not None:
            on_step(step, gen, disc)
    return GanResult(FeatureExtractor(disc), gen, disc, trace)


def clip_parameters(params: dict, clip: float) -> None:
    for p in params.values():
        np.clip(p, -clip, clip, out=p)


def train_wgan(data, cfg: TrainConfig, generator: Optional[ModelGraph] = None,
               critic: Optional[ModelGraph] = None, on_step: Optional[Callable] = None) -> GanResult:
    """Weight-clipped Wasserstein GAN: n_critic critic steps, then k_g generator steps.

    The critic minimises mean f(fake) - mean f(real), the generator
    minimises -mean f(fake); critic weights are clipped after every update.
    """
    x = data if isinstance(data, np.ndarray) else data.inputs()
    gen, crit = _models(x, cfg, generator, critic, "critic")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
    c_opt, g_opt = make_optimizer(cfg), make_optimizer(cfg)
    c_params, g_params = crit.parameters(), gen.parameters()
    clip_parameters(c_params, cfg.wgan_clip)
    c_turn = _alternation(cfg.n_critic, cfg.k_g)
    trace = AdversarialTrace()
    for step, real in enumerate(_real_stream(x, cfg.batch_size, rng, _steps(x.shape[0], cfg))):
        p = _Pair(gen, crit, real, _noise(rng, real.shape[0], gen.input_dim), step)
        lr_, gr_ = wasserstein_linear(p.s_real, np.ones(real.shape[0]))
        lf_, gf_ = wasserstein_linear(p.s_fake, -np.ones(real.shape[0]))
        c_loss = lr_ + lf_
        g_loss, g_out = wasserstein_linear(p.s_fake, np.ones(real.shape[0]))
        _check(step, c_loss, g_loss)
        train_c = c_turn(step)
        if train_c:
            _, g1 = crit.pullback(p.r_caches, gr_)
            _, g2 = crit.pullback(p.f_caches, gf_)
            c_opt.step(c_params, _merge(g1, g2))
            clip_parameters(c_params, cfg.wgan_clip)
        else:
            dx, _ = crit.pullback(p.f_caches, g_out)
            _, gg = gen.pullback(p.g_caches, dx)
            g_opt.step(g_params, gg)
        trace.add(step, "D" if train_c else "G", c_loss, g_loss)
        if on_step is not None:
            on_step(step, gen, crit)
    return GanResult(FeatureExtractor(crit), gen, crit, trace)
