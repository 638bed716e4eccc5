"""Architecture builders shared by the experiments."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .graph import ModelGraph
from .layers import Dense, ReLU, Sequential, Sigmoid, Tanh, Twin

HALF = 196  # one 14x14 image
HIDDEN = 128
BRANCH_FEATURES = 50
NOISE_DIM = 64

_ACTIVATIONS = {"relu": ReLU, "sigmoid": Sigmoid, "tanh": Tanh}


def _branch(rng, sizes: Sequence[int], final_activation=ReLU) -> Sequential:
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(Dense(a, b, f"fc{i}", rng))
        last = i == len(sizes) - 2
        if not last:
            layers.append(ReLU())
        elif final_activation is not None:
            layers.append(final_activation())
    return Sequential(layers)


def twin_encoder(rng, half: int = HALF, hidden: int = HIDDEN, feat: int = BRANCH_FEATURES) -> Twin:
    return Twin(_branch(rng, [half, hidden, feat]), _branch(rng, [half, hidden, feat]), split=half, name="enc")


def build_twin_classifier(num_classes: int, seed: int, half: int = HALF) -> ModelGraph:
    """Twin encoder (two separate branches, 2x50 features) plus a linear head."""
    rng = np.random.default_rng(seed)
    enc = twin_encoder(rng, half)
    head = Dense(2 * BRANCH_FEATURES, num_classes, "head", rng)
    return ModelGraph([enc, head], "twin-mlp", 2 * half, feature_layers=1)


def build_autoencoder(seed: int, half: int = HALF) -> ModelGraph:
    rng = np.random.default_rng(seed)
    enc = twin_encoder(rng, half)
    dec = Twin(
        _branch(rng, [BRANCH_FEATURES, HIDDEN, half], Sigmoid),
        _branch(rng, [BRANCH_FEATURES, HIDDEN, half], Sigmoid),
        split=BRANCH_FEATURES,
        name="dec",
    )
    return ModelGraph([enc, dec], "autoencoder", 2 * half, feature_layers=1)


def build_generator(seed: int, out_dim: int = 2 * HALF, noise_dim: int = NOISE_DIM) -> ModelGraph:
    rng = np.random.default_rng(seed)
    layers = [Dense(noise_dim, HIDDEN, "fc0", rng), ReLU(), Dense(HIDDEN, out_dim, "fc1", rng), Sigmoid()]
    return ModelGraph(layers, "generator", noise_dim)


def build_discriminator(seed: int, in_dim: int = 2 * HALF, topology: str = "discriminator") -> ModelGraph:
    """input -> 128 -> 100 -> 1 score; features are the 100-unit layer."""
    if topology not in ("discriminator", "critic"):
        raise ValueError("topology must be 'discriminator' or 'critic'")
    rng = np.random.default_rng(seed)
    layers = [
        Dense(in_dim, HIDDEN, "fc0", rng), ReLU(),
        Dense(HIDDEN, 2 * BRANCH_FEATURES, "fc1", rng), ReLU(),
        Dense(2 * BRANCH_FEATURES, 1, "out", rng),
    ]
    return ModelGraph(layers, topology, in_dim, feature_layers=4)


def build_mlp(sizes: Sequence[int], seed: int, activation: str = "relu") -> ModelGraph:
    """Plain MLP with ``activation`` between dense layers and a linear output."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    act = _ACTIVATIONS[activation]
    rng = np.random.default_rng(seed)
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i:
            layers.append(act())
        layers.append(Dense(a, b, f"fc{i}", rng))
    return ModelGraph(layers, "mlp", sizes[0])
