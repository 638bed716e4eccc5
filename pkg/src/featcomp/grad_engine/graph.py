"""Model graphs, the forward/backward entry points, and frozen feature extractors."""

from __future__ import annotations

import copy
from typing import Optional, Sequence

import numpy as np

from .layers import Layer, Sequential
from .losses import get_loss

TOPOLOGIES = ("twin-mlp", "mlp", "autoencoder", "generator", "discriminator", "critic")


class NonFiniteActivation(ArithmeticError):
    pass


class ModelGraph:
    """An ordered stack of layers with a topology tag and a designated feature prefix."""

    def __init__(self, layers: Sequence[Layer], topology: str, input_dim: int, feature_layers: Optional[int] = None):
        if topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {topology!r}")
        self.body = Sequential(layers)
        self.topology = topology
        self.input_dim = input_dim
        self.output_dim = self.body.out_dim(input_dim)  # raises on a broken chain
        n = len(self.body.layers)
        self.feature_layers = n if feature_layers is None else feature_layers
        if not 0 < self.feature_layers <= n:
            raise ValueError("feature prefix must cover 1..len(layers) layers")
        names = [k for k, _ in self.body.named_params()]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")

    @property
    def layers(self) -> list[Layer]:
        return self.body.layers

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.body.named_params())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def spec(self) -> tuple:
        return (self.topology, self.input_dim, self.feature_layers, self.body.spec())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"{self.topology}: batch shape {x.shape} does not match input width {self.input_dim}")
        return x

    def run(self, x: np.ndarray):
        """Forward pass keeping caches for :meth:`pullback`."""
        x = self._check_input(x)
        caches = []
        for i, layer in enumerate(self.body.layers):
            x, c = layer.forward(x)
            if not np.isfinite(x).all():
                raise NonFiniteActivation(f"non-finite activation after layer {i} ({layer.name})")
            caches.append(c)
        return x, caches

    def pullback(self, caches, grad_out: np.ndarray):
        """Return ``(dL/dinput, named parameter gradients)``."""
        return self.body.backward(caches, grad_out)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.run(x)[0]

    def prefix(self, n: Optional[int] = None) -> "ModelGraph":
        n = self.feature_layers if n is None else n
        return ModelGraph(self.body.layers[:n], self.topology, self.input_dim)

    def copy(self) -> "ModelGraph":
        return copy.deepcopy(self)


def forward(model: ModelGraph, batch: np.ndarray) -> np.ndarray:
    return model(batch)


def backward(model: ModelGraph, loss_kind: str, batch: np.ndarray, targets):
    """Return ``(loss, grads)`` for one batch; gradients are keyed like ``parameters()``."""
    loss_fn = get_loss(loss_kind)
    out, caches = model.run(batch)
    loss, dout = loss_fn(out, targets)
    _, grads = model.pullback(caches, dout)
    return loss, grads


class FeatureExtractor:
    """Read-only copy of a model prefix; calling it maps inputs to features."""

    def __init__(self, model: ModelGraph, n_layers: Optional[int] = None):
        self.graph = model.prefix(n_layers).copy()
        for p in self.graph.parameters().values():
            p.setflags(write=False)
        self.width = self.graph.output_dim
        self.input_dim = self.graph.input_dim

    @property
    def frozen(self) -> bool:
        return all(not p.flags.writeable for p in self.graph.parameters().values())

    def parameters(self) -> dict[str, np.ndarray]:
        return self.graph.parameters()

    def __call__(self, x: np.ndarray, batch_size: int = 2048) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] == 0:
            return np.zeros((0, self.width))
        return np.concatenate([self.graph(x[i: i + batch_size]) for i in range(0, x.shape[0], batch_size)])
