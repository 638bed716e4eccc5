"""Differentiable layers with explicit forward caches.

Every layer maps ``x -> (y, cache)`` and ``(cache, dL/dy) -> (dL/dx, grads)``
where ``grads`` is keyed like ``named_params()``. Nothing is stored on the
layer during a pass, so a frozen layer can be evaluated concurrently.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional, Sequence

import numpy as np


class Layer:
    name: str = ""

    def named_params(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(())

    def forward(self, x: np.ndarray):
        raise NotImplementedError

    def backward(self, cache, grad: np.ndarray):
        raise NotImplementedError

    def out_dim(self, in_dim: int) -> int:
        return in_dim

    def spec(self) -> tuple:
        return (type(self).__name__,)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, name: str, rng: Optional[np.random.Generator] = None):
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        # He-style uniform scaling, zero bias
        bound = math.sqrt(6.0 / n_in)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.b = np.zeros(n_out)

    def named_params(self):
        yield "W", self.W
        yield "b", self.b

    def forward(self, x):
        return x @ self.W + self.b, x

    def backward(self, x, grad):
        return grad @ self.W.T, {"W": x.T @ grad, "b": grad.sum(axis=0)}

    def out_dim(self, in_dim):
        if in_dim != self.n_in:
            raise ValueError(f"{self.name}: expects {self.n_in} inputs, got {in_dim}")
        return self.n_out

    def spec(self):
        return ("Dense", self.n_in, self.n_out)


class ReLU(Layer):
    name = "relu"

    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, mask, grad):
        return grad * mask, {}


class Sigmoid(Layer):
    name = "sigmoid"

    def forward(self, x):
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        return y, y

    def backward(self, y, grad):
        return grad * y * (1.0 - y), {}


class Tanh(Layer):
    name = "tanh"

    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, y, grad):
        return grad * (1.0 - y * y), {}


class Sequential(Layer):
    def __init__(self, layers: Sequence[Layer], name: str = ""):
        self.layers = list(layers)
        self.name = name

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for k, v in layer.named_params():
                yield f"{i}.{layer.name}.{k}", v

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def backward(self, caches, grad):
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            grad, g = layer.backward(caches[i], grad)
            for k, v in g.items():
                grads[f"{i}.{layer.name}.{k}"] = v
        return grad, grads

    def out_dim(self, in_dim):
        for layer in self.layers:
            in_dim = layer.out_dim(in_dim)
        return in_dim

    def spec(self):
        return ("Sequential",) + tuple(layer.spec() for layer in self.layers)


class Twin(Layer):
    """Two independent branches over the left / right column blocks, concatenated."""

    def __init__(self, left: Sequential, right: Sequential, split: int, name: str = "twin"):
        self.left, self.right = left, right
        self.split = split
        self.name = name

    def named_params(self):
        for k, v in self.left.named_params():
            yield f"left.{k}", v
        for k, v in self.right.named_params():
            yield f"right.{k}", v

    def forward(self, x):
        yl, cl = self.left.forward(x[:, : self.split])
        yr, cr = self.right.forward(x[:, self.split:])
        return np.concatenate([yl, yr], axis=1), (cl, cr, yl.shape[1])

    def backward(self, cache, grad):
        cl, cr, wl = cache
        gl, gradl = self.left.backward(cl, grad[:, :wl])
        gr, gradr = self.right.backward(cr, grad[:, wl:])
        grads = {f"left.{k}": v for k, v in gradl.items()}
        grads.update({f"right.{k}": v for k, v in gradr.items()})
        return np.concatenate([gl, gr], axis=1), grads

    def out_dim(self, in_dim):
        if in_dim <= self.split:
            raise ValueError(f"{self.name}: input width {in_dim} leaves nothing for the right branch")
        return self.left.out_dim(self.split) + self.right.out_dim(in_dim - self.split)

    def spec(self):
        return ("Twin", self.split, self.left.spec(), self.right.spec())
