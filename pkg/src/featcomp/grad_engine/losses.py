"""Batch-mean losses returning ``(loss, dloss/doutput)``."""

from __future__ import annotations

import numpy as np


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    return np.exp(-_softplus(-z))


def softmax_xent(logits: np.ndarray, targets: np.ndarray):
    """Cross-entropy of integer class ``targets`` under softmax(logits), in nats."""
    targets = np.asarray(targets)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError(f"softmax-xent wants (n, C) logits and (n,) labels, got {logits.shape}, {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ValueError("label outside the logit range")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(n), targets].mean()
    grad = np.exp(logp)
    grad[np.arange(n), targets] -= 1.0
    return float(loss), grad / n


def sigmoid_bce(logits: np.ndarray, targets: np.ndarray):
    """Binary cross-entropy on logits (nats). ``targets`` in [0, 1], same size as logits."""
    targets = np.asarray(targets, dtype=np.float64).reshape(logits.shape)
    n = logits.shape[0]
    loss = (_softplus(logits) - targets * logits).sum() / n
    return float(loss), (sigmoid(logits) - targets) / n


def mse(outputs: np.ndarray, targets: np.ndarray):
    """Squared error averaged over every element."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != outputs.shape:
        raise ValueError(f"mse shape mismatch {outputs.shape} vs {targets.shape}")
    diff = outputs - targets
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def wasserstein_linear(scores: np.ndarray, signs: np.ndarray):
    """``-mean(sign * score)``: sign +1 pushes a score up, -1 pushes it down."""
    signs = np.asarray(signs, dtype=np.float64).reshape(scores.shape)
    n = scores.shape[0]
    return float(-(signs * scores).sum() / n), -signs / n


LOSSES = {
    "softmax-xent": softmax_xent,
    "sigmoid-bce": sigmoid_bce,
    "mse": mse,
    "wasserstein-linear": wasserstein_linear,
}


def get_loss(kind: str):
    try:
        return LOSSES[kind]
    except KeyError:
        raise ValueError(f"unknown loss {kind!r}; choose from {sorted(LOSSES)}") from None
