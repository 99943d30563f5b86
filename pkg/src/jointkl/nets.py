"""Stacked ReLU MLPs in plain numpy.

Parameters are lists of ``(W, b)`` with a leading member axis: ``W`` has shape
``(K, fan_in, fan_out)`` and ``b`` has shape ``(K, fan_out)``.  Inputs may be
shared ``(n, D)`` or per-member ``(K, n, D)``.
"""

from __future__ import annotations

import numpy as np

Params = list[tuple[np.ndarray, np.ndarray]]


def xavier_uniform(rng: np.random.Generator, members: int, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(members, fan_in, fan_out))


def init_mlp(rng: np.random.Generator, sizes: list[int], members: int = 1) -> Params:
    """Xavier-uniform weights, zero biases; ``sizes`` = [D, h1, ..., C]."""
    return [
        (xavier_uniform(rng, members, a, b), np.zeros((members, b)))
        for a, b in zip(sizes[:-1], sizes[1:])
    ]


def forward(params: Params, x: np.ndarray) -> np.ndarray:
    """Logits of shape ``(K, n, C)``."""
    h = x
    for W, b in params[:-1]:
        h = np.maximum(h @ W + b[:, None, :], 0.0)
    W, b = params[-1]
    return h @ W + b[:, None, :]


def forward_with_activations(params: Params, x: np.ndarray):
    acts = [x]
    h = x
    for W, b in params[:-1]:
        h = np.maximum(h @ W + b[:, None, :], 0.0)
        acts.append(h)
    W, b = params[-1]
    return h @ W + b[:, None, :], acts


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))
