"""Pure NumPy training and inference kernels (reference backend).

Works at whatever float precision the arrays carry; the float64 path is
what gradient checks run against. All updates happen in place on the passed
weight/bias arrays.
"""

from __future__ import annotations

import numpy as np

name = "python"


def logits(weights: list[np.ndarray], biases: list[np.ndarray], X: np.ndarray) -> np.ndarray:
    """Final-layer pre-softmax outputs for a batch X of shape (n, d)."""
    last = len(weights) - 1
    A = X
    for l in range(last + 1):
        Z = A @ weights[l] + biases[l]
        A = np.maximum(Z, 0.0) if l < last else Z
    return A


def probabilities(weights: list[np.ndarray], biases: list[np.ndarray], X: np.ndarray) -> np.ndarray:
    """Row-stochastic softmax outputs for a batch X."""
    Z = logits(weights, biases, X)
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def step_batch(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    lr: float,
    freeze_below: int = 0,
) -> float:
    """One SGD step on mean negative log-likelihood; returns the batch loss.

    Layers with index < freeze_below keep their parameters untouched.
    Backpropagation always uses the pre-update weights.
    """
    last = len(weights) - 1
    n = X.shape[0]
    if n == 0:
        return 0.0

    acts = [X]
    A = X
    for l in range(last + 1):
        Z = A @ weights[l] + biases[l]
        A = np.maximum(Z, 0.0) if l < last else Z
        acts.append(A)

    Z = acts[-1] - acts[-1].max(axis=1, keepdims=True)
    E = np.exp(Z)
    P = E / E.sum(axis=1, keepdims=True)
    idx = np.arange(n)
    loss = float(-np.mean(np.log(P[idx, y])))

    G = P
    G[idx, y] -= 1.0
    G /= n
    for l in range(last, freeze_below - 1, -1):
        dW = acts[l].T @ G
        db = G.sum(axis=0)
        if l > freeze_below:
            G = (G @ weights[l].T) * (acts[l] > 0)
        weights[l] -= lr * dW
        biases[l] -= lr * db
    return loss
