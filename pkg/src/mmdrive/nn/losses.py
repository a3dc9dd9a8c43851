"""Classification losses with fused gradients with respect to logits."""

from __future__ import annotations

import numpy as np

_CLIP = 1e-12


def cross_entropy(probabilities: np.ndarray, target):
    """Multi-class cross-entropy over softmax outputs.

    Accepts a single (k,) probability vector with an integer target or a
    batched (N, k) matrix with (N,) targets. Returns the mean loss and the
    gradient with respect to the pre-softmax logits, (p - onehot) / N, which
    is exact when the probabilities came from a softmax.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    squeeze = p.ndim == 1
    if squeeze:
        p = p[None, :]
    targets = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n, k = p.shape
    if targets.shape != (n,):
        raise ValueError(f"expected {n} targets, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= k):
        bad = targets[(targets < 0) | (targets >= k)][0]
        raise ValueError(f"target class {bad} out of range [0, {k})")
    picked = p[np.arange(n), targets]
    loss = float(-np.log(np.maximum(picked, _CLIP)).mean())
    grad = p.copy()
    grad[np.arange(n), targets] -= 1.0
    grad /= n
    return loss, (grad[0] if squeeze else grad)


def binary_cross_entropy(probabilities: np.ndarray, target,
                         weights: np.ndarray | None = None):
    """Binary cross-entropy over logistic outputs.

    Returns the (optionally sample-weighted) mean loss and the gradient with
    respect to the pre-sigmoid logit, weight * (p - y) / sum(weights).
    """
    p = np.asarray(probabilities, dtype=np.float64).reshape(-1)
    y = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise ValueError(f"probability/target shapes differ: {p.shape} vs {y.shape}")
    if weights is None:
        w = np.ones_like(p)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape != p.shape:
            raise ValueError("weights must align with probabilities")
    total = float(w.sum())
    pc = np.clip(p, _CLIP, 1.0 - _CLIP)
    loss = float((w * -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))).sum() / total)
    grad = w * (p - y) / total
    return loss, grad
