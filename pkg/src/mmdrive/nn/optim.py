"""Adam optimizer: adaptive moments with bias correction, in-place updates."""

from __future__ import annotations

import numpy as np


class Adam:
    """Standard adaptive-moment optimizer over a keyed parameter dict.

    Parameters are mutated in place so networks holding the same arrays see
    the updates. The update is deterministic given parameters and gradients;
    state (first/second moments, step count) belongs to a single owner.
    """

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        """Apply one update from a gradient dict keyed like the parameters."""
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for key, param in self.params.items():
            g = grads.get(key)
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise ValueError(f"non-finite gradient for parameter {key}")
            m = self._m[key]
            v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            param -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
