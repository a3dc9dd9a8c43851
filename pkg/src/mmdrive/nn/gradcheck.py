"""Central finite-difference verification of analytic gradients.

The loss callable must be a deterministic function of the parameter arrays
(reseed any dropout generator per call). Relative errors use
|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradient pairs from
amplifying finite-difference noise. Finite differences are undefined across a
ReLU kink, so fixtures should keep pre-activations away from zero (see
``relu_margin``).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-3
_DENOM_FLOOR = 1e-4


def numeric_gradients(loss_fn: Callable[[], float],
                      params: dict, step: float = DEFAULT_STEP) -> dict:
    """Central differences of ``loss_fn`` with respect to every element."""
    grads = {}
    for key, arr in params.items():
        flat = arr.reshape(-1)
        out = np.zeros_like(flat)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = loss_fn()
            flat[i] = original - step
            minus = loss_fn()
            flat[i] = original
            out[i] = (plus - minus) / (2.0 * step)
        grads[key] = out.reshape(arr.shape)
    return grads


def max_relative_error(analytic: dict, numeric: dict,
                       floor: float = _DENOM_FLOOR) -> float:
    worst = 0.0
    for key, a in analytic.items():
        n = numeric[key]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def check_gradients(loss_fn: Callable[[], float], analytic: dict,
                    params: dict, step: float = DEFAULT_STEP,
                    floor: float = _DENOM_FLOOR) -> float:
    """Max relative error between analytic gradients and central differences."""
    return max_relative_error(analytic, numeric_gradients(loss_fn, params, step),
                              floor=floor)


def relu_margin(net, x: np.ndarray) -> float:
    """Smallest |pre-activation| feeding any ReLU of a Sequential net.

    A margin comfortably above the finite-difference step guarantees no kink
    is crossed while perturbing parameters.
    """
    from .layers import ReLU

    margin = np.inf
    out = x
    for layer in net.layers:
        if isinstance(layer, ReLU):
            margin = min(margin, float(np.abs(out).min()))
        out, _ = layer.forward(out, train=False)
    return margin
