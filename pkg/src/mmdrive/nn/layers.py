"""Network layers: forward passes paired with exact reverse-mode gradients.

Conventions: convolutional tensors are batched channels-last (N, H, W, C),
dense tensors are (N, features). Every layer computes in float64; forward
returns (output, cache) and backward consumes the cache from the matching
forward call. Convolutions are stride-1 with 'valid' or 'same' padding,
implemented as window-gather + GEMM; the input gradient is the full
correlation with the spatially flipped, channel-transposed kernel.
"""

from __future__ import annotations

import numpy as np


class LayerShapeError(ValueError):
    """Tensor shape incompatible with a layer's declared geometry."""


class Layer:
    """Base layer: parameter-free identity-style interface."""

    #: parameter name -> array; optimizers mutate these in place
    params: dict[str, np.ndarray]

    def __init__(self) -> None:
        self.params = {}

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, grad: np.ndarray, cache):
        raise NotImplementedError


def _he_uniform(rng: np.random.Generator, fan_in: int,
                shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Sliding (kh, kw) windows of a (N, H, W, C) array as a strided view."""
    n, h, w, c = x.shape
    sn, sh, sw, sc = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(n, h - kh + 1, w - kw + 1, kh, kw, c),
        strides=(sn, sh, sw, sh, sw, sc),
        writeable=False,
    )


class Conv2D(Layer):
    """Stride-1 2-D convolution (cross-correlation) over channels-last input."""

    def __init__(self, kernel: tuple[int, int], in_channels: int,
                 out_channels: int, padding: str = "valid",
                 rng: np.random.Generator | None = None):
        super().__init__()
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
        self.kh, self.kw = kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.padding = padding
        rng = rng or np.random.default_rng()
        fan_in = self.kh * self.kw * in_channels
        self.params = {
            "weight": _he_uniform(rng, fan_in,
                                  (self.kh, self.kw, in_channels, out_channels)),
            "bias": np.zeros(out_channels),
        }

    def _pads(self) -> tuple[int, int, int, int]:
        if self.padding == "valid":
            return 0, 0, 0, 0
        pt = (self.kh - 1) // 2
        pl = (self.kw - 1) // 2
        return pt, self.kh - 1 - pt, pl, self.kw - 1 - pl

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 3 or in_shape[2] != self.in_channels:
            raise LayerShapeError(
                f"Conv2D expects (H, W, {self.in_channels}) input, got {in_shape}"
            )
        h, w, _ = in_shape
        if self.padding == "same":
            return h, w, self.out_channels
        oh, ow = h - self.kh + 1, w - self.kw + 1
        if oh < 1 or ow < 1:
            raise LayerShapeError(
                f"{self.kh}x{self.kw} valid kernel does not fit {h}x{w} input"
            )
        return oh, ow, self.out_channels

    def forward(self, x, train=False, rng=None):
        pt, pb, pl, pr = self._pads()
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if pt or pb or pl or pr else x
        n, hp, wp, _ = xp.shape
        oh, ow = hp - self.kh + 1, wp - self.kw + 1
        cols = _windows(xp, self.kh, self.kw).reshape(n * oh * ow, -1)
        w2 = self.params["weight"].reshape(-1, self.out_channels)
        y = cols @ w2 + self.params["bias"]
        return y.reshape(n, oh, ow, self.out_channels), x

    def backward(self, grad, cache):
        x = cache
        pt, pb, pl, pr = self._pads()
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if pt or pb or pl or pr else x
        n, oh, ow, _ = grad.shape
        g_flat = grad.reshape(n * oh * ow, self.out_channels)

        cols = _windows(xp, self.kh, self.kw).reshape(n * oh * ow, -1)
        d_weight = (cols.T @ g_flat).reshape(self.params["weight"].shape)
        d_bias = g_flat.sum(axis=0)

        # input gradient: full correlation with the flipped, transposed kernel
        gp = np.pad(grad, ((0, 0), (self.kh - 1, self.kh - 1),
                           (self.kw - 1, self.kw - 1), (0, 0)))
        w_flip = self.params["weight"][::-1, ::-1].transpose(0, 1, 3, 2)
        gcols = _windows(gp, self.kh, self.kw).reshape(-1, self.kh * self.kw * self.out_channels)
        dxp = (gcols @ w_flip.reshape(-1, self.in_channels)).reshape(
            n, xp.shape[1], xp.shape[2], self.in_channels
        )
        dx = dxp[:, pt:pt + x.shape[1], pl:pl + x.shape[2], :]
        return dx, {"weight": d_weight, "bias": d_bias}


class Dense(Layer):
    """Fully connected layer over (N, in_features)."""

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng()
        self.params = {
            "weight": _he_uniform(rng, in_features, (in_features, out_features)),
            "bias": np.zeros(out_features),
        }

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise LayerShapeError(
                f"Dense expects ({self.in_features},) input, got {in_shape}"
            )
        return (self.out_features,)

    def forward(self, x, train=False, rng=None):
        return x @ self.params["weight"] + self.params["bias"], x

    def backward(self, grad, cache):
        x = cache
        return grad @ self.params["weight"].T, {
            "weight": x.T @ grad,
            "bias": grad.sum(axis=0),
        }


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        return np.maximum(x, 0.0), x

    def backward(self, grad, cache):
        return grad * (cache > 0), {}


class GlobalAvgPool(Layer):
    """(N, H, W, C) -> (N, C) spatial mean; backward spreads gradient evenly."""

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise LayerShapeError(f"GlobalAvgPool expects (H, W, C) input, got {in_shape}")
        return (in_shape[2],)

    def forward(self, x, train=False, rng=None):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, grad, cache):
        n, h, w, c = cache
        dx = np.broadcast_to(grad[:, None, None, :] / (h * w), (n, h, w, c))
        return np.ascontiguousarray(dx), {}


class Dropout(Layer):
    """Inverted dropout: scaled masking in train mode, identity in eval."""

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ValueError("training-mode dropout needs a seeded generator")
        keep = rng.random(x.shape) >= self.rate
        scale = 1.0 / (1.0 - self.rate)
        return x * keep * scale, keep * scale

    def backward(self, grad, cache):
        if cache is None:
            return grad, {}
        return grad * cache, {}


class Softmax(Layer):
    """Row-wise softmax over the last axis."""

    def forward(self, x, train=False, rng=None):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=-1, keepdims=True)
        return p, p

    def backward(self, grad, cache):
        p = cache
        inner = (grad * p).sum(axis=-1, keepdims=True)
        return p * (grad - inner), {}


class Sigmoid(Layer):
    """Elementwise logistic activation."""

    def forward(self, x, train=False, rng=None):
        p = np.empty_like(x, dtype=np.float64)
        pos = x >= 0
        p[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        p[~pos] = ex / (1.0 + ex)
        return p, p

    def backward(self, grad, cache):
        p = cache
        return grad * p * (1.0 - p), {}


class GradientStop(Layer):
    """Passes activations forward, blocks all gradient flow backward."""

    def forward(self, x, train=False, rng=None):
        return x, None

    def backward(self, grad, cache):
        return np.zeros_like(grad), {}
