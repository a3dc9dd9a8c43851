"""Sequential container with construction-time shape validation."""

from __future__ import annotations

import numpy as np

from .layers import Layer, LayerShapeError


class Sequential:
    """An ordered layer stack over a fixed input shape.

    Shapes are propagated at construction so incompatible adjacent layers
    fail early with the offending layer index. ``forward`` returns the output
    plus the per-layer caches that ``backward`` consumes; parameter gradients
    come back keyed by (layer_index, parameter_name), matching
    ``parameters()``.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...]):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                self.shapes.append(layer.out_shape(self.shapes[-1]))
            except LayerShapeError as err:
                raise LayerShapeError(
                    f"layer {i} ({type(layer).__name__}): {err}"
                ) from err

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    def parameters(self) -> dict[tuple[int, str], np.ndarray]:
        return {
            (i, name): arr
            for i, layer in enumerate(self.layers)
            for name, arr in layer.params.items()
        }

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        if x.shape[1:] != self.input_shape:
            raise LayerShapeError(
                f"layer 0 input: expected (N, *{self.input_shape}), got {x.shape}"
            )
        caches = []
        for i, layer in enumerate(self.layers):
            try:
                x, cache = layer.forward(x, train=train, rng=rng)
            except LayerShapeError as err:
                raise LayerShapeError(f"layer {i}: {err}") from err
            caches.append(cache)
        return x, caches

    def backward(self, grad: np.ndarray, caches: list,
                 from_layer: int | None = None):
        """Reverse-mode sweep; ``from_layer`` injects the gradient at the
        output of that layer (used to fuse losses with final activations)."""
        if len(caches) != len(self.layers):
            raise RuntimeError("cache does not match this network's layers")
        last = len(self.layers) - 1 if from_layer is None else from_layer
        grads: dict[tuple[int, str], np.ndarray] = {}
        for i in range(last, -1, -1):
            grad, param_grads = self.layers[i].backward(grad, caches[i])
            for name, g in param_grads.items():
                grads[(i, name)] = g
        return grad, grads

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Evaluation-mode forward pass (dropout inactive)."""
        out, _ = self.forward(x, train=False)
        return out
