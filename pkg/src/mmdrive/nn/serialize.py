"""Layer/network manifest specs for the single-file model container."""

from __future__ import annotations

import numpy as np

from .layers import (Conv2D, Dense, Dropout, GlobalAvgPool, GradientStop,
                     ReLU, Sigmoid, Softmax)
from .network import Sequential


def layer_to_spec(layer) -> dict:
    if isinstance(layer, Conv2D):
        return {"kind": "Conv2D", "kernel": [layer.kh, layer.kw],
                "in_channels": layer.in_channels,
                "out_channels": layer.out_channels, "padding": layer.padding}
    if isinstance(layer, Dense):
        return {"kind": "Dense", "in_features": layer.in_features,
                "out_features": layer.out_features}
    if isinstance(layer, Dropout):
        return {"kind": "Dropout", "rate": layer.rate}
    for cls, name in ((ReLU, "ReLU"), (GlobalAvgPool, "GlobalAvgPool"),
                      (Softmax, "Softmax"), (Sigmoid, "Sigmoid"),
                      (GradientStop, "GradientStop")):
        if isinstance(layer, cls):
            return {"kind": name}
    raise ValueError(f"cannot serialize layer of type {type(layer).__name__}")


def layer_from_spec(spec: dict):
    kind = spec.get("kind")
    rng = np.random.default_rng(0)  # placeholder weights; payload overwrites
    if kind == "Conv2D":
        return Conv2D(tuple(spec["kernel"]), spec["in_channels"],
                      spec["out_channels"], spec["padding"], rng=rng)
    if kind == "Dense":
        return Dense(spec["in_features"], spec["out_features"], rng=rng)
    if kind == "Dropout":
        return Dropout(spec["rate"])
    simple = {"ReLU": ReLU, "GlobalAvgPool": GlobalAvgPool,
              "Softmax": Softmax, "Sigmoid": Sigmoid,
              "GradientStop": GradientStop}
    if kind in simple:
        return simple[kind]()
    raise ValueError(f"unknown layer kind {kind!r} in manifest")


def network_to_spec(net: Sequential) -> dict:
    return {"input_shape": list(net.input_shape),
            "layers": [layer_to_spec(layer) for layer in net.layers]}


def network_from_spec(spec: dict) -> Sequential:
    layers = [layer_from_spec(s) for s in spec["layers"]]
    return Sequential(layers, tuple(spec["input_shape"]))
