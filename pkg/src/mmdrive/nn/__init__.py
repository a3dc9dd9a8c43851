"""Minimal dense/convolutional network engine with exact backpropagation."""

from .layers import (
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    GradientStop,
    Layer,
    LayerShapeError,
    ReLU,
    Sigmoid,
    Softmax,
)
from .losses import binary_cross_entropy, cross_entropy
from .network import Sequential
from .optim import Adam

__all__ = [
    "Adam",
    "Conv2D",
    "Dense",
    "Dropout",
    "GlobalAvgPool",
    "GradientStop",
    "Layer",
    "LayerShapeError",
    "ReLU",
    "Sequential",
    "Sigmoid",
    "Softmax",
    "binary_cross_entropy",
    "cross_entropy",
]
