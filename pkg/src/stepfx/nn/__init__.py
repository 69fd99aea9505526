"""Deterministic tensor layers, losses, Adam, gradient checking, weight files."""

from stepfx.nn.container import CorruptModelError, load_weights, save_weights
from stepfx.nn.gradcheck import grad_check
from stepfx.nn.layers import (
    ELU,
    BiLSTM,
    Concat,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    Layer,
    MaxPool2D,
    Sequential,
    Sigmoid,
    Softmax,
    TimeDistributed,
    glorot_uniform,
    orthogonal,
)
from stepfx.nn.losses import loss_bce, loss_cce, loss_mse
from stepfx.nn.optim import Adam, TrainingError

__all__ = [
    "Layer",
    "Dense",
    "Conv2D",
    "MaxPool2D",
    "ELU",
    "Dropout",
    "Softmax",
    "Sigmoid",
    "Flatten",
    "GlobalAvgPool",
    "Concat",
    "TimeDistributed",
    "BiLSTM",
    "Sequential",
    "glorot_uniform",
    "orthogonal",
    "loss_mse",
    "loss_bce",
    "loss_cce",
    "Adam",
    "TrainingError",
    "grad_check",
    "save_weights",
    "load_weights",
    "CorruptModelError",
]
