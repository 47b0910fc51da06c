"""Minimal reverse-mode autodiff with the operators the model zoo needs."""
from . import functional
from .layers import GRU, LSTM, BatchNorm, Conv2d, Embedding, Linear, Module, Parameter
from .optim import Adam, adam_update
from .tensor import Tensor, as_tensor, concat, no_grad, relu, sigmoid, stack, tanh

__all__ = [
    "Adam", "BatchNorm", "Conv2d", "Embedding", "GRU", "LSTM", "Linear", "Module", "Parameter",
    "Tensor", "adam_update", "as_tensor", "concat", "functional", "no_grad", "relu", "sigmoid",
    "stack", "tanh",
]
