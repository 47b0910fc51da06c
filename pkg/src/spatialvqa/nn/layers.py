"""Parameterized building blocks on top of the autodiff tensor."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor, sigmoid, tanh


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, dtype=np.float32):
        super().__init__(np.asarray(data, dtype=dtype), requires_grad=True)


def uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Containers discover parameters, buffers and submodules from attributes."""

    training = True
    _buffers: tuple[str, ...] = ()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(own) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype).copy()
        for name, buf in buffers.items():
            buf[...] = state[name]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        """Cast parameters and buffers in place (e.g. float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        self._cast_buffers(dtype)
        return self

    def _cast_buffers(self, dtype) -> None:
        for name in self._buffers:
            setattr(self, name, getattr(self, name).astype(dtype))
        for _, child in self.children():
            child._cast_buffers(dtype)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        bound = math.sqrt(6.0 / in_features)
        self.weight = Parameter(uniform(rng, (in_features, out_features), bound))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, bias: bool = True):
        fan_in = kernel * kernel * in_channels
        self.weight = Parameter(uniform(rng, (kernel, kernel, in_channels, out_channels), math.sqrt(6.0 / fan_in)))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding="same")


class BatchNorm(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, affine: bool = True, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(channels)) if affine else None
        self.beta = Parameter(np.zeros(channels)) if affine else None
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class Embedding(Module):
    def __init__(self, num_embeddings: int, dim: int, rng: np.random.Generator, padding_idx: int | None = 0):
        weight = uniform(rng, (num_embeddings, dim), math.sqrt(3.0))
        if padding_idx is not None:
            weight[padding_idx] = 0
        self.weight = Parameter(weight)
        self.padding_idx = padding_idx

    def forward(self, ids) -> Tensor:
        return F.embedding(self.weight, ids, self.padding_idx)


def _step_masks(lengths, steps: int) -> list[np.ndarray]:
    lengths = np.asarray(lengths)
    return [(t < lengths)[:, None] for t in range(steps)]


class LSTM(Module):
    """Single-layer LSTM returning the hidden state at each sequence's true length."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(hidden_size)
        self.w_input = Parameter(uniform(rng, (input_size, 4 * hidden_size), bound))
        self.w_hidden = Parameter(uniform(rng, (hidden_size, 4 * hidden_size), bound))
        self.bias = Parameter(np.zeros(4 * hidden_size))
        self.hidden_size = hidden_size

    def forward(self, x: Tensor, lengths) -> Tensor:
        n, steps, _ = x.shape
        lengths = np.asarray(lengths)
        if np.any(lengths > steps) or np.any(lengths < 0):
            raise ValueError(f"sequence length outside [0, {steps}]")
        hs = self.hidden_size
        h = Tensor(np.zeros((n, hs), dtype=x.dtype))
        c = Tensor(np.zeros((n, hs), dtype=x.dtype))
        used = int(lengths.max()) if n else 0
        if used == 0:
            return h
        projected = F.linear(x[:, :used], self.w_input, self.bias)
        for t, mask in enumerate(_step_masks(lengths, used)):
            gates = projected[:, t] + h @ self.w_hidden
            i = sigmoid(gates[:, :hs])
            f = sigmoid(gates[:, hs:2 * hs])
            g = tanh(gates[:, 2 * hs:3 * hs])
            o = sigmoid(gates[:, 3 * hs:])
            c_new = f * c + i * g
            h_new = o * tanh(c_new)
            c = F.mask_blend(mask, c_new, c)
            h = F.mask_blend(mask, h_new, h)
        return h


class GRU(Module):
    """Single-layer GRU returning the hidden state at each sequence's true length."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(hidden_size)
        self.w_input = Parameter(uniform(rng, (input_size, 3 * hidden_size), bound))
        self.w_hidden = Parameter(uniform(rng, (hidden_size, 3 * hidden_size), bound))
        self.bias_input = Parameter(np.zeros(3 * hidden_size))
        self.bias_hidden = Parameter(np.zeros(3 * hidden_size))
        self.hidden_size = hidden_size

    def forward(self, x: Tensor, lengths) -> Tensor:
        n, steps, _ = x.shape
        lengths = np.asarray(lengths)
        if np.any(lengths > steps) or np.any(lengths < 0):
            raise ValueError(f"sequence length outside [0, {steps}]")
        hs = self.hidden_size
        h = Tensor(np.zeros((n, hs), dtype=x.dtype))
        used = int(lengths.max()) if n else 0
        if used == 0:
            return h
        projected = F.linear(x[:, :used], self.w_input, self.bias_input)
        for t, mask in enumerate(_step_masks(lengths, used)):
            xp = projected[:, t]
            hp = F.linear(h, self.w_hidden, self.bias_hidden)
            r = sigmoid(xp[:, :hs] + hp[:, :hs])
            z = sigmoid(xp[:, hs:2 * hs] + hp[:, hs:2 * hs])
            cand = tanh(xp[:, 2 * hs:] + r * hp[:, 2 * hs:])
            h_new = (1.0 - z) * cand + z * h
            h = F.mask_blend(mask, h_new, h)
        return h
