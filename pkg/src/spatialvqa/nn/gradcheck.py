"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-5,
                       indices: Sequence[tuple] | None = None) -> np.ndarray:
    """d sum(fn()) / d tensor by central differences, optionally only at ``indices``."""
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    positions = range(flat.size) if indices is None else [np.ravel_multi_index(i, tensor.shape) for i in indices]
    for k in positions:
        original = flat[k]
        flat[k] = original + eps
        plus = float(np.sum(fn().data, dtype=np.float64))
        flat[k] = original - eps
        minus = float(np.sum(fn().data, dtype=np.float64))
        flat[k] = original
        grad.reshape(-1)[k] = (plus - minus) / (2 * eps)
    return grad


def analytic_gradient(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> list[np.ndarray]:
    for t in tensors:
        t.grad = None
    out = fn()
    out.backward(np.ones_like(out.data))
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)`` (0 when both vanish)."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5) -> list[float]:
    """Relative error between backprop and finite differences for each tensor."""
    analytic = analytic_gradient(fn, tensors)
    return [relative_error(a, numerical_gradient(fn, t, eps)) for a, t in zip(analytic, tensors)]
