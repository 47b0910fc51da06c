from __future__ import annotations

from typing import Sequence

import numpy as np

from .layers import Parameter


def adam_update(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray, step: int,
                lr: float, betas: tuple[float, float], eps: float) -> None:
    """One bias-corrected Adam update, in place on ``param``, ``m`` and ``v``."""
    b1, b2 = betas
    m *= b1
    m += (1 - b1) * grad
    v *= b2
    v += (1 - b2) * grad * grad
    m_hat = m / (1 - b1 ** step)
    v_hat = v / (1 - b2 ** step)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype)


class Adam:
    def __init__(self, params: Sequence[Parameter], lr: float = 3e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        for p, m, v in zip(self.params, self.m, self.v):
            # parameters without a gradient this step still advance their moments
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            adam_update(p.data, grad, m, v, self.step_count, self.lr, self.betas, self.eps)

    def state(self) -> dict:
        return {"step": self.step_count, "m": self.m, "v": self.v}

    def load_state(self, state: dict) -> None:
        if len(state["m"]) != len(self.params):
            raise ValueError("optimizer state does not match the parameter list")
        self.step_count = int(state["step"])
        self.m = [np.array(a, dtype=p.dtype) for a, p in zip(state["m"], self.params)]
        self.v = [np.array(a, dtype=p.dtype) for a, p in zip(state["v"], self.params)]
