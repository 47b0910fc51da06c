"""Differentiable operators used by the model zoo.

Image tensors are channels-last: ``(batch, height, width, channels)``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, is_grad_enabled


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis; weight is ``(in, out)``."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = x @ weight
    return out + bias if bias is not None else out


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def same_padding(kernel: int) -> int:
    return kernel // 2


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int | str = "same") -> Tensor:
    """Cross-correlation of ``(N, H, W, C)`` input with ``(Kh, Kw, C, F)`` kernels."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects a 4-d input and 4-d kernels")
    n, h, w, c = x.shape
    kh, kw, kc, f = weight.shape
    if kc != c:
        raise ValueError(f"conv2d: input has {c} channels, kernels expect {kc}")
    if padding == "same":
        ph, pw = same_padding(kh), same_padding(kw)
    else:
        ph = pw = int(padding)
    ho, wo = conv_output_size(h, kh, stride, ph), conv_output_size(w, kw, stride, pw)
    if ho < 1 or wo < 1:
        raise ValueError("conv2d: kernel larger than padded input")

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if ph or pw else x.data
    # (N, H', W', C, kh, kw) windows -> rows of (kh, kw, C) patches
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
    wmat = weight.data.reshape(kh * kw * c, f)
    out = (cols @ wmat).reshape(n, ho, wo, f)
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(n * ho * wo, f)
        if weight.requires_grad:
            weight.accumulate((cols.T @ g2).reshape(kh, kw, c, f))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ wmat.T).reshape(n, ho, wo, kh, kw, c)
            dxp = np.zeros(xp.shape, dtype=xp.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
            x.accumulate(dxp[:, ph:ph + h, pw:pw + w, :])

    parents = (x, weight) if bias is None else (x, weight, bias)
    if not (is_grad_enabled() and any(p.requires_grad for p in parents)):
        del cols
        return Tensor(out)
    return Tensor.make(out, parents, backward)


def spatial_mean_pool(x: Tensor) -> Tensor:
    """``(N, H, W, C) -> (N, C)`` average over positions."""
    return x.mean(axis=(1, 2))


def batch_norm(x: Tensor, gamma: Tensor | None, beta: Tensor | None, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.9,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over every axis but the last.

    In training mode the batch statistics are used and the running statistics
    are updated in place as ``momentum * running + (1 - momentum) * batch``.
    """
    axes = tuple(range(x.ndim - 1))
    if training:
        if x.shape[0] < 2:
            raise ValueError("batch_norm in train mode needs a batch of at least 2")
        m = int(np.prod([x.shape[a] for a in axes]))
        mu = x.data.mean(axis=axes)
        centered = x.data - mu
        var = (centered * centered).mean(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var * (m / max(m - 1, 1))
    else:
        m = None
        mu, var = running_mean.astype(x.dtype), running_var.astype(x.dtype)
        centered = x.data - mu
    invstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = centered * invstd
    out = xhat
    if gamma is not None:
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data

    def backward(g):
        if gamma is not None and gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=axes))
        if beta is not None and beta.requires_grad:
            beta.accumulate(g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data if gamma is not None else g
            if training:
                dx = (invstd / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
            else:
                dx = dxhat * invstd
            x.accumulate(dx)

    parents = tuple(t for t in (x, gamma, beta) if t is not None)
    return Tensor.make(out, parents, backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x.accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return Tensor.make(y, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - logz
    p = np.exp(y)

    def backward(g):
        x.accumulate(g - p * g.sum(axis=axis, keepdims=True))

    return Tensor.make(y, (x,), backward)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1
        logits.accumulate(d * (g / n))

    return Tensor.make(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def embedding(weight: Tensor, ids, padding_idx: int | None = 0) -> Tensor:
    """Row lookup; rows for ``padding_idx`` receive no gradient."""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        if padding_idx is not None:
            g = np.where((ids == padding_idx)[..., None], 0, g)
        weight.accumulate_at(ids, g)

    return Tensor.make(weight.data[ids], (weight,), backward)


def film(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Feature-wise affine modulation of ``(N, H, W, C)`` maps by ``(N, C)`` vectors."""
    n, c = gamma.shape
    return x * gamma.reshape(n, 1, 1, c) + beta.reshape(n, 1, 1, c)


def tile_positions(v: Tensor, height: int, width: int) -> Tensor:
    """Broadcast an ``(N, D)`` vector to every position: ``(N, H, W, D)``."""
    from .tensor import broadcast_to

    n, d = v.shape
    return broadcast_to(v.reshape(n, 1, 1, d), (n, height, width, d))


def mask_blend(mask: np.ndarray, new: Tensor, old: Tensor) -> Tensor:
    """``mask * new + (1 - mask) * old`` with a constant 0/1 mask; exact for 0/1."""
    mask = np.asarray(mask, dtype=new.dtype)
    keep = mask.astype(bool)

    def backward(g):
        new.accumulate(g * mask)
        old.accumulate(g * (1 - mask))

    return Tensor.make(np.where(keep, new.data, old.data), (new, old), backward)


def constant(value, like: Tensor) -> Tensor:
    return as_tensor(np.asarray(value, dtype=like.dtype))
