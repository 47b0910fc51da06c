"""Finite-difference cases for every differentiable operator, three shapes each.

Each case builder takes ``(rng, shape)`` and returns ``(fn, tensors)``; the
checked scalar is ``sum(fn() * R)`` for a fixed random ``R`` so that ops whose
plain sum is constant (softmax, batch norm) still get a meaningful gradient.
"""
from __future__ import annotations

import numpy as np

from spatialvqa.nn import GRU, LSTM, Tensor
from spatialvqa.nn import functional as F
from spatialvqa.nn import tensor as T


def leaf(rng, shape, low=-1.0, high=1.0, away_from_zero=False):
    data = rng.uniform(low, high, size=shape)
    if away_from_zero:
        data = np.where(np.abs(data) < 0.1, 0.1 * np.sign(data) + 0.1 * (data == 0), data)
    return Tensor(data, requires_grad=True, dtype=np.float64)


def unary(op, **leaf_kwargs):
    def build(rng, shape):
        x = leaf(rng, shape, **leaf_kwargs)
        return lambda: op(x), [x]
    return build


def binary(op, broadcast=False, positive_b=False):
    def build(rng, shape):
        a = leaf(rng, shape)
        b_shape = shape[-1:] if broadcast else shape
        b = leaf(rng, b_shape, 0.5, 1.5) if positive_b else leaf(rng, b_shape)
        return lambda: op(a, b), [a, b]
    return build


def matmul_case(rng, shape):
    *batch, m, k = shape
    a = leaf(rng, shape)
    b = leaf(rng, (*batch, k, 3))
    return lambda: T.matmul(a, b), [a, b]


def linear_case(rng, shape):
    x = leaf(rng, shape)
    w = leaf(rng, (shape[-1], 4))
    b = leaf(rng, (4,))
    return lambda: F.linear(x, w, b), [x, w, b]


def conv_case(stride):
    def build(rng, shape):
        n, h, w, c = shape
        x = leaf(rng, shape)
        k = leaf(rng, (3, 3, c, 2))
        b = leaf(rng, (2,))
        return lambda: F.conv2d(x, k, b, stride=stride), [x, k, b]
    return build


def batch_norm_case(training):
    def build(rng, shape):
        x = leaf(rng, shape)
        c = shape[-1]
        gamma, beta = leaf(rng, (c,), 0.5, 1.5), leaf(rng, (c,))
        rm, rv = rng.normal(size=c), rng.uniform(0.5, 2.0, size=c)

        def fn():
            # fresh running buffers every call so repeated evaluations agree
            return F.batch_norm(x, gamma, beta, rm.copy(), rv.copy(), training)
        return fn, [x, gamma, beta]
    return build


def cross_entropy_case(rng, shape):
    logits = leaf(rng, shape)
    labels = rng.integers(shape[1], size=shape[0])
    return lambda: F.softmax_cross_entropy(logits, labels), [logits]


def embedding_case(rng, shape):
    n, t = shape
    weight = leaf(rng, (6, 3))
    ids = rng.integers(0, 6, size=shape)
    ids[:, -1] = 0
    return lambda: F.embedding(weight, ids, padding_idx=None), [weight]


def film_case(rng, shape):
    n, h, w, c = shape
    x, g, b = leaf(rng, shape), leaf(rng, (n, c)), leaf(rng, (n, c))
    return lambda: F.film(x, g, b), [x, g, b]


def tile_case(rng, shape):
    v = leaf(rng, shape)
    return lambda: F.tile_positions(v, 3, 2), [v]


def mask_blend_case(rng, shape):
    a, b = leaf(rng, shape), leaf(rng, shape)
    mask = rng.integers(0, 2, size=shape[:-1] + (1,))
    return lambda: F.mask_blend(mask, a, b), [a, b]


def concat_case(rng, shape):
    a, b = leaf(rng, shape), leaf(rng, shape[:-1] + (2,))
    return lambda: T.concat([a, b], axis=-1), [a, b]


def stack_case(rng, shape):
    a, b = leaf(rng, shape), leaf(rng, shape)
    return lambda: T.stack([a, b], axis=1), [a, b]


def recurrent_case(cls):
    def build(rng, shape):
        n, t, d = shape
        layer = cls(d, 3, np.random.default_rng(int(rng.integers(1 << 30)))).astype(np.float64)
        x = leaf(rng, shape)
        lengths = rng.integers(0, t + 1, size=n)
        lengths[0] = t
        return lambda: layer(x, lengths), [x] + layer.parameters()
    return build


def reshape_case(rng, shape):
    x = leaf(rng, shape)
    return lambda: T.reshape(x, (-1,)), [x]


def transpose_case(rng, shape):
    x = leaf(rng, shape)
    return lambda: T.transpose(x, tuple(reversed(range(len(shape))))), [x]


def getitem_case(rng, shape):
    x = leaf(rng, shape)
    fancy = rng.integers(0, shape[0], size=5)
    return lambda: T.concat([T.getitem(x, (slice(None, None, 2),)).reshape(-1),
                             T.getitem(x, fancy).reshape(-1)], axis=0), [x]


def broadcast_case(rng, shape):
    x = leaf(rng, (1,) + shape[1:])
    return lambda: T.broadcast_to(x, shape), [x]


VECTOR_SHAPES = [(3, 4), (2, 3, 5), (6,)]
MATRIX_SHAPES = [(3, 4), (2, 3, 5), (4, 1, 2, 3)]
IMAGE_SHAPES = [(2, 5, 5, 3), (3, 4, 6, 2), (2, 7, 3, 1)]
SEQUENCE_SHAPES = [(3, 4, 2), (2, 5, 3), (4, 2, 1)]

CASES = {
    "add": (binary(T.add), MATRIX_SHAPES),
    "add_broadcast": (binary(T.add, broadcast=True), MATRIX_SHAPES),
    "sub": (binary(T.sub), MATRIX_SHAPES),
    "mul": (binary(T.mul, broadcast=True), MATRIX_SHAPES),
    "div": (binary(T.div, positive_b=True), MATRIX_SHAPES),
    "neg": (unary(T.neg), VECTOR_SHAPES),
    "relu": (unary(T.relu, away_from_zero=True), VECTOR_SHAPES),
    "sigmoid": (unary(T.sigmoid, low=-4, high=4), VECTOR_SHAPES),
    "tanh": (unary(T.tanh, low=-3, high=3), VECTOR_SHAPES),
    "exp": (unary(T.exp), VECTOR_SHAPES),
    "log": (unary(T.log, low=0.5, high=2.0), VECTOR_SHAPES),
    "matmul": (matmul_case, [(3, 4), (2, 3, 5), (2, 2, 4, 3)]),
    "linear": (linear_case, [(3, 5), (2, 3, 5), (2, 2, 2, 3)]),
    "reshape": (reshape_case, MATRIX_SHAPES),
    "transpose": (transpose_case, MATRIX_SHAPES),
    "getitem": (getitem_case, [(6, 2), (5, 3, 2), (7,)]),
    "broadcast_to": (broadcast_case, [(3, 4), (2, 3, 5), (4, 2, 3)]),
    "concat": (concat_case, MATRIX_SHAPES),
    "stack": (stack_case, MATRIX_SHAPES),
    "sum": (unary(lambda x: T.tensor_sum(x, axis=0)), MATRIX_SHAPES),
    "mean": (unary(lambda x: T.mean(x, axis=-1, keepdims=True)), MATRIX_SHAPES),
    "conv2d": (conv_case(1), IMAGE_SHAPES),
    "conv2d_stride2": (conv_case(2), IMAGE_SHAPES),
    "spatial_mean_pool": (unary(F.spatial_mean_pool), IMAGE_SHAPES),
    "batch_norm_train": (batch_norm_case(True), IMAGE_SHAPES + [(5, 3)]),
    "batch_norm_eval": (batch_norm_case(False), IMAGE_SHAPES),
    "softmax": (unary(F.softmax), MATRIX_SHAPES),
    "log_softmax": (unary(F.log_softmax), MATRIX_SHAPES),
    "softmax_cross_entropy": (cross_entropy_case, [(4, 2), (3, 5), (7, 3)]),
    "embedding": (embedding_case, [(2, 3), (4, 5), (1, 7)]),
    "film": (film_case, IMAGE_SHAPES),
    "tile_positions": (tile_case, [(2, 3), (1, 4), (3, 1)]),
    "mask_blend": (mask_blend_case, MATRIX_SHAPES),
    "lstm": (recurrent_case(LSTM), SEQUENCE_SHAPES),
    "gru": (recurrent_case(GRU), SEQUENCE_SHAPES),
}


def weighted(fn, rng):
    """Wrap ``fn`` so its summed output is a random projection of the op output."""
    cache = {}

    def out():
        y = fn()
        if "r" not in cache:
            cache["r"] = rng.normal(size=y.shape)
        return T.mul(y, Tensor(cache["r"]))
    return out


def case_errors(name: str, seed: int = 0) -> list[float]:
    """Worst relative error over the tensors of each shape of one case."""
    from spatialvqa.nn.gradcheck import check_gradients

    build, shapes = CASES[name]
    errors = []
    for k, shape in enumerate(shapes):
        rng = np.random.default_rng([seed, k])
        fn, tensors = build(rng, shape)
        errors.append(max(check_gradients(weighted(fn, rng), tensors, eps=1e-5)))
    return errors


def model_gradient_error(name: str, seed: int = 0, per_tensor: int = 3, batch: int = 4) -> float:
    """float32 backprop vs float64 central differences on sampled entries of every parameter."""
    from spatialvqa.language import VOCABULARY
    from spatialvqa.models import build_model
    from spatialvqa.nn.gradcheck import numerical_gradient

    rng = np.random.default_rng(seed)
    model32 = build_model(name, seed=seed, preset="desk")
    size = model32.preset.image_size
    images = rng.uniform(0, 1, size=(batch, size, size, 3))
    ids = rng.integers(1, len(VOCABULARY), size=(batch, 12))
    lengths = rng.integers(4, 13, size=batch)
    ids[np.arange(12)[None, :] >= lengths[:, None]] = 0
    labels = rng.integers(0, 2, size=batch)

    def loss_of(model, dtype):
        return lambda: F.softmax_cross_entropy(model(images.astype(dtype), ids, lengths), labels)

    params32 = dict(model32.named_parameters())
    for p in params32.values():
        p.grad = None
    loss_of(model32, np.float32)().backward()

    model64 = build_model(name, seed=seed, preset="desk").astype(np.float64)
    params64 = dict(model64.named_parameters())
    fn64 = loss_of(model64, np.float64)
    analytic, numeric = [], []
    for pname, p32 in params32.items():
        p64 = params64[pname]
        flat = rng.choice(p64.size, size=min(per_tensor, p64.size), replace=False)
        idx = [np.unravel_index(int(k), p64.shape) for k in flat]
        num = numerical_gradient(fn64, p64, eps=1e-5, indices=idx)
        grad32 = p32.grad if p32.grad is not None else np.zeros(p32.shape)
        analytic += [float(grad32[i]) for i in idx]
        numeric += [float(num[i]) for i in idx]
    analytic, numeric = np.array(analytic), np.array(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))
