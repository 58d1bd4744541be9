"""Differentiable forward ops. Each returns a Tensor and records its backward rule."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from monodream.nncore.tensor import InvalidTarget, ShapeMismatch, Tensor, as_tensor, record

MASK_VALUE = -1e30


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return record("mul", a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return record("scale", a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes, broadcasting leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch("matmul", a.shape, b.shape) from None

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record("matmul", a.data @ b.data, (a, b), back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(x != y for i, (x, y) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ShapeMismatch("concat", ref, t.shape)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def back(g):
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))]

    return record("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors, back)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis)


def index(a: Tensor, idx) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    out = a.data[idx]
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)

    def back(g):
        ga = np.zeros_like(a.data)
        if basic:
            ga[idx] = g
        else:
            np.add.at(ga, idx, g)
        return (ga,)

    return record("index", np.array(out, copy=True), (a,), back)


def slice_rows(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    return index(a, tuple(idx))


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeMismatch("embedding_lookup", table.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise InvalidTarget(f"embedding id out of range [0, {table.shape[0]})")

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return record("embedding", table.data[ids], (table,), back)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", a.shape, shape) from None
    return record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    """Permute axes; default swaps the last two."""
    if axes is None:
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return record("transpose", np.ascontiguousarray(a.data.transpose(axes)), (a,),
                  lambda g: (g.transpose(inv),))


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record("sum", np.asarray(out), (a,), back)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return scale(sum(a, axis, keepdims), 1.0 / n)


def mean_pool(a: Tensor, axis: int) -> Tensor:
    return mean(a, axis=axis)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return record("relu", a.data * mask, (a,), lambda g: (g * mask,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh-form GELU with its exact derivative."""
    x = a.data
    x2 = x * x
    th = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    out = 0.5 * x * (1.0 + th)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner),)

    return record("gelu", out, (a,), back)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record("softmax", y, (a,), back)


def log_softmax_data(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def layer_norm(a: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis, then apply the optional affine."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def back(g):
        ghat = g * gamma.data if gamma is not None else g
        gx = inv * (ghat - ghat.mean(axis=-1, keepdims=True) - xhat * (ghat * xhat).mean(axis=-1, keepdims=True))
        out = [gx]
        if gamma is not None:
            out.append((g * xhat).reshape(-1, n).sum(axis=0))
        if beta is not None:
            out.append(g.reshape(-1, n).sum(axis=0))
        return out

    out = xhat
    inputs = [a]
    if gamma is not None:
        if gamma.shape != (n,):
            raise ShapeMismatch("layer_norm", a.shape, gamma.shape)
        out = out * gamma.data
        inputs.append(gamma)
    if beta is not None:
        if beta.shape != (n,):
            raise ShapeMismatch("layer_norm", a.shape, beta.shape)
        out = out + beta.data
        inputs.append(beta)
    return record("layer_norm", out, inputs, back)


def causal_self_attention_mask(length: int) -> np.ndarray:
    """Additive mask: 0 on and below the diagonal, a large negative above it."""
    return np.triu(np.full((length, length), MASK_VALUE), k=1)


def attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention over (..., T, d) inputs with an additive mask."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeMismatch("attention", q.shape, k.shape)
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        scores = add(scores, Tensor(mask.astype(scores.data.dtype, copy=False)))
    return matmul(softmax(scores), v)


# --- losses ---------------------------------------------------------------------


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Negative log-likelihood of ``targets`` under row-wise softmax of ``logits``.

    Without weights this is the mean over rows. With weights it is the weighted sum,
    so callers control the normaliser.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeMismatch("cross_entropy", logits.shape, targets.shape)
    v = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise InvalidTarget(f"target id out of range [0, {v})")
    n = targets.shape[0]
    dt = logits.data.dtype
    w = np.full(n, 1.0 / max(n, 1), dtype=dt) if weights is None else np.asarray(weights, dtype=dt)
    if w.shape != (n,):
        raise ShapeMismatch("cross_entropy weights", (n,), w.shape)
    logp = log_softmax_data(logits.data)
    rows = np.arange(n)
    loss = -(w * logp[rows, targets]).sum()

    def back(g):
        p = np.exp(logp)
        p[rows, targets] -= 1.0
        return (g * w[:, None] * p,)

    return record("cross_entropy", np.asarray(loss), (logits,), back)


def mse(pred: Tensor, target) -> Tensor:
    """Mean of squared differences."""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch("mse", pred.shape, target.shape)
    diff = pred.data - target.data
    n = max(diff.size, 1)

    def back(g):
        gd = g * 2.0 * diff / n
        return gd, -gd

    return record("mse", np.asarray((diff ** 2).sum() / n), (pred, target), back)
