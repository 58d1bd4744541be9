"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from monodream.nncore.tensor import Tape, Tensor, backward


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = fn().item()
        flat[i] = old - h
        down = fn().item()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error, zero when both are zero."""
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom) if denom > 1e-300 else 0.0


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences over ``inputs``."""
    for t in inputs:
        t.grad = None
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, relative_error(analytic, numeric_grad(fn, t, h)))
    return worst


def _suite(rng: np.random.Generator):
    """(name, builder) pairs; a builder maps a shape seed to (loss_fn, inputs)."""
    from monodream.nncore import ops

    def t(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    def dims():
        return [int(v) for v in rng.integers(2, 5, size=3)]

    def w(shape):
        return Tensor(rng.normal(size=shape))  # fixed readout keeps losses non-trivial

    def mk_unary(op):
        def build():
            a, b, _ = dims()
            x = t(a, b)
            r = w((a, b))
            return (lambda: ops.sum(ops.mul(op(x), r))), [x]
        return build

    def matmul():
        a, b, c = dims()
        x, y = t(2, a, b), t(b, c)
        r = w((2, a, c))
        return (lambda: ops.sum(ops.mul(ops.matmul(x, y), r))), [x, y]

    def add():
        a, b, _ = dims()
        x, y = t(a, b), t(b)
        r = w((a, b))
        return (lambda: ops.sum(ops.mul(ops.add(x, y), r))), [x, y]

    def mul():
        a, b, _ = dims()
        x, y = t(a, b), t(a, b)
        return (lambda: ops.sum(ops.mul(x, y))), [x, y]

    def concat():
        a, b, c = dims()
        x, y = t(a, b), t(c, b)
        r = w((a + c, b))
        return (lambda: ops.sum(ops.mul(ops.concat([x, y], 0), r))), [x, y]

    def slice_():
        a, b, _ = dims()
        x = t(a + 2, b)
        r = w((a, b))
        return (lambda: ops.sum(ops.mul(ops.slice_rows(x, 1, a + 1), r))), [x]

    def embedding():
        a, b, _ = dims()
        table = t(a + 3, b)
        ids = rng.integers(0, a + 3, size=a + 4)
        r = w((a + 4, b))
        return (lambda: ops.sum(ops.mul(ops.embedding_lookup(table, ids), r))), [table]

    def layer_norm():
        a, b, _ = dims()
        x, g, be = t(a, b + 1), t(b + 1), t(b + 1)
        r = w((a, b + 1))
        return (lambda: ops.sum(ops.mul(ops.layer_norm(x, g, be), r))), [x, g, be]

    def mean_pool():
        a, b, c = dims()
        x = t(a, b, c)
        r = w((a, c))
        return (lambda: ops.sum(ops.mul(ops.mean_pool(x, 1), r))), [x]

    def attention():
        a, b, _ = dims()
        q, k, v = t(2, a, b), t(2, a, b), t(2, a, b)
        r = w((2, a, b))
        mask = ops.causal_self_attention_mask(a)
        return (lambda: ops.sum(ops.mul(ops.attention(q, k, v, mask), r))), [q, k, v]

    def reshape_transpose():
        a, b, c = dims()
        x = t(a, b, c)
        r = w((c, a * b))
        return (lambda: ops.sum(ops.mul(ops.transpose(ops.reshape(x, (a * b, c))), r))), [x]

    def cross_entropy():
        a, b, _ = dims()
        x = t(a, b + 2)
        tg = rng.integers(0, b + 2, size=a)
        return (lambda: ops.cross_entropy(x, tg)), [x]

    def mse():
        a, b, _ = dims()
        x, y = t(a, b), t(a, b)
        return (lambda: ops.mse(x, y)), [x, y]

    return [
        ("matmul", matmul), ("add", add), ("mul", mul), ("scale", mk_unary(lambda x: ops.scale(x, 1.7))),
        ("concat", concat), ("slice", slice_), ("embedding_lookup", embedding), ("relu", mk_unary(ops.relu)),
        ("gelu", mk_unary(ops.gelu)), ("softmax", mk_unary(ops.softmax)), ("layer_norm", layer_norm),
        ("mean_pool", mean_pool), ("causal_attention", attention), ("reshape_transpose", reshape_transpose),
        ("cross_entropy", cross_entropy), ("mse", mse),
    ]


def op_suite(n_shapes: int = 10, seed: int = 0, h: float = 1e-5) -> dict[str, float]:
    """Max relative gradient error per op over ``n_shapes`` random shapes each."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, build in _suite(rng):
        worst = 0.0
        for _ in range(n_shapes):
            fn, inputs = build()
            worst = max(worst, gradcheck(fn, inputs, h))
        out[name] = worst
    return out
