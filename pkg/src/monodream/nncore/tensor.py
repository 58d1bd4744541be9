"""Tensor, tape and reverse-mode backward pass."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_dtype = np.float64
_state = threading.local()


class ShapeMismatch(ValueError):
    def __init__(self, op: str, a, b):
        super().__init__(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


class NotScalarLoss(ValueError):
    pass


class InvalidTarget(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.name = name


def set_default_dtype(dtype) -> None:
    """Switch newly created tensors between float64 (default) and float32."""
    global _dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float64, np.float32):
        raise ValueError(f"unsupported dtype {dtype}")
    _dtype = dtype.type


def default_dtype():
    return _dtype


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(_dtype)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from monodream.nncore import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from monodream.nncore import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from monodream.nncore import ops
        return ops.mul(self, other) if isinstance(other, Tensor) else ops.scale(self, other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        from monodream.nncore import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from monodream.nncore import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from monodream.nncore import ops
        return ops.index(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str = ""


@dataclass
class Tape:
    """Records differentiable operations while active as a context manager."""

    nodes: list[Node] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        stack = _stack()
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


def _stack() -> list[Tape]:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


class no_grad:
    """Suspend recording inside an active tape."""

    def __enter__(self):
        self._saved = list(_stack())
        _stack().clear()

    def __exit__(self, *exc):
        _stack().extend(self._saved)


def record(op: str, out_data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    """Wrap an op result and, if any input needs gradients, put it on the tape."""
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.nodes.append(Node(tuple(inputs), out, backward, op))
    return out


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every requires-grad leaf on the tape."""
    if loss.size != 1:
        raise NotScalarLoss(f"loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(n.output) for n in tape.nodes}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if key not in produced:
                leaves[key] = inp
    if id(loss) in grads and id(loss) not in produced and loss.requires_grad:
        leaves[id(loss)] = loss
    for key, leaf in leaves.items():
        g = grads[key].astype(leaf.data.dtype, copy=False)
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    return {k: grads[k] for k in leaves}
