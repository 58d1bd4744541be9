"""Adam with bias correction and linear learning-rate warmup."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from monodream.nncore.tensor import NonFiniteGradient, Tensor


def warmup_lr(step: int, lr: float, total_steps: int, warmup_ratio: float) -> float:
    """Linear ramp from 0 at step 0 to ``lr`` at the warmup boundary, constant after."""
    warm = warmup_ratio * total_steps
    if warm <= 0:
        return lr
    return lr * min(1.0, step / warm)


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> float:
    """One in-place Adam update. All gradients are checked before any parameter moves."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    t = state.step + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.step = t
    return lr


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, total_steps: int = 1, warmup_ratio: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.total_steps = total_steps
        self.warmup_ratio = warmup_ratio
        self.betas = (beta1, beta2)
        self.eps = eps
        self.state = AdamState()

    def current_lr(self) -> float:
        return warmup_lr(self.state.step, self.lr, self.total_steps, self.warmup_ratio)

    def step(self) -> float:
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        return adam_step(self.params, grads, self.state, self.current_lr(), *self.betas, self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
