"""Adam with classic L2 weight decay (decay term folded into the gradient)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class AdamState:
    step: int = 0
    exp_avg: dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray | None],
    state: AdamState,
    lr: float = 1e-3,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """Update ``params`` in place. Entries whose gradient is ``None`` are skipped."""
    beta1, beta2 = betas
    state.step += 1
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != value.shape:
            raise ShapeError(f"gradient shape {grad.shape} != parameter shape {value.shape} for {name}")
        if weight_decay:
            grad = grad + weight_decay * value
        m = state.exp_avg.get(name)
        v = state.exp_avg_sq.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.exp_avg[name] = m
        state.exp_avg_sq[name] = v
        value -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


class Adam:
    """Stateful wrapper binding :func:`adam_step` to named parameters."""

    def __init__(self, named_params, lr: float = 1e-3, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = dict(named_params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        adam_step(
            {n: p.data for n, p in self.params.items()},
            {n: p.grad for n, p in self.params.items()},
            self.state, self.lr, self.weight_decay, self.betas, self.eps,
        )
