"""Parameter containers and the small layers shared across model components."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ShapeError
from . import functional as F
from .core import Tensor, slice_cols


class Parameter(Tensor):
    """Leaf tensor that always requires gradients."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], gain: float = 1.0) -> np.ndarray:
    fan_out, fan_in = shape[0], int(np.prod(shape[1:]))
    if len(shape) == 3:
        fan_in, fan_out = shape[1] * shape[2], shape[0] * shape[2]
    bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Minimal module tree: parameter discovery, train/eval flag, state dicts."""

    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(full + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ShapeError(f"incompatible state: missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"incompatible shape for {name}: checkpoint {value.shape} vs model {p.shape}")
            p.data = value.copy()


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = False):
        self.weight = Parameter(xavier_uniform(rng, (out_dim, in_dim)))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def forward(self, x) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, self.eps)


class GatedMLP(Module):
    """``W_out . Drop(GEGLU(LN(x)))`` -- the modulation / projection network."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator, dropout: float = 0.0):
        self.norm = LayerNorm(in_dim)
        self.w_a = Parameter(xavier_uniform(rng, (in_dim, hidden)))
        self.w_b = Parameter(xavier_uniform(rng, (in_dim, hidden)))
        self.out = Linear(hidden, out_dim, rng)
        self.dropout = dropout

    def forward(self, x, rng: np.random.Generator | None = None) -> Tensor:
        h = F.geglu(self.norm(x), self.w_a, self.w_b)
        h = F.dropout(h, self.dropout, self.training, rng)
        return self.out(h)


class GRUCell(Module):
    """Row-wise GRU: every row of the input is an independent sequence element."""

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.w_input = Parameter(xavier_uniform(rng, (3 * hidden, input_dim)))
        self.w_hidden = Parameter(xavier_uniform(rng, (3 * hidden, hidden)))
        self.b_input = Parameter(np.zeros(3 * hidden))
        self.b_hidden = Parameter(np.zeros(3 * hidden))

    def forward(self, x, h) -> Tensor:
        d = self.hidden
        gi = F.linear(x, self.w_input, self.b_input)
        gh = F.linear(h, self.w_hidden, self.b_hidden)
        gi_r, gi_z, gi_n = _split3(gi, d)
        gh_r, gh_z, gh_n = _split3(gh, d)
        reset = F.sigmoid(gi_r + gh_r)
        update = F.sigmoid(gi_z + gh_z)
        cand = F.tanh(gi_n + reset * gh_n)
        return (1.0 - update) * cand + update * h


def _split3(t: Tensor, d: int) -> tuple[Tensor, Tensor, Tensor]:
    return slice_cols(t, 0, d), slice_cols(t, d, 2 * d), slice_cols(t, 2 * d, 3 * d)


def tile_rows(value: Tensor, rows: int, width: int) -> Tensor:
    """Broadcast a one-element tensor into a (rows, width) block."""
    return np.ones((rows, width)) * value.reshape(1, 1)


__all__ = [
    "Parameter", "Module", "Linear", "LayerNorm", "GatedMLP", "GRUCell",
    "xavier_uniform", "tile_rows",
]
