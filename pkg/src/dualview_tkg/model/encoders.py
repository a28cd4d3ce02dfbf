"""Relation decomposition and the attention encoders for both graph views."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..graphs import ViewSubgraph
from ..tensor import (
    GatedMLP, Linear, Module, Parameter, Tensor, clip, concat, cos, reshape, rrelu,
    segment_softmax, segment_sum, take, tanh,
)

LOGIT_CLAMP = 50.0


class Decomposer(Module):
    """View-specific modulation ``(1 + g(x)) * x`` with ``g = W . Drop . GEGLU . LN``."""

    def __init__(self, dim: int, rng: np.random.Generator, dropout: float = 0.0):
        self.gate = GatedMLP(dim, dim, dim, rng, dropout)

    def forward(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        return x + self.gate(x, rng) * x


class TimeEncoder(Module):
    """Learnable harmonic encoding ``sqrt(1/d) [cos(w_i dt + p_i)]_i``."""

    def __init__(self, dim: int):
        self.dim = dim
        self.freq = Parameter(1.0 / 10.0 ** np.linspace(0, 4, dim))
        self.phase = Parameter(np.zeros(dim))

    def forward(self, delta_t) -> Tensor:
        dt = np.asarray(delta_t, dtype=np.float64).reshape(-1, 1)
        if np.any(dt <= 0):
            raise ValueError("time encoding needs positive intervals")
        return cos(self.freq * dt + self.phase) * np.sqrt(1.0 / self.dim)


class ScalarTimeEncoder(Module):
    """Single-frequency ``cos(w dt + b)`` tiled to width d (the cosine ablation)."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.dim = dim
        self.w = Parameter(np.array([rng.normal(scale=0.1)]))
        self.b = Parameter(np.zeros(1))

    def forward(self, delta_t) -> Tensor:
        dt = np.asarray(delta_t, dtype=np.float64).reshape(-1, 1)
        if np.any(dt <= 0):
            raise ValueError("time encoding needs positive intervals")
        return cos(self.w * dt + self.b) * np.ones((1, self.dim))


class AttentionLayer(Module):
    """One attention layer over a view subgraph.

    Scores ``w_out . rrelu(W_att [e_s || r || e_o (|| t)])`` are normalized over each
    node's in-edges; messages ``W_msg tanh(e_s + r)`` are summed with the weights and
    added to ``W_self e_o`` before the activation.
    """

    def __init__(self, dim: int, rng: np.random.Generator, time_dim: int = 0):
        self.time_dim = time_dim
        self.w_att = Linear(3 * dim + time_dim, dim, rng)
        self.w_out = Linear(dim, 1, rng)
        self.w_msg = Linear(dim, dim, rng)
        self.w_self = Linear(dim, dim, rng)

    def forward(self, ent: Tensor, rel: Tensor, graph: ViewSubgraph,
                time_code: Tensor | None = None) -> tuple[Tensor, Tensor | None]:
        n = ent.shape[0]
        out = self.w_self(ent)
        if graph.num_edges == 0:
            return rrelu(out), None
        if self.time_dim and time_code is None:
            raise ShapeError("this layer needs a time encoding for every edge")
        e_s, e_o, r = take(ent, graph.src), take(ent, graph.dst), take(rel, graph.rel)
        parts = [e_s, r, e_o] + ([time_code] if self.time_dim else [])
        logits = self.w_out(rrelu(self.w_att(concat(parts, axis=1))))
        logits = clip(reshape(logits, (-1,)), -LOGIT_CLAMP, LOGIT_CLAMP)
        weights = segment_softmax(logits, graph.dst, n)
        msg = self.w_msg(tanh(e_s + r)) * reshape(weights, (-1, 1))
        return rrelu(out + segment_sum(msg, graph.dst, n)), weights


class ViewEncoder(Module):
    """Stack of attention layers for one view; relations stay fixed through the stack."""

    def __init__(self, dim: int, layers: int, rng: np.random.Generator, time_mode: str | None = None):
        if time_mode not in (None, "none", "tgat", "cos"):
            raise ValueError(f"unknown time mode {time_mode!r}")
        self.time_mode = time_mode or "none"
        time_dim = 0 if self.time_mode == "none" else dim
        self.layers = [AttentionLayer(dim, rng, time_dim) for _ in range(layers)]
        if self.time_mode == "tgat":
            self.time = TimeEncoder(dim)
        elif self.time_mode == "cos":
            self.time = ScalarTimeEncoder(dim, rng)

    def time_code(self, graph: ViewSubgraph) -> Tensor | None:
        if self.time_mode == "none" or graph.num_edges == 0:
            return None
        if graph.delta_t is None:
            raise ShapeError("dynamics edges must carry delta_t")
        return self.time(graph.delta_t)

    def forward(self, ent: Tensor, rel: Tensor, graph: ViewSubgraph,
                keep_attention: bool = False):
        code = self.time_code(graph)
        attention = []
        for layer in self.layers:
            ent, weights = layer(ent, rel, graph, code)
            attention.append(weights)
        return (ent, attention) if keep_attention else ent
