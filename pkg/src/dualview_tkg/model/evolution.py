"""Spatio-temporal initialization: evolve entity/relation tables over recent snapshots."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..tensor import (
    GRUCell, Linear, Module, Parameter, Tensor, concat, conv1d, cos, reshape,
    rrelu, segment_sum, stack, take, tile_rows, xavier_uniform,
)


@dataclass
class EvolvedState:
    entities: Tensor    # (|E|, d)
    relations: Tensor   # (2|R|, d)
    timestamp: int


class ConvCompose(Module):
    """Compose an entity row with a relation row: stack as 2 x d, convolve, flatten, project."""

    def __init__(self, dim: int, rng: np.random.Generator, channels: int = 2, width: int = 3):
        self.kernels = Parameter(xavier_uniform(rng, (channels, 2, width)))
        self.proj = Linear(channels * dim, dim, rng)

    def forward(self, ent: Tensor, rel: Tensor) -> Tensor:
        x = stack([ent, rel], axis=1)                  # (n, 2, d)
        y = conv1d(x, self.kernels)                    # (n, C, d)
        return self.proj(reshape(y, (y.shape[0], -1)))


class SnapshotGCNLayer(Module):
    def __init__(self, dim: int, rng: np.random.Generator):
        self.compose = ConvCompose(dim, rng)
        self.w_msg = Linear(dim, dim, rng)
        self.w_self = Linear(dim, dim, rng)
        self.w_rel = Linear(dim, dim, rng)

    def forward(self, ent: Tensor, rel: Tensor, facts: np.ndarray) -> tuple[Tensor, Tensor]:
        n = ent.shape[0]
        out = self.w_self(ent)
        if len(facts):
            src, r, dst = facts[:, 0], facts[:, 1], facts[:, 2]
            indeg = np.bincount(dst, minlength=n).astype(np.float64)
            norm = (1.0 / indeg[dst])[:, None]
            msg = self.w_msg(self.compose(take(ent, src), take(rel, r))) * norm
            out = out + segment_sum(msg, dst, n)
        return rrelu(out), rrelu(self.w_rel(rel))


class SpatioTemporalInit(Module):
    """Holds the base embedding tables and evolves them through the last L snapshots."""

    def __init__(self, num_entities: int, num_relations: int, dim: int, rng: np.random.Generator,
                 gcn_layers: int = 2):
        self.num_entities = num_entities
        self.num_relations = num_relations          # augmented count, 2|R|
        self.dim = dim
        self.entity = Parameter(xavier_uniform(rng, (num_entities, dim)))
        self.relation = Parameter(xavier_uniform(rng, (num_relations, dim)))
        self.w_tau = Parameter(np.array([rng.normal(scale=0.1)]))
        self.b_tau = Parameter(np.zeros(1))
        self.w_tag = Linear(2 * dim, dim, rng)
        self.gcn = [SnapshotGCNLayer(dim, rng) for _ in range(gcn_layers)]
        self.entity_gru = GRUCell(dim, dim, rng)
        self.relation_proj = Linear(2 * dim, dim, rng)
        self.relation_gru = GRUCell(dim, dim, rng)

    def temporal_tag(self, ent: Tensor, tau: int) -> Tensor:
        """Project ``[e || cos(w tau + b)]`` back to d; the scalar is tiled to width d."""
        if tau < 0:
            raise ValueError("relative time tau must be non-negative")
        phi = cos(self.w_tau * float(tau) + self.b_tau)
        return self.w_tag(concat([ent, tile_rows(phi, ent.shape[0], self.dim)], axis=1))

    def snapshot_gcn(self, facts: np.ndarray, ent: Tensor, rel: Tensor) -> Tensor:
        for layer in self.gcn:
            ent, rel = layer(ent, rel, facts)
        return ent

    def relation_pool(self, ent: Tensor, facts: np.ndarray) -> Tensor:
        """Mean of entities touching each relation in the snapshot; zero rows when absent."""
        if not len(facts):
            return Tensor(np.zeros((self.num_relations, self.dim)))
        pairs = np.unique(np.concatenate([facts[:, [1, 0]], facts[:, [1, 2]]]), axis=0)
        counts = np.bincount(pairs[:, 0], minlength=self.num_relations).astype(np.float64)
        scale = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)[:, None]
        return segment_sum(take(ent, pairs[:, 1]), pairs[:, 0], self.num_relations) * scale

    def forward(self, history, t_q: int) -> EvolvedState:
        """``history`` is a sequence of ``(t_i, facts)`` oldest first, facts as augmented (s, r, o)."""
        ent: Tensor = self.entity
        rel: Tensor = self.relation
        for t_i, facts in history:
            if t_i >= t_q:
                raise ShapeError("history snapshots must precede the query timestamp")
            facts = np.asarray(facts, dtype=np.int64).reshape(-1, 3)
            pooled = self.relation_pool(ent, facts)
            rel = self.relation_gru(self.relation_proj(concat([pooled, self.relation], axis=1)), rel)
            tagged = self.temporal_tag(ent, t_q - t_i)
            ent = self.entity_gru(self.snapshot_gcn(facts, tagged, rel), ent)
        return EvolvedState(ent, rel, t_q)
