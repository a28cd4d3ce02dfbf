"""Query representations, contrastive alignment, convolutional scoring and the joint loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..tensor import (
    GatedMLP, LayerNorm, Linear, Module, Parameter, Tensor, concat, conv1d, cross_entropy, dropout,
    l2_normalize, matmul, relu, reshape, stack, take, transpose, xavier_uniform,
)


class ConvTransE(Module):
    """Stack two d-vectors, convolve with C width-k kernels, project to d, dot with a table.

    The projected features are layer-normalized before the final ReLU. Without
    a normalization step every feature of a query can be pushed below zero,
    after which that query's logits are all equal and no gradient revives it.
    """

    def __init__(self, dim: int, rng: np.random.Generator, channels: int = 50, width: int = 3,
                 dropout: float = 0.0):
        self.kernels = Parameter(xavier_uniform(rng, (channels, 2, width)))
        self.proj = Linear(channels * dim, dim, rng, bias=True)
        self.norm = LayerNorm(dim)
        self.dropout = dropout

    def features(self, a: Tensor, b: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        x = relu(conv1d(stack([a, b], axis=1), self.kernels))
        x = dropout(x, self.dropout, self.training, rng)
        return relu(self.norm(self.proj(reshape(x, (x.shape[0], -1)))))

    def forward(self, a: Tensor, b: Tensor, table: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        return matmul(self.features(a, b, rng), transpose(table))


def score_entities(decoder: ConvTransE, queries: np.ndarray, entities: Tensor, relations: Tensor,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Logits over every entity for ``(subject, relation)`` query rows."""
    queries = np.asarray(queries, dtype=np.int64)
    return decoder(take(entities, queries[:, 0]), take(relations, queries[:, 1]), entities, rng)


def fuse_scores(*scores: Tensor) -> Tensor:
    """Sum per-view logits; at least one view required."""
    if not scores:
        raise ValueError("fuse_scores needs at least one score tensor")
    shapes = {s.shape for s in scores}
    if len(shapes) != 1:
        raise ShapeError(f"fuse_scores: mismatched shapes {sorted(shapes)}")
    total = scores[0]
    for s in scores[1:]:
        total = total + s
    return total


def query_reps(mlp: GatedMLP, entities: Tensor, relations: Tensor, keys: np.ndarray,
               rng: np.random.Generator | None = None, normalize: bool = True) -> Tensor:
    """``MLP([e_s || r])`` per ``(subject, relation)`` key, L2-normalized by default."""
    keys = np.asarray(keys, dtype=np.int64)
    z = mlp(concat([take(entities, keys[:, 0]), take(relations, keys[:, 1])], axis=1), rng)
    return l2_normalize(z) if normalize else z


def contrastive_loss(z_dyn: Tensor, z_inv: Tensor, temperature: float) -> Tensor:
    """Symmetric InfoNCE: other queries of the batch act as negatives in both directions."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if z_dyn.shape != z_inv.shape or z_dyn.ndim != 2:
        raise ShapeError(f"contrastive_loss: {z_dyn.shape} vs {z_inv.shape}")
    sim = matmul(z_dyn, transpose(z_inv)) * (1.0 / temperature)
    targets = np.arange(z_dyn.shape[0])
    return cross_entropy(sim, targets) + cross_entropy(transpose(sim), targets)


@dataclass
class LossTerms:
    entity: Tensor
    relation: Tensor
    tkg: Tensor
    contrastive: Tensor
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: getattr(self, k).item() for k in ("entity", "relation", "tkg", "contrastive", "total")}


def joint_loss(entity_logits: Tensor, entity_targets, relation_logits: Tensor, relation_targets,
               contrastive: Tensor | float, alpha: float, mu: float) -> LossTerms:
    """``alpha CE_ent + (1 - alpha) CE_rel + mu L_contrastive``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if mu < 0:
        raise ValueError("mu must be non-negative")
    ent = cross_entropy(entity_logits, entity_targets)
    rel = cross_entropy(relation_logits, relation_targets)
    tkg = ent * alpha + rel * (1.0 - alpha)
    coa = contrastive if isinstance(contrastive, Tensor) else Tensor(float(contrastive))
    total = tkg + coa * mu if mu else tkg
    return LossTerms(ent, rel, tkg, coa, total)
