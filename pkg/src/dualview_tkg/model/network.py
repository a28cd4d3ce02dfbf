"""Full dual-view model: evolution, decomposition, view encoders, decoders, losses."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..graphs import TimestampContext
from ..tensor import GatedMLP, Module, Tensor, no_grad, take
from .decoder import ConvTransE, LossTerms, contrastive_loss, fuse_scores, joint_loss, query_reps, score_entities
from .encoders import Decomposer, ViewEncoder
from .evolution import EvolvedState, SpatioTemporalInit

VARIANT_TAGS = (
    "full", "no-dyn", "no-inv", "no-coa", "no-red", "no-coa-red",
    "no-te", "cos-te", "ent-decomp", "simple-dyn",
)

INV, DYN = "inv", "dyn"


@dataclass(frozen=True)
class Variant:
    """Component switches. Tags combine with ``+`` (e.g. ``simple-dyn+no-inv``)."""

    tag: str = "full"
    use_dynamics: bool = True
    use_invariance: bool = True
    use_contrastive: bool = True
    decompose_relations: bool = True
    time_mode: str = "tgat"
    decompose_entities: bool = False
    simple_dynamics: bool = False

    @classmethod
    def from_tag(cls, tag: str) -> "Variant":
        v = cls(tag=tag)
        for part in tag.split("+"):
            if part not in VARIANT_TAGS:
                raise ValueError(f"unknown variant {part!r}; expected one of {', '.join(VARIANT_TAGS)}")
            v = replace(v, **_VARIANT_SWITCHES[part])
        if not (v.use_dynamics or v.use_invariance):
            raise ValueError("a variant must keep at least one graph view")
        return v

    @property
    def views(self) -> tuple[str, ...]:
        return tuple(name for name, on in ((INV, self.use_invariance), (DYN, self.use_dynamics)) if on)


_VARIANT_SWITCHES = {
    "full": {},
    "no-dyn": {"use_dynamics": False},
    "no-inv": {"use_invariance": False},
    "no-coa": {"use_contrastive": False},
    "no-red": {"decompose_relations": False},
    "no-coa-red": {"use_contrastive": False, "decompose_relations": False},
    "no-te": {"time_mode": "none"},
    "cos-te": {"time_mode": "cos"},
    "ent-decomp": {"decompose_entities": True},
    "simple-dyn": {"simple_dynamics": True},
}


@dataclass(frozen=True)
class ModelConfig:
    num_entities: int
    num_relations: int          # base relations; the model sees 2x after inversion
    dim: int = 200
    history_len: int = 3
    gcn_layers: int = 2
    layers_inv: int = 2
    layers_dyn: int = 2
    conv_channels: int = 50
    conv_width: int = 3
    dropout: float = 0.2
    alpha: float = 0.7
    mu: float = 0.2
    gamma: float = 0.3
    variant: Variant = field(default_factory=Variant)

    @property
    def contrastive_weight(self) -> float:
        """Effective weight: zero when the variant drops alignment or a view is missing."""
        v = self.variant
        return self.mu if v.use_contrastive and v.use_dynamics and v.use_invariance else 0.0


@dataclass
class ModelOutput:
    entity_logits: Tensor
    view_logits: dict[str, Tensor]
    relation_logits: Tensor
    entities: dict[str, Tensor]
    relations: dict[str, Tensor]
    evolved: EvolvedState
    contrastive: Tensor | None = None


class DualViewModel(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        c = config
        d = c.dim
        self.init = SpatioTemporalInit(c.num_entities, 2 * c.num_relations, d, rng, c.gcn_layers)
        self.rel_decomp = [Decomposer(d, rng, c.dropout) for _ in (INV, DYN)]
        self.encoders = [ViewEncoder(d, c.layers_inv, rng),
                         ViewEncoder(d, c.layers_dyn, rng, time_mode=c.variant.time_mode)]
        self.query_mlps = [GatedMLP(2 * d, d, d, rng, c.dropout) for _ in (INV, DYN)]
        self.decoders = [ConvTransE(d, rng, c.conv_channels, c.conv_width, c.dropout) for _ in (INV, DYN)]
        self.relation_decoder = ConvTransE(d, rng, c.conv_channels, c.conv_width, c.dropout)
        self.ent_decomp = ([Decomposer(d, rng, c.dropout) for _ in (INV, DYN)]
                           if c.variant.decompose_entities else [])

    @staticmethod
    def _slot(view: str) -> int:
        return 0 if view == INV else 1

    def relation_views(self, relations: Tensor, rng=None) -> dict[str, Tensor]:
        v = self.config.variant
        if not v.decompose_relations:
            return {view: relations for view in v.views}
        return {view: self.rel_decomp[self._slot(view)](relations, rng) for view in v.views}

    def forward(self, ctx: TimestampContext, rng: np.random.Generator | None = None) -> ModelOutput:
        cfg = self.config
        evolved = self.init(ctx.history, ctx.timestamp)
        rels = self.relation_views(evolved.relations, rng)
        ents: dict[str, Tensor] = {}
        for view in cfg.variant.views:
            slot = self._slot(view)
            start = evolved.entities
            if self.ent_decomp:
                start = self.ent_decomp[slot](start, rng)
            graph = ctx.invariance if view == INV else ctx.dynamics
            ents[view] = self.encoders[slot](start, rels[view], graph)

        queries = ctx.queries.entity
        view_logits = {view: score_entities(self.decoders[self._slot(view)], queries, ents[view], rels[view], rng)
                       for view in cfg.variant.views}
        fused = fuse_scores(*view_logits.values())

        ent_mean = _mean(list(ents.values()))
        rel_mean = _mean(list(rels.values()))
        rq = ctx.queries.relation
        relation_logits = self.relation_decoder(take(ent_mean, rq[:, 0]), take(ent_mean, rq[:, 1]), rel_mean, rng)

        coa = None
        if cfg.contrastive_weight > 0 and len(queries):
            keys = np.unique(queries[:, :2], axis=0)
            z_inv = query_reps(self.query_mlps[0], ents[INV], rels[INV], keys, rng)
            z_dyn = query_reps(self.query_mlps[1], ents[DYN], rels[DYN], keys, rng)
            coa = contrastive_loss(z_dyn, z_inv, cfg.gamma)
        return ModelOutput(fused, view_logits, relation_logits, ents, rels, evolved, coa)

    def loss(self, ctx: TimestampContext, rng: np.random.Generator | None = None) -> LossTerms:
        out = self.forward(ctx, rng)
        cfg = self.config
        coa = out.contrastive if out.contrastive is not None else 0.0
        return joint_loss(out.entity_logits, ctx.queries.entity[:, 2], out.relation_logits,
                          ctx.queries.relation[:, 2], coa, cfg.alpha, cfg.contrastive_weight)

    def predict(self, ctx: TimestampContext) -> np.ndarray:
        """Fused entity logits for every query of ``ctx`` (evaluation mode, no tape)."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                return self.forward(ctx).entity_logits.data
        finally:
            self.train(was_training)


def _mean(tensors: list[Tensor]) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = total + t
    return total * (1.0 / len(tensors)) if len(tensors) > 1 else total
