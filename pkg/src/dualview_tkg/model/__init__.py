"""Neural components: evolution, view encoders, decoders and the assembled model."""
from .decoder import ConvTransE, LossTerms, contrastive_loss, fuse_scores, joint_loss, query_reps, score_entities
from .encoders import AttentionLayer, Decomposer, ScalarTimeEncoder, TimeEncoder, ViewEncoder
from .evolution import ConvCompose, EvolvedState, SnapshotGCNLayer, SpatioTemporalInit
from .network import VARIANT_TAGS, DualViewModel, ModelConfig, ModelOutput, Variant

__all__ = [
    "ConvTransE", "LossTerms", "contrastive_loss", "fuse_scores", "joint_loss", "query_reps",
    "score_entities", "AttentionLayer", "Decomposer", "ScalarTimeEncoder", "TimeEncoder",
    "ViewEncoder", "ConvCompose", "EvolvedState", "SnapshotGCNLayer", "SpatioTemporalInit",
    "VARIANT_TAGS", "DualViewModel", "ModelConfig", "ModelOutput", "Variant",
]
