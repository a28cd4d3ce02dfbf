"""Chronological training loop with validation-based early stopping."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import TKGDataset
from .errors import NumericError, ShapeError
from .evaluation import KnownObjects, MetricReport, evaluate
from .graphs import ContextBuilder
from .model import DualViewModel, ModelConfig, Variant
from .rules import RuleIndex, mine_rules
from .tensor import Adam, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)


def model_config(config: RunConfig, dataset: TKGDataset) -> ModelConfig:
    return ModelConfig(
        num_entities=dataset.vocab.entity_count,
        num_relations=dataset.vocab.base_relation_count,
        dim=config.dim,
        history_len=config.history_len,
        gcn_layers=config.gcn_layers,
        layers_inv=config.layers_inv,
        layers_dyn=config.layers_dyn,
        conv_channels=config.conv_channels,
        dropout=config.dropout,
        alpha=config.alpha,
        mu=config.mu,
        gamma=config.gamma,
        variant=Variant.from_tag(config.variant),
    )


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for parameter init and for dropout."""
    init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(drop_ss)


def default_rules(dataset: TKGDataset, config: RunConfig) -> RuleIndex:
    return mine_rules(dataset.train.facts(), dataset.vocab.base_relation_count,
                      num_walks=config.num_walks, min_body_support=config.min_body_support,
                      rng=np.random.default_rng(config.seed))


@dataclass
class EpochLog:
    epoch: int
    loss: dict[str, float]
    valid_mrr: float
    seconds: float


@dataclass
class TrainResult:
    model: DualViewModel
    history: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_valid: MetricReport | None = None


class Experiment:
    """Dataset, rules and cached view graphs shared by training and evaluation."""

    def __init__(self, dataset: TKGDataset, config: RunConfig, rules: RuleIndex | None = None):
        self.dataset = dataset
        self.config = config.validate()
        self.rules = rules if rules is not None else default_rules(dataset, config)
        variant = Variant.from_tag(config.variant)
        num_rel = dataset.vocab.base_relation_count
        opts = dict(history_len=config.history_len, simple_dynamics=variant.simple_dynamics)
        self.train_builder = ContextBuilder(dataset.train.facts(), num_rel, self.rules, config.cap, **opts)
        self.eval_builder = ContextBuilder(dataset.all_facts(), num_rel, self.rules, config.cap, **opts)
        self.known = KnownObjects(dataset.all_facts(), num_rel)

    def with_config(self, config: RunConfig) -> "Experiment":
        """A sibling experiment reusing the rules (and graphs when the graph settings match)."""
        same_graphs = (config.cap, config.history_len, Variant.from_tag(config.variant).simple_dynamics) == (
            self.config.cap, self.config.history_len, Variant.from_tag(self.config.variant).simple_dynamics)
        other = object.__new__(Experiment)
        other.dataset, other.config, other.rules, other.known = self.dataset, config.validate(), self.rules, self.known
        if same_graphs:
            other.train_builder, other.eval_builder = self.train_builder, self.eval_builder
        else:
            fresh = Experiment(self.dataset, config, self.rules)
            other.train_builder, other.eval_builder = fresh.train_builder, fresh.eval_builder
        return other

    def build_model(self, rng: np.random.Generator | None = None) -> DualViewModel:
        rng = rng if rng is not None else seed_streams(self.config.seed)[0]
        return DualViewModel(model_config(self.config, self.dataset), rng)

    def evaluate(self, model: DualViewModel, split: str = "test") -> MetricReport:
        return evaluate(model, self.eval_builder, self.dataset.split(split), self.known)

    def train_epoch(self, model: DualViewModel, optimizer: Adam, rng: np.random.Generator) -> dict[str, float]:
        model.train()
        split = self.dataset.train
        totals: dict[str, float] = {}
        for t in split.timestamps:
            ctx = self.train_builder.context(t, split)
            optimizer.zero_grad()
            try:
                terms = model.loss(ctx, rng)
                terms.total.backward()
            except NumericError as exc:
                raise NumericError(f"non-finite value while training on timestamp {t}: {exc}") from exc
            optimizer.step()
            for key, value in terms.as_floats().items():
                totals[key] = totals.get(key, 0.0) + value
        n = max(len(split), 1)
        return {k: v / n for k, v in totals.items()}

    def fit(self, checkpoint: str | Path | None = None, max_epochs: int | None = None,
            on_epoch=None) -> TrainResult:
        """Train until patience runs out; the returned model holds the best validation weights."""
        cfg = self.config
        init_rng, drop_rng = seed_streams(cfg.seed)
        model = self.build_model(init_rng)
        optimizer = Adam(model.named_parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        result = TrainResult(model)
        best_state, since_best = None, 0
        for epoch in range(1, (max_epochs or cfg.max_epochs) + 1):
            start = time.perf_counter()
            loss = self.train_epoch(model, optimizer, drop_rng)
            valid = self.evaluate(model, "valid")
            entry = EpochLog(epoch, loss, valid.mrr, time.perf_counter() - start)
            result.history.append(entry)
            log.info("epoch %d loss %.4f valid MRR %.2f", epoch, loss.get("total", float("nan")), valid.mrr)
            if on_epoch is not None:
                on_epoch(entry)
            if result.best_valid is None or valid.mrr > result.best_valid.mrr:
                result.best_epoch, result.best_valid, since_best = epoch, valid, 0
                best_state = model.state_dict()
                if checkpoint is not None:
                    save_model(checkpoint, model, cfg, optimizer,
                               extra={"epoch": epoch, "valid_mrr": valid.mrr})
            else:
                since_best += 1
            if since_best >= cfg.patience:
                break
        model.load_state_dict(best_state)
        model.eval()
        return result


def save_model(path: str | Path, model: DualViewModel, config: RunConfig, optimizer: Adam | None = None,
               extra: dict | None = None) -> None:
    meta = {"config": config.to_dict(), **(extra or {})}
    save_checkpoint(path, model.state_dict(), optimizer.state if optimizer is not None else None, meta)


def load_model(path: str | Path, experiment: Experiment) -> tuple[DualViewModel, dict]:
    """Rebuild the experiment's model and load weights; shape drift raises :class:`ShapeError`."""
    params, _, meta = load_checkpoint(path)
    model = experiment.build_model(np.random.default_rng(0))
    own = model.state_dict()
    for name, value in params.items():
        if name in own and own[name].shape != value.shape:
            raise ShapeError(f"checkpoint is incompatible with the configuration: {name} has shape "
                             f"{value.shape}, model expects {own[name].shape}")
    model.load_state_dict(params)
    model.eval()
    return model, meta


def run_ablation(experiment: Experiment, tag: str, splits=("test",),
                 max_epochs: int | None = None) -> dict[str, MetricReport]:
    """Train the ``tag`` variant from scratch under the shared settings and report each split."""
    variant_exp = experiment.with_config(experiment.config.updated(variant=tag))
    result = variant_exp.fit(max_epochs=max_epochs)
    return {split: variant_exp.evaluate(result.model, split) for split in splits}


def file_sha256(path: str | Path | None) -> str | None:
    if not path or not Path(path).exists():
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path: str | Path, config: RunConfig, dataset_sha: str | None,
                   rules_sha: str | None, command: str, extra: dict | None = None) -> None:
    payload = {
        "command": command,
        "config": config.to_dict(),
        "seed": config.seed,
        "dataset_sha256": dataset_sha,
        "rules_sha256": rules_sha,
        **(extra or {}),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
