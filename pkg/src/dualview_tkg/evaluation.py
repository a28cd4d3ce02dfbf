"""Time-aware filtered ranking, metric aggregation, reports and the noise sweep."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import SnapshotSequence, add_inverse

REPORT_COLUMNS = ("variant", "split", "mrr", "h1", "h3", "h10")


def filtered_rank(logits, gold: int, known_objects: Iterable[int] = ()) -> int:
    """Rank of ``gold`` once the other known answers are taken out of contention.

    Ties are pessimistic: a competitor with a score equal to the gold counts as ahead.
    """
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not 0 <= gold < len(logits):
        raise IndexError(f"gold entity {gold} outside [0, {len(logits)})")
    mask = np.ones(len(logits), dtype=bool)
    mask[gold] = False
    known = np.fromiter((int(k) for k in known_objects), dtype=np.int64)
    mask[known] = False
    return 1 + int(np.count_nonzero(logits[mask] >= logits[gold]))


def filtered_ranks(logits: np.ndarray, golds: np.ndarray, known: Sequence[np.ndarray]) -> np.ndarray:
    """Vectorized :func:`filtered_rank` over a batch of rows."""
    logits = np.asarray(logits, dtype=np.float64)
    golds = np.asarray(golds, dtype=np.int64)
    gold_scores = logits[np.arange(len(golds)), golds]
    ahead = logits >= gold_scores[:, None]
    for i, objs in enumerate(known):
        ahead[i, objs] = False
    ahead[np.arange(len(golds)), golds] = False
    return 1 + ahead.sum(axis=1)


class KnownObjects:
    """``(subject, relation, timestamp) -> objects`` over inverse-augmented facts."""

    def __init__(self, facts: np.ndarray, num_relations: int):
        table: dict[tuple[int, int, int], set[int]] = defaultdict(set)
        for s, r, o, t in add_inverse(facts, num_relations).tolist():
            table[(s, r, t)].add(o)
        self._table = {k: np.array(sorted(v), dtype=np.int64) for k, v in table.items()}

    def __call__(self, subject: int, relation: int, timestamp: int) -> np.ndarray:
        return self._table.get((subject, relation, timestamp), np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class MetricReport:
    mrr: float
    h1: float
    h3: float
    h10: float
    count: int

    def as_dict(self) -> dict:
        return asdict(self)


def aggregate(ranks) -> MetricReport:
    """Percent-scaled MRR and Hits@{1,3,10}."""
    ranks = np.asarray(ranks, dtype=np.float64).reshape(-1)
    if ranks.size == 0:
        raise ValueError("cannot aggregate an empty rank list")
    if np.any(ranks < 1):
        raise ValueError("ranks must be >= 1")
    return MetricReport(
        mrr=100.0 * float(np.mean(1.0 / ranks)),
        h1=100.0 * float(np.mean(ranks <= 1)),
        h3=100.0 * float(np.mean(ranks <= 3)),
        h10=100.0 * float(np.mean(ranks <= 10)),
        count=int(ranks.size),
    )


def rank_split(model, builder, split: SnapshotSequence, known: KnownObjects) -> np.ndarray:
    """Filtered ranks of every entity query in ``split``, timestamp by timestamp."""
    ranks = []
    for t in split.timestamps:
        ctx = builder.context(t, split)
        logits = model.predict(ctx)
        q = ctx.queries.entity
        filt = [known(s, r, t) for s, r, _ in q.tolist()]
        ranks.append(filtered_ranks(logits, q[:, 2], filt))
    return np.concatenate(ranks) if ranks else np.zeros(0, dtype=np.int64)


def evaluate(model, builder, split: SnapshotSequence, known: KnownObjects) -> MetricReport:
    return aggregate(rank_split(model, builder, split, known))


@dataclass(frozen=True)
class RobustnessPoint:
    sigma: float
    report: MetricReport
    degradation: float   # percent of the clean MRR lost


def robustness_sweep(model, builder, split: SnapshotSequence, known: KnownObjects,
                     noise_levels: Sequence[float], rng: np.random.Generator) -> list[RobustnessPoint]:
    """Perturb the base entity table with N(0, sigma^2) noise, evaluate, restore."""
    if any(s < 0 for s in noise_levels):
        raise ValueError("noise levels must be non-negative")
    table = model.init.entity
    original = table.data.copy()
    clean = evaluate(model, builder, split, known)
    points = []
    try:
        for sigma in noise_levels:
            if sigma == 0:
                report = clean
            else:
                table.data = original + rng.normal(0.0, sigma, size=original.shape)
                report = evaluate(model, builder, split, known)
                table.data = original.copy()
            loss = 100.0 * (clean.mrr - report.mrr) / clean.mrr if clean.mrr else 0.0
            points.append(RobustnessPoint(float(sigma), report, loss))
    finally:
        table.data = original
    return points


def write_report(csv_path: str | Path, rows: Sequence[tuple[str, str, MetricReport]],
                 config: dict | None = None, json_path: str | Path | None = None) -> None:
    """CSV ``variant,split,mrr,h1,h3,h10`` plus a JSON twin that echoes ``config``."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for variant, split, rep in rows:
            writer.writerow([variant, split] + [f"{v:.4f}" for v in (rep.mrr, rep.h1, rep.h3, rep.h10)])
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    payload = {
        "config": config or {},
        "results": [{"variant": v, "split": s, **rep.as_dict()} for v, s, rep in rows],
    }
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
