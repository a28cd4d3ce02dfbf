"""Seeded synthetic periodic TKG used as the desk-scale learning benchmark.

Every relation recurs with a period. For an ordinary relation ``r`` subject
``s`` meets a fixed partner whenever ``(t + phase[r, s]) % period[r, s] == 0``.
The rule body relation recurs the same way but draws a fresh random partner
at every occurrence, so its objects cannot be memorized. The rule head then
echoes each body fact: ``(A, body, B, t) => (A, head, B, t + k * rule_lag)``
for ``k = 1 .. rule_echoes``. Predicting the head therefore means reading a
specific fact ``rule_lag`` steps back, which lies outside a short recent
window once ``rule_lag`` exceeds it.

``noise`` is the probability that any planted occurrence (periodic or echo)
is dropped. Body occurrences whose first echo would fall after the training
window are not planted inside it, so rule statistics mined from the training
split see every echo the generator intended.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SnapshotSequence, TKGDataset, Vocabulary, dedupe


@dataclass(frozen=True)
class SyntheticSpec:
    num_entities: int = 20
    num_relations: int = 5
    num_timestamps: int = 60
    noise: float = 0.1
    seed: int = 7
    rule_body: int = 0
    rule_head: int = 1
    rule_lag: int = 4
    rule_echoes: int = 2
    min_period: int = 2
    max_period: int = 5
    body_min_period: int = 3
    body_max_period: int = 5
    train_fraction: float = 0.8
    valid_fraction: float = 0.1

    def validate(self) -> "SyntheticSpec":
        if self.num_entities < 2 or self.num_relations < 2 or self.num_timestamps < 3:
            raise ValueError("need at least 2 entities, 2 relations and 3 timestamps")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must lie in [0, 1)")
        if self.rule_body == self.rule_head or not (
                0 <= self.rule_body < self.num_relations and 0 <= self.rule_head < self.num_relations):
            raise ValueError("rule body and head must be distinct relation ids")
        if self.rule_lag < 1 or self.rule_echoes < 1:
            raise ValueError("rule_lag and rule_echoes must be >= 1")
        if not 1 <= self.min_period <= self.max_period:
            raise ValueError("periods must satisfy 1 <= min_period <= max_period")
        if not 1 <= self.body_min_period <= self.body_max_period:
            raise ValueError("body periods must satisfy 1 <= body_min_period <= body_max_period")
        if not (0 < self.train_fraction and 0 < self.valid_fraction
                and self.train_fraction + self.valid_fraction < 1):
            raise ValueError("split fractions must be positive and leave room for a test split")
        return self


def _derangement(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random cyclic order; each entity's partner is its successor (never itself)."""
    order = rng.permutation(n)
    partner = np.empty(n, dtype=np.int64)
    partner[order] = np.roll(order, -1)
    return partner


def _split_points(spec: SyntheticSpec) -> tuple[int, int]:
    T = spec.num_timestamps
    return int(round(spec.train_fraction * T)), int(round((spec.train_fraction + spec.valid_fraction) * T))


def generate_facts(spec: SyntheticSpec) -> np.ndarray:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    E, R, T = spec.num_entities, spec.num_relations, spec.num_timestamps
    periods = rng.integers(spec.min_period, spec.max_period + 1, size=(R, E))
    periods[spec.rule_body] = rng.integers(spec.body_min_period, spec.body_max_period + 1, size=E)
    phases = rng.integers(0, periods)
    partners = np.stack([_derangement(rng, E) for _ in range(R)])
    train_end = _split_points(spec)[0]
    quiet = range(train_end - spec.rule_lag, train_end)

    facts = []
    for t in range(T):
        for r in range(R):
            if r == spec.rule_head or (r == spec.rule_body and t in quiet):
                continue
            for s in np.flatnonzero((t + phases[r]) % periods[r] == 0).tolist():
                if r == spec.rule_body:
                    o = int(rng.integers(0, E - 1))
                    o += o >= s                              # any entity except the subject
                else:
                    o = int(partners[r, s])
                facts.append((s, r, o, t))
    planted = np.array(facts, dtype=np.int64).reshape(-1, 4)
    planted = planted[rng.random(len(planted)) >= spec.noise]

    body = planted[planted[:, 1] == spec.rule_body]
    echoes = []
    for k in range(1, spec.rule_echoes + 1):
        head = body.copy()
        head[:, 1] = spec.rule_head
        head[:, 3] += k * spec.rule_lag
        echoes.append(head[head[:, 3] < T])
    echoes = np.concatenate(echoes)
    echoes = echoes[rng.random(len(echoes)) >= spec.noise]

    all_facts = np.concatenate([planted, echoes])
    all_facts = all_facts[np.lexsort((all_facts[:, 2], all_facts[:, 1], all_facts[:, 0], all_facts[:, 3]))]
    return dedupe(all_facts)


def generate_dataset(spec: SyntheticSpec | None = None) -> TKGDataset:
    spec = (spec or SyntheticSpec()).validate()
    facts = generate_facts(spec)
    train_end, valid_end = _split_points(spec)
    t = facts[:, 3]
    vocab = Vocabulary.anonymous(spec.num_entities, spec.num_relations)
    return TKGDataset(
        vocab,
        SnapshotSequence.from_facts(facts[t < train_end]),
        SnapshotSequence.from_facts(facts[(t >= train_end) & (t < valid_end)]),
        SnapshotSequence.from_facts(facts[t >= valid_end]),
    )
