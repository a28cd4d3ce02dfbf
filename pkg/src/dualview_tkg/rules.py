"""One-hop cyclic temporal rules ``(A, r_h, B, t2) <- (A, r_b, B, t1), t2 > t1``.

Rule candidates come from temporal walks that start at a head edge and step
back in time to an earlier edge between the same entity pair. Confidence is
the fraction of body groundings ``(A, r_b, B, t1)`` followed by some head
edge ``(A, r_h, B, t2)`` with ``t2 > t1``. Small graphs are enumerated
exhaustively; large ones use sampled walks and sampled body groundings.
"""
from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .data import add_inverse
from .errors import DataError

RULE_FILE_HEADER = "# head_id\tbody_id\tconfidence\trule_support\tbody_support"


@dataclass(frozen=True)
class TemporalRule:
    head: int
    body: int
    confidence: float
    rule_support: int
    body_support: int

    def sort_key(self) -> tuple:
        return (-self.confidence, -self.body_support, self.body)


class RuleIndex:
    """Rules grouped by head relation, each list ordered by confidence."""

    def __init__(self, rules: Iterable[TemporalRule] = ()):
        grouped: dict[int, list[TemporalRule]] = defaultdict(list)
        for rule in rules:
            grouped[rule.head].append(rule)
        self._by_head = {h: tuple(sorted(rs, key=TemporalRule.sort_key)) for h, rs in sorted(grouped.items())}

    def for_head(self, head: int) -> tuple[TemporalRule, ...]:
        return self._by_head.get(head, ())

    def heads(self) -> list[int]:
        return list(self._by_head)

    def __iter__(self) -> Iterator[TemporalRule]:
        for rules in self._by_head.values():
            yield from rules

    def __len__(self) -> int:
        return sum(len(r) for r in self._by_head.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, RuleIndex) and list(self) == list(other)

    def __repr__(self) -> str:
        return f"RuleIndex({len(self)} rules over {len(self._by_head)} heads)"


def _pair_index(facts: np.ndarray) -> dict[tuple[int, int], dict[int, np.ndarray]]:
    """(A, B) -> relation -> sorted unique timestamps."""
    raw: dict[tuple[int, int], dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
    for s, r, o, t in facts.tolist():
        raw[(s, o)][r].append(t)
    return {pair: {r: np.unique(ts) for r, ts in rels.items()} for pair, rels in raw.items()}


def _count_exhaustive(pairs) -> tuple[dict[int, int], dict[tuple[int, int], int]]:
    body_support: dict[int, int] = defaultdict(int)
    rule_support: dict[tuple[int, int], int] = defaultdict(int)
    for rels in pairs.values():
        latest = {r: ts[-1] for r, ts in rels.items()}
        for body, ts in rels.items():
            body_support[body] += len(ts)
            for head, last in latest.items():
                followed = int(np.searchsorted(ts, last, side="left"))
                if followed:
                    rule_support[(head, body)] += followed
    return body_support, rule_support


def _sample_rules(facts, pairs, num_walks: int, rng: np.random.Generator):
    by_rel: dict[int, np.ndarray] = {}
    for r in np.unique(facts[:, 1]).tolist():
        by_rel[r] = facts[facts[:, 1] == r]
    candidates: set[tuple[int, int]] = set()
    for head in sorted(by_rel):
        edges = by_rel[head]
        for i in rng.integers(0, len(edges), size=num_walks):
            a, _, b, t2 = edges[i].tolist()
            earlier = [(r, t) for r, ts in sorted(pairs[(a, b)].items()) for t in ts.tolist() if t < t2]
            if earlier:
                candidates.add((head, earlier[int(rng.integers(len(earlier)))][0]))
    body_support: dict[int, int] = {}
    rule_support: dict[tuple[int, int], int] = {}
    for head, body in sorted(candidates):
        groundings = by_rel[body]
        take = min(num_walks, len(groundings))
        chosen = groundings[np.sort(rng.choice(len(groundings), size=take, replace=False))]
        hits = 0
        for a, _, b, t1 in chosen.tolist():
            ts = pairs[(a, b)].get(head)
            hits += int(ts is not None and ts[-1] > t1)
        body_support[(head, body)] = take
        rule_support[(head, body)] = hits
    return body_support, rule_support


def mine_rules(
    facts,
    num_relations: int,
    num_walks: int = 200,
    min_body_support: int = 2,
    rng: np.random.Generator | None = None,
    exhaustive_threshold: int = 10_000,
    mode: str = "auto",
) -> RuleIndex:
    """Mine one-hop rules from base-relation ``facts`` (inverses are added here).

    ``mode`` is ``"exhaustive"``, ``"sampled"`` or ``"auto"`` (exhaustive when
    the augmented fact count is at most ``exhaustive_threshold``).
    """
    if mode not in ("auto", "exhaustive", "sampled"):
        raise ValueError(f"unknown mining mode {mode!r}")
    aug = np.unique(add_inverse(facts, num_relations), axis=0)
    if len(aug) == 0:
        return RuleIndex()
    pairs = _pair_index(aug)
    exhaustive = mode == "exhaustive" or (mode == "auto" and len(aug) <= exhaustive_threshold)
    rules = []
    if exhaustive:
        body_support, rule_support = _count_exhaustive(pairs)
        for (head, body), hits in rule_support.items():
            support = body_support[body]
            if support >= min_body_support:
                rules.append(TemporalRule(head, body, hits / support, hits, support))
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        body_support, rule_support = _sample_rules(aug, pairs, num_walks, rng)
        for key, support in body_support.items():
            hits = rule_support[key]
            if support >= min_body_support and hits > 0:
                rules.append(TemporalRule(key[0], key[1], hits / support, hits, support))
    return RuleIndex(rules)


def save_rules(index: RuleIndex, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RULE_FILE_HEADER + "\n")
        for r in index:
            fh.write(f"{r.head}\t{r.body}\t{r.confidence!r}\t{r.rule_support}\t{r.body_support}\n")


def load_rules(path: str | os.PathLike) -> RuleIndex:
    rules = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            try:
                head, body, conf, rule_sup, body_sup = parts
                rule = TemporalRule(int(head), int(body), float(conf), int(rule_sup), int(body_sup))
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed rule line {line!r}") from None
            if not 0.0 <= rule.confidence <= 1.0:
                raise DataError(f"{path}:{lineno}: confidence outside [0, 1]")
            rules.append(rule)
    return RuleIndex(rules)
