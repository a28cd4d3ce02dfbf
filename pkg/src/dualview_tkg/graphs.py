"""Per-timestamp invariance and dynamics subgraphs.

The invariance view keeps every earlier fact that matches a query's
``(subject, relation)``, with timestamps dropped. The dynamics view walks the
query relation's rules by descending confidence and pulls the newest facts
``(subject, body_relation, *, t < t_q)`` until ``cap`` facts are collected for
that query; each edge keeps ``delta_t = t_q - t``.
"""
from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .data import QuerySet, SnapshotSequence, add_inverse, queries_at
from .rules import RuleIndex

INVARIANCE = "invariance"
DYNAMICS = "dynamics"

# Rule-graph length per dataset preset.
DEFAULT_CAPS = {"icews14s": 10, "icews18": 8, "icews05-15": 10, "gdelt": 8}


class HistoryIndex:
    """Newest-first lookup over (augmented) facts, cut off at a query time.

    ``by_pair[(s, r)]`` rows are ordered by (timestamp desc, object asc);
    ``by_subject[s]`` rows by (timestamp desc, relation asc, object asc).
    """

    def __init__(self, facts: np.ndarray):
        facts = np.unique(np.asarray(facts, dtype=np.int64).reshape(-1, 4), axis=0)
        self.facts = facts
        pair_rows: dict[tuple[int, int], list] = defaultdict(list)
        subj_rows: dict[int, list] = defaultdict(list)
        for s, r, o, t in facts.tolist():
            pair_rows[(s, r)].append((-t, o))
            subj_rows[s].append((-t, r, o))
        self.by_pair = {k: sorted(v) for k, v in pair_rows.items()}
        self.by_subject = {k: sorted(v) for k, v in subj_rows.items()}
        self._pair_keys = {k: [row[0] for row in v] for k, v in self.by_pair.items()}
        self._subj_keys = {k: [row[0] for row in v] for k, v in self.by_subject.items()}

    def recent_pair(self, s: int, r: int, t_q: int) -> list[tuple[int, int]]:
        """``[(t, o), ...]`` newest first, restricted to ``t < t_q``."""
        rows = self.by_pair.get((s, r))
        if not rows:
            return []
        start = bisect.bisect_right(self._pair_keys[(s, r)], -t_q)
        return [(-nt, o) for nt, o in rows[start:]]

    def recent_subject(self, s: int, t_q: int) -> list[tuple[int, int, int]]:
        """``[(t, r, o), ...]`` newest first, restricted to ``t < t_q``."""
        rows = self.by_subject.get(s)
        if not rows:
            return []
        start = bisect.bisect_right(self._subj_keys[s], -t_q)
        return [(-nt, r, o) for nt, r, o in rows[start:]]


@dataclass(frozen=True, eq=False)
class ViewSubgraph:
    """Deduplicated edge list of one view at ``timestamp``.

    ``attribution`` maps each query key ``(subject, relation)`` to the indices
    of the edges it contributed.
    """

    timestamp: int
    kind: str
    src: np.ndarray
    rel: np.ndarray
    dst: np.ndarray
    delta_t: np.ndarray | None = None
    attribution: dict = field(default_factory=dict)

    @classmethod
    def from_edges(cls, timestamp: int, kind: str, edges: Iterable[tuple],
                   attribution: dict[tuple[int, int], list[tuple]] | None = None) -> "ViewSubgraph":
        unique = sorted(set(edges))
        width = 4 if kind == DYNAMICS else 3
        arr = np.array(unique, dtype=np.int64).reshape(-1, width)
        position = {e: i for i, e in enumerate(unique)}
        attr = {q: tuple(sorted(position[e] for e in es)) for q, es in sorted((attribution or {}).items())}
        return cls(timestamp, kind, arr[:, 0], arr[:, 1], arr[:, 2],
                   arr[:, 3] if kind == DYNAMICS else None, attr)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def edges(self) -> list[tuple[int, ...]]:
        cols = [self.src, self.rel, self.dst] + ([self.delta_t] if self.delta_t is not None else [])
        return [tuple(int(v) for v in row) for row in zip(*cols)]

    def in_neighbors(self, node: int) -> np.ndarray:
        """Edge indices whose destination is ``node``."""
        return np.flatnonzero(self.dst == node)

    def to_lines(self) -> list[str]:
        return [" ".join(str(v) for v in e) for e in self.edges()]


def _query_keys(queries) -> list[tuple[int, int]]:
    arr = queries.entity if isinstance(queries, QuerySet) else np.asarray(queries, dtype=np.int64)
    return sorted({(s, r) for s, r in arr[:, :2].tolist()})


def build_invariance(queries, history: HistoryIndex, t_q: int | None = None) -> ViewSubgraph:
    """Timestamp-free edges ``(s, r, o)`` for every earlier fact matching a query's ``(s, r)``."""
    t_q = queries.timestamp if t_q is None else t_q
    edges, attribution = [], {}
    for s, r in _query_keys(queries):
        mine = sorted({(s, r, o) for _, o in history.recent_pair(s, r, t_q)})
        edges.extend(mine)
        attribution[(s, r)] = mine
    return ViewSubgraph.from_edges(t_q, INVARIANCE, edges, attribution)


def build_dynamics(queries, history: HistoryIndex, rules: RuleIndex, cap: int,
                   t_q: int | None = None) -> ViewSubgraph:
    """Rule-guided recent edges ``(s, r_b, o, delta_t)``, at most ``cap`` per query."""
    if cap < 1:
        raise ValueError("cap N must be >= 1")
    t_q = queries.timestamp if t_q is None else t_q
    edges, attribution = [], {}
    for s, r in _query_keys(queries):
        rules_for = rules.for_head(r)
        if not rules_for:
            continue
        mine: list[tuple] = []
        for rule in rules_for:
            for t, o in history.recent_pair(s, rule.body, t_q):
                mine.append((s, rule.body, o, t_q - t))
                if len(mine) == cap:
                    break
            if len(mine) == cap:
                break
        edges.extend(mine)
        attribution[(s, r)] = mine
    return ViewSubgraph.from_edges(t_q, DYNAMICS, edges, attribution)


def build_dynamics_simple(queries, history: HistoryIndex, cap: int, t_q: int | None = None) -> ViewSubgraph:
    """Rule-free variant: the ``cap`` newest facts whose subject is the query subject."""
    if cap < 1:
        raise ValueError("cap N must be >= 1")
    t_q = queries.timestamp if t_q is None else t_q
    edges, attribution = [], {}
    for s, r in _query_keys(queries):
        mine = [(s, rel, o, t_q - t) for t, rel, o in history.recent_subject(s, t_q)[:cap]]
        edges.extend(mine)
        attribution[(s, r)] = mine
    return ViewSubgraph.from_edges(t_q, DYNAMICS, edges, attribution)


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimestampContext:
    """Everything the model consumes for one query timestamp."""

    timestamp: int
    history: tuple[tuple[int, np.ndarray], ...]   # (t_i, augmented (s, r, o) rows), oldest first
    invariance: ViewSubgraph
    dynamics: ViewSubgraph
    queries: QuerySet


class ContextBuilder:
    """Builds and caches :class:`TimestampContext` objects over a pool of known facts.

    At training time the pool is the training split; at evaluation time it is
    every known fact, so the history of ``t_q`` is all facts with ``t < t_q``.
    """

    def __init__(self, pool_facts: np.ndarray, num_relations: int, rules: RuleIndex, cap: int,
                 history_len: int = 3, simple_dynamics: bool = False):
        aug = add_inverse(pool_facts, num_relations)
        self.num_relations = num_relations
        self.rules = rules
        self.cap = cap
        self.history_len = history_len
        self.simple_dynamics = simple_dynamics
        self.index = HistoryIndex(aug)
        order = np.argsort(aug[:, 3], kind="stable")
        aug = aug[order]
        times, starts = np.unique(aug[:, 3], return_index=True)
        bounds = list(starts[1:]) + [len(aug)]
        self._times = times.tolist()
        self._snapshots = {int(t): aug[a:b, :3] for t, a, b in zip(times, starts, bounds)}
        self._cache: dict[int, TimestampContext] = {}

    def recent_snapshots(self, t_q: int) -> tuple[tuple[int, np.ndarray], ...]:
        end = bisect.bisect_left(self._times, t_q)
        start = max(0, end - self.history_len)
        return tuple((t, self._snapshots[t]) for t in self._times[start:end])

    def context(self, t_q: int, split: SnapshotSequence) -> TimestampContext:
        ctx = self._cache.get(t_q)
        if ctx is None:
            queries = queries_at(t_q, split, self.num_relations)
            inv = build_invariance(queries, self.index)
            if self.simple_dynamics:
                dyn = build_dynamics_simple(queries, self.index, self.cap)
            else:
                dyn = build_dynamics(queries, self.index, self.rules, self.cap)
            ctx = TimestampContext(t_q, self.recent_snapshots(t_q), inv, dyn, queries)
            self._cache[t_q] = ctx
        return ctx
