"""Quadruple datasets: loading, inverse augmentation, snapshots and queries.

Facts are kept as ``int64`` arrays with columns ``(subject, relation, object,
timestamp)`` where ``timestamp`` is a dense snapshot index (raw time divided by
the dataset granularity).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DataError

SPLITS = ("train", "valid", "test")


class Quadruple(NamedTuple):
    subject: int
    relation: int
    object: int
    timestamp: int


@dataclass(frozen=True)
class Vocabulary:
    entity_names: tuple[str, ...]
    relation_names: tuple[str, ...]

    @property
    def entity_count(self) -> int:
        return len(self.entity_names)

    @property
    def base_relation_count(self) -> int:
        return len(self.relation_names)

    @property
    def relation_count(self) -> int:
        """Relation ids after inverse augmentation."""
        return 2 * len(self.relation_names)

    def inverse(self, relation: int) -> int:
        return inverse_relation(relation, self.base_relation_count)

    def relation_name(self, relation: int) -> str:
        n = self.base_relation_count
        return self.relation_names[relation] if relation < n else self.relation_names[relation - n] + "^-1"

    @classmethod
    def anonymous(cls, num_entities: int, num_relations: int) -> "Vocabulary":
        return cls(tuple(f"e{i}" for i in range(num_entities)), tuple(f"r{i}" for i in range(num_relations)))


def inverse_relation(relation: int, num_relations: int) -> int:
    return relation + num_relations if relation < num_relations else relation - num_relations


@dataclass(frozen=True)
class Snapshot:
    timestamp: int
    facts: np.ndarray  # (n, 4)

    def __len__(self) -> int:
        return len(self.facts)

    def quadruples(self) -> list[Quadruple]:
        return [Quadruple(*map(int, row)) for row in self.facts]


@dataclass(frozen=True)
class SnapshotSequence:
    """Time-ordered snapshots of one split."""

    snapshots: tuple[Snapshot, ...] = ()
    _by_time: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        times = [s.timestamp for s in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DataError("snapshots must be strictly increasing in time")
        self._by_time.update({s.timestamp: s for s in self.snapshots})

    @classmethod
    def from_facts(cls, facts: np.ndarray) -> "SnapshotSequence":
        facts = _as_facts(facts)
        if len(facts) == 0:
            return cls(())
        order = np.argsort(facts[:, 3], kind="stable")
        facts = facts[order]
        times, starts = np.unique(facts[:, 3], return_index=True)
        bounds = list(starts[1:]) + [len(facts)]
        return cls(tuple(Snapshot(int(t), facts[a:b]) for t, a, b in zip(times, starts, bounds)))

    def __iter__(self) -> Iterator[Snapshot]:
        return iter(self.snapshots)

    def __len__(self) -> int:
        return len(self.snapshots)

    def __contains__(self, t: int) -> bool:
        return t in self._by_time

    def at(self, t: int) -> Snapshot:
        try:
            return self._by_time[t]
        except KeyError:
            raise KeyError(f"no snapshot at timestamp {t}") from None

    @property
    def timestamps(self) -> list[int]:
        return [s.timestamp for s in self.snapshots]

    @property
    def num_facts(self) -> int:
        return sum(len(s) for s in self.snapshots)

    def facts(self) -> np.ndarray:
        if not self.snapshots:
            return np.zeros((0, 4), dtype=np.int64)
        return np.concatenate([s.facts for s in self.snapshots])


@dataclass(frozen=True)
class TKGDataset:
    vocab: Vocabulary
    train: SnapshotSequence
    valid: SnapshotSequence
    test: SnapshotSequence
    granularity: int = 1

    def split(self, name: str) -> SnapshotSequence:
        if name not in SPLITS:
            raise DataError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_facts(self) -> np.ndarray:
        return np.concatenate([self.train.facts(), self.valid.facts(), self.test.facts()])


@dataclass(frozen=True)
class QuerySet:
    """Queries at one timestamp.

    ``entity`` rows are ``(subject, relation, gold_object)`` over the
    inverse-augmented facts; ``relation`` rows are ``(subject, object,
    gold_relation)`` for the auxiliary relation-prediction task.
    """

    timestamp: int
    entity: np.ndarray
    relation: np.ndarray

    def __len__(self) -> int:
        return len(self.entity)


# ---------------------------------------------------------------------------

def _as_facts(facts) -> np.ndarray:
    arr = np.asarray(facts, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 4), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise DataError(f"facts must have shape (n, 4), got {arr.shape}")
    return arr


def add_inverse(facts, num_relations: int) -> np.ndarray:
    """Append ``(o, r + R, s, t)`` for every ``(s, r, o, t)``; output is exactly twice as long."""
    facts = _as_facts(facts)
    if len(facts) and facts[:, 1].max() >= num_relations:
        raise DataError("add_inverse expects base relations only (relation id >= |R| found)")
    inv = facts[:, [2, 1, 0, 3]].copy()
    inv[:, 1] += num_relations
    return np.concatenate([facts, inv])


def inverse_fact(fact, num_relations: int) -> Quadruple:
    s, r, o, t = (int(v) for v in fact)
    return Quadruple(o, inverse_relation(r, num_relations), s, t)


def dedupe(facts: np.ndarray) -> np.ndarray:
    """Drop repeated rows, keeping first occurrences in their original order."""
    facts = _as_facts(facts)
    if len(facts) == 0:
        return facts
    _, first = np.unique(facts, axis=0, return_index=True)
    return facts[np.sort(first)]


def queries_at(t_q: int, split: SnapshotSequence, num_relations: int) -> QuerySet:
    """Entity and relation queries derived from the facts of ``split`` at ``t_q``."""
    if t_q not in split:
        raise KeyError(f"timestamp {t_q} not present in split")
    aug = add_inverse(split.at(t_q).facts, num_relations)
    return QuerySet(t_q, aug[:, [0, 1, 2]].copy(), aug[:, [0, 2, 1]].copy())


# ---------------------------------------------------------------------------
# file I/O: id maps plus tab-separated quadruple splits

def _read_id_map(path: Path) -> tuple[str, ...]:
    if not path.exists():
        raise DataError(f"missing id map {path}")
    pairs: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) == 1 and lineno == 1 and parts[0].strip().isdigit():
                continue  # count header
            try:
                name, idx = "\t".join(parts[:-1]), int(parts[-1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed id line {line!r}") from None
            if idx in pairs:
                raise DataError(f"{path}:{lineno}: duplicate id {idx}")
            pairs[idx] = name
    if sorted(pairs) != list(range(len(pairs))):
        raise DataError(f"{path}: ids are not dense in [0, {len(pairs)})")
    return tuple(pairs[i] for i in range(len(pairs)))


def read_facts(path: Path, vocab: Vocabulary, granularity: int) -> np.ndarray:
    if not path.exists():
        raise DataError(f"missing split file {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                s, r, o, raw = (int(v) for v in parts[:4])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed fact line {line.rstrip()!r}") from None
            if not (0 <= s < vocab.entity_count and 0 <= o < vocab.entity_count):
                raise DataError(f"{path}:{lineno}: unknown entity id")
            if not 0 <= r < vocab.base_relation_count:
                raise DataError(f"{path}:{lineno}: unknown relation id {r}")
            if raw < 0 or raw % granularity:
                raise DataError(f"{path}:{lineno}: time {raw} is not a non-negative multiple of {granularity}")
            rows.append((s, r, o, raw // granularity))
    facts = np.array(rows, dtype=np.int64).reshape(-1, 4)
    facts = facts[np.argsort(facts[:, 3], kind="stable")]
    return dedupe(facts)


def load_dataset(path: str | Path, granularity: int = 1) -> TKGDataset:
    """Load ``train/valid/test.txt`` plus ``entity2id.txt`` / ``relation2id.txt``."""
    if granularity < 1:
        raise DataError("granularity must be a positive integer")
    root = Path(path)
    vocab = Vocabulary(_read_id_map(root / "entity2id.txt"), _read_id_map(root / "relation2id.txt"))
    splits = {name: SnapshotSequence.from_facts(read_facts(root / f"{name}.txt", vocab, granularity))
              for name in SPLITS}
    check_chronological(splits)
    return TKGDataset(vocab, splits["train"], splits["valid"], splits["test"], granularity)


def check_chronological(splits: dict[str, SnapshotSequence]) -> None:
    last = None
    for name in SPLITS:
        seq = splits[name]
        if not len(seq):
            continue
        if last is not None and seq.timestamps[0] <= last[1]:
            raise DataError(f"split {name} starts at {seq.timestamps[0]} but {last[0]} ends at {last[1]}")
        last = (name, seq.timestamps[-1])


def write_dataset(path: str | Path, dataset: TKGDataset) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "entity2id.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{name}\t{i}\n" for i, name in enumerate(dataset.vocab.entity_names))
    with open(root / "relation2id.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{name}\t{i}\n" for i, name in enumerate(dataset.vocab.relation_names))
    g = dataset.granularity
    for name in SPLITS:
        with open(root / f"{name}.txt", "w", encoding="utf-8") as fh:
            fh.writelines(f"{s}\t{r}\t{o}\t{t * g}\n" for s, r, o, t in dataset.split(name).facts())


def dataset_checksum(path: str | Path) -> str:
    """SHA-256 over the id maps and split files, in a fixed order."""
    root = Path(path)
    digest = hashlib.sha256()
    for name in ("entity2id.txt", "relation2id.txt", "train.txt", "valid.txt", "test.txt"):
        f = root / name
        digest.update(name.encode())
        if f.exists():
            digest.update(f.read_bytes())
    return digest.hexdigest()
