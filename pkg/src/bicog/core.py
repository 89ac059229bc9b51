"""Domain types: examples, dataset splits, pseudo-label sets, ensemble state."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import InsufficientClassSamples, InvalidParams, InvalidState

STAGES = ("inter", "intra", "intersection", "final")


@dataclass(frozen=True)
class Example:
    id: int
    features: np.ndarray
    label: int | None = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Split:
    """A block of examples stored column-wise.

    ``labels`` is None for unlabeled data. Arrays are read-only.
    """

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64).reshape(-1)
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(len(ids), -1) if len(ids) else feats.reshape(0, 0)
        if feats.shape[0] != ids.shape[0]:
            raise InvalidParams(f"{ids.shape[0]} ids but {feats.shape[0]} feature rows")
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "features", _frozen(feats))
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape != ids.shape:
                raise InvalidParams("labels and ids differ in length")
            object.__setattr__(self, "labels", _frozen(labels))

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1]) if self.features.ndim == 2 else 0

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            label = None if self.labels is None else int(self.labels[i])
            yield Example(int(self.ids[i]), self.features[i], label)

    def take(self, index) -> Split:
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return Split(self.ids[index], self.features[index].reshape(-1, self.dim), labels)

    def with_features(self, features: np.ndarray) -> Split:
        return Split(self.ids, features, self.labels)

    def unlabeled(self) -> Split:
        return Split(self.ids, self.features, None)

    @classmethod
    def from_examples(cls, examples: Sequence[Example], dim: int | None = None) -> Split:
        examples = list(examples)
        if not examples:
            return cls.empty(dim or 0, labeled=True)
        ids = [e.id for e in examples]
        feats = np.stack([np.asarray(e.features, dtype=np.float64) for e in examples])
        if any(e.label is None for e in examples):
            labels = None
        else:
            labels = [e.label for e in examples]
        return cls(ids, feats, labels)

    @classmethod
    def empty(cls, dim: int, labeled: bool = True) -> Split:
        return cls(
            np.zeros(0, dtype=np.int64),
            np.zeros((0, dim)),
            np.zeros(0, dtype=np.int64) if labeled else None,
        )

    @staticmethod
    def concat(parts: Iterable[Split]) -> Split:
        parts = list(parts)
        labels = None
        if all(p.labels is not None for p in parts):
            labels = np.concatenate([p.labels for p in parts])
        return Split(
            np.concatenate([p.ids for p in parts]),
            np.concatenate([p.features for p in parts]),
            labels,
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled, unlabeled and test splits over a dense label space [0, C).

    Ground truth for the unlabeled split is kept in ``_hidden_labels`` and is
    read only through :func:`bicog.metrics.oracle_view`; the public
    ``unlabeled`` split never carries labels.
    """

    labeled: Split
    unlabeled: Split
    test: Split
    num_classes: int
    base_classes: tuple[int, ...] = ()
    _hidden_labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.unlabeled.labels is not None:
            # move truth out of the visible split
            object.__setattr__(self, "_hidden_labels", self.unlabeled.labels)
            object.__setattr__(self, "unlabeled", self.unlabeled.unlabeled())
        if self._hidden_labels is not None:
            object.__setattr__(
                self, "_hidden_labels", _frozen(np.array(self._hidden_labels, dtype=np.int64))
            )
        base = self.base_classes or tuple(range(self.num_classes))
        object.__setattr__(self, "base_classes", tuple(sorted(int(c) for c in base)))

    @property
    def dim(self) -> int:
        for s in (self.labeled, self.unlabeled, self.test):
            if len(s):
                return s.dim
        return self.labeled.dim

    @property
    def novel_classes(self) -> tuple[int, ...]:
        base = set(self.base_classes)
        return tuple(c for c in range(self.num_classes) if c not in base)


def validate_dataset(d: Dataset) -> list[str]:
    """List every violated dataset invariant; an empty list means valid."""
    problems: list[str] = []
    seen: dict[int, str] = {}
    dim = d.dim
    for name in ("labeled", "unlabeled", "test"):
        split: Split = getattr(d, name)
        for i in split.ids.tolist():
            if i in seen:
                problems.append(f"duplicate id {i} in {seen[i]} and {name}")
            else:
                seen[i] = name
        if len(split) and split.dim != dim:
            problems.append(f"{name}: feature dimension {split.dim} != {dim}")
        if name != "unlabeled":
            if split.labels is None:
                problems.append(f"{name}: labels missing")
                continue
            for i, y in zip(split.ids.tolist(), split.labels.tolist()):
                if not 0 <= y < d.num_classes:
                    problems.append(f"{name}: id {i} label {y} out of range [0, {d.num_classes})")
    if len(d.labeled) < 1:
        problems.append("labeled split is empty")
    if d.num_classes < 1:
        problems.append(f"num_classes must be positive, got {d.num_classes}")
    for c in d.base_classes:
        if not 0 <= c < d.num_classes:
            problems.append(f"base class {c} out of range")
    if d.labeled.labels is not None and len(d.base_classes) < d.num_classes:
        outside = sorted(set(d.labeled.labels.tolist()) - set(d.base_classes))
        if outside:
            problems.append(f"labeled split contains non-base classes {outside}")
    if d._hidden_labels is not None and len(d._hidden_labels) != len(d.unlabeled):
        problems.append("hidden truth length does not match unlabeled split")
    return problems


def make_open_world_split(
    pool: Dataset, base_fraction: float, shots_per_class: int, seed: int
) -> Dataset:
    """Split a fully labeled pool into few-shot labeled data and unlabeled data.

    The first ``ceil(base_fraction * C)`` classes of a seeded permutation
    become base classes; ``shots_per_class`` examples of each base class are
    labeled and every other pool example (base or novel) becomes unlabeled.
    """
    if not 0.0 < base_fraction <= 1.0:
        raise InvalidParams(f"base_fraction must lie in (0, 1], got {base_fraction}")
    if shots_per_class < 1:
        raise InvalidParams("shots_per_class must be >= 1")
    src = pool.labeled
    if src.labels is None:
        raise InvalidParams("pool must be labeled")
    C = pool.num_classes
    if len(set(src.labels.tolist())) < 2:
        raise InvalidParams("pool must cover at least two classes")

    rng = np.random.default_rng(seed)
    n_base = min(C, math.ceil(base_fraction * C - 1e-12))
    base = tuple(sorted(int(c) for c in rng.permutation(C)[:n_base]))

    chosen: list[int] = []
    for c in base:
        members = np.flatnonzero(src.labels == c)
        if len(members) < shots_per_class:
            raise InsufficientClassSamples(
                f"class {c} has {len(members)} examples, need {shots_per_class}"
            )
        chosen.extend(rng.choice(members, size=shots_per_class, replace=False).tolist())
    chosen_idx = np.array(sorted(chosen), dtype=np.int64)
    rest = np.setdiff1d(np.arange(len(src)), chosen_idx)
    return Dataset(
        labeled=src.take(chosen_idx),
        unlabeled=src.take(rest),
        test=pool.test,
        num_classes=C,
        base_classes=base,
    )


def carve_pretrain_samples(
    pool: Dataset, per_class: int, count: int, seed: int
) -> tuple[Dataset, list[Split]]:
    """Remove ``count`` disjoint per-class samples from a labeled pool.

    Each returned sample covers all C classes and is meant for simulating
    pre-training of one ensemble member before any self-training.
    """
    src = pool.labeled
    rng = np.random.default_rng(seed)
    taken: list[list[int]] = [[] for _ in range(count)]
    for c in range(pool.num_classes):
        members = np.flatnonzero(src.labels == c)
        need = per_class * count
        if len(members) < need:
            raise InsufficientClassSamples(
                f"class {c} has {len(members)} examples, pretraining needs {need}"
            )
        picked = rng.choice(members, size=need, replace=False)
        for k in range(count):
            taken[k].extend(picked[k * per_class:(k + 1) * per_class].tolist())
    used = np.array(sorted(i for t in taken for i in t), dtype=np.int64)
    rest = np.setdiff1d(np.arange(len(src)), used)
    remaining = Dataset(
        labeled=src.take(rest),
        unlabeled=Split.empty(src.dim, labeled=False),
        test=pool.test,
        num_classes=pool.num_classes,
    )
    return remaining, [src.take(np.array(sorted(t), dtype=np.int64)) for t in taken]


@dataclass(frozen=True)
class PseudoLabeledSet:
    """Pseudo-labels keyed by example id, tagged with the stage that made them."""

    entries: Mapping[int, int]
    stage: str = "inter"

    def __post_init__(self):
        if self.stage not in STAGES:
            raise InvalidParams(f"unknown stage {self.stage!r}")
        frozen = {int(k): int(v) for k, v in sorted(dict(self.entries).items())}
        object.__setattr__(self, "entries", MappingProxyType(frozen))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, example_id) -> bool:
        return example_id in self.entries

    def __eq__(self, other) -> bool:
        if not isinstance(other, PseudoLabeledSet):
            return NotImplemented
        return dict(self.entries) == dict(other.entries) and self.stage == other.stage

    def ids(self) -> np.ndarray:
        return np.fromiter(self.entries.keys(), dtype=np.int64, count=len(self))

    def labels(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=np.int64, count=len(self))

    def pairs(self) -> set[tuple[int, int]]:
        return set(self.entries.items())

    def retag(self, stage: str) -> PseudoLabeledSet:
        return PseudoLabeledSet(self.entries, stage)

    def as_split(self, source: Split) -> Split:
        """Features from ``source`` paired with the pseudo-labels."""
        pos = {i: n for n, i in enumerate(source.ids.tolist())}
        idx = np.array([pos[i] for i in self.entries], dtype=np.int64)
        return Split(source.ids[idx], source.features[idx].reshape(-1, source.dim), self.labels())


@dataclass
class EnsembleState:
    learners: list
    prev_error: list[float] = field(default_factory=list)
    prev_count: list[int] = field(default_factory=list)
    round: int = 0
    update_flags: list[bool] = field(default_factory=list)

    def __post_init__(self):
        K = len(self.learners)
        if K < 3:
            raise InvalidState(f"an ensemble needs K >= 3 learners, got {K}")
        if not self.prev_error:
            self.prev_error = [0.5] * K
        if not self.prev_count:
            self.prev_count = [0] * K
        if not self.update_flags:
            self.update_flags = [False] * K
        if not (len(self.prev_error) == len(self.prev_count) == len(self.update_flags) == K):
            raise InvalidState("per-model bookkeeping lengths must equal K")

    @property
    def K(self) -> int:
        return len(self.learners)

    def reset_bookkeeping(self) -> None:
        self.prev_error = [0.5] * self.K
        self.prev_count = [0] * self.K
        self.update_flags = [False] * self.K
        self.round = 0
