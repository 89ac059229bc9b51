"""Synthetic generators and CSV loading.

Generators return a *pool*: a Dataset whose labeled split holds every training
example (to be split later with :func:`make_open_world_split`) plus a
separate, class-balanced test split.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Dataset, Split, make_open_world_split
from .errors import InvalidParams, MissingColumn, ParseError

GENERATORS = ("blobs", "rings", "biased_blobs")

_DEFAULTS = {
    "num_classes": 4,
    "per_class": 100,
    "test_per_class": 50,
    "dim": 2,
    "separation": 3.0,
    "cluster_std": 1.0,
    "ring_gap": 1.0,
    "bias_class": 0,
    "bias_skew": 3.0,
}


def _params(name: str, params: dict) -> dict:
    unknown = set(params) - set(_DEFAULTS)
    if unknown:
        raise InvalidParams(f"unknown generator parameters {sorted(unknown)}")
    p = {**_DEFAULTS, **params}
    if p["num_classes"] < 2:
        raise InvalidParams("num_classes must be >= 2")
    if p["per_class"] < 1 or p["test_per_class"] < 0:
        raise InvalidParams("per_class must be >= 1 and test_per_class >= 0")
    if p["dim"] < 1 or (name == "rings" and p["dim"] < 2):
        raise InvalidParams("dim too small for generator")
    if p["separation"] < 0 or p["cluster_std"] < 0 or p["ring_gap"] <= 0:
        raise InvalidParams("separation and cluster_std must be >= 0, ring_gap > 0")
    if not 0 <= p["bias_class"] < p["num_classes"] or p["bias_skew"] < 1:
        raise InvalidParams("bias_class out of range or bias_skew < 1")
    return p


def _blob_centers(rng, C, dim, separation):
    # expected distance between two centers equals `separation` cluster stds
    return separation / math.sqrt(2 * dim) * rng.standard_normal((C, dim))


def generate_dataset(name: str, params: dict | None = None, seed: int = 0) -> Dataset:
    """Generate a labeled pool and a test split.

    ``blobs``: isotropic Gaussian clusters. ``rings``: concentric annuli in
    the first two dimensions, Gaussian noise elsewhere. ``biased_blobs``:
    blobs whose ``bias_class`` has ``bias_skew`` times more training examples.
    """
    if name not in GENERATORS:
        raise InvalidParams(f"unknown generator {name!r}; choose from {GENERATORS}")
    p = _params(name, params or {})
    C, dim, std = p["num_classes"], p["dim"], p["cluster_std"]
    rng = np.random.default_rng(seed)
    sizes = [p["per_class"]] * C
    if name == "biased_blobs":
        sizes[p["bias_class"]] = int(round(p["per_class"] * p["bias_skew"]))

    if name == "rings":
        def draw(c, n):
            angle = rng.uniform(0, 2 * np.pi, n)
            radius = (c + 1) * p["ring_gap"] + std * 0.25 * p["ring_gap"] * rng.standard_normal(n)
            x = std * rng.standard_normal((n, dim))
            x[:, 0] = radius * np.cos(angle)
            x[:, 1] = radius * np.sin(angle)
            return x
    else:
        centers = _blob_centers(rng, C, dim, p["separation"])

        def draw(c, n):
            return centers[c] + std * rng.standard_normal((n, dim))

    train_x = [draw(c, n) for c, n in enumerate(sizes)]
    test_x = [draw(c, p["test_per_class"]) for c in range(C)]
    train_y = np.concatenate([np.full(n, c) for c, n in enumerate(sizes)])
    test_y = np.repeat(np.arange(C), p["test_per_class"])
    n_train = len(train_y)
    return Dataset(
        labeled=Split(np.arange(n_train), np.concatenate(train_x), train_y),
        unlabeled=Split.empty(dim, labeled=False),
        test=Split(np.arange(n_train, n_train + len(test_y)), np.concatenate(test_x).reshape(-1, dim), test_y),
        num_classes=C,
    )


@dataclass(frozen=True)
class CsvSplitSpec:
    base_fraction: float = 1.0
    shots_per_class: int = 4
    test_fraction: float = 0.2
    seed: int = 0


def load_csv(
    path: str | Path,
    feature_columns: Sequence[str],
    label_column: str,
    split_column: str | None = None,
    split: CsvSplitSpec | None = None,
) -> tuple[Dataset, dict[str, int]]:
    """Read a CSV file into a Dataset.

    Labels map to dense indices in order of first appearance; the mapping is
    returned alongside the dataset. With a split column, its values
    (labeled/unlabeled/test) decide membership; otherwise a seeded split is
    derived from ``split``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [*feature_columns, label_column] + ([split_column] if split_column else []):
            if col not in header:
                raise MissingColumn(f"column {col!r} not in header {header}")
        label_map: dict[str, int] = {}
        feats, labels, roles = [], [], []
        for row_no, row in enumerate(reader, start=2):  # header is row 1
            vec = []
            for col in feature_columns:
                try:
                    vec.append(float(row[col]))
                except (TypeError, ValueError):
                    raise ParseError(
                        f"row {row_no}, column {col}: cannot parse {row[col]!r} as a number",
                        row=row_no, column=col,
                    ) from None
            feats.append(vec)
            labels.append(label_map.setdefault(row[label_column], len(label_map)))
            if split_column:
                role = (row[split_column] or "").strip()
                if role not in ("labeled", "unlabeled", "test"):
                    raise ParseError(
                        f"row {row_no}, column {split_column}: unknown split {role!r}",
                        row=row_no, column=split_column,
                    )
                roles.append(role)
    if not feats:
        raise ParseError("no data rows", row=2)
    X = np.asarray(feats, dtype=np.float64).reshape(len(feats), len(feature_columns))
    y = np.asarray(labels, dtype=np.int64)
    ids = np.arange(len(y))
    C = len(label_map)

    if split_column:
        roles_arr = np.array(roles)

        def part(role, keep_labels=True):
            idx = np.flatnonzero(roles_arr == role)
            return Split(ids[idx], X[idx].reshape(-1, X.shape[1]), y[idx] if keep_labels else None)

        labeled = part("labeled")
        return Dataset(
            labeled=labeled,
            unlabeled=part("unlabeled"),
            test=part("test"),
            num_classes=C,
            base_classes=tuple(sorted(set(labeled.labels.tolist()))) if len(labeled) else (),
        ), label_map

    spec = split or CsvSplitSpec()
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(y))
    n_test = int(round(spec.test_fraction * len(y)))
    test_idx, pool_idx = np.sort(order[:n_test]), np.sort(order[n_test:])
    pool = Dataset(
        labeled=Split(ids[pool_idx], X[pool_idx], y[pool_idx]),
        unlabeled=Split.empty(X.shape[1], labeled=False),
        test=Split(ids[test_idx], X[test_idx].reshape(-1, X.shape[1]), y[test_idx]),
        num_classes=C,
    )
    return make_open_world_split(pool, spec.base_fraction, spec.shots_per_class, spec.seed), label_map
