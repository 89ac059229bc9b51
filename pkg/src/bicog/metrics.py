"""Evaluation with oracle access: accuracies, harmonic mean, pseudo-label
quality, label-distribution bias and error-ratio tracking.

This is the only module that reads the hidden ground truth of unlabeled data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Dataset, PseudoLabeledSet, Split
from .errors import EmptySubset, UnknownId
from .selector import majority_vote


class OracleView:
    """Ground-truth lookup over every split of a dataset."""

    def __init__(self, dataset: Dataset):
        parts = [(dataset.labeled.ids, dataset.labeled.labels), (dataset.test.ids, dataset.test.labels)]
        if dataset._hidden_labels is not None:
            parts.append((dataset.unlabeled.ids, dataset._hidden_labels))
        ids = np.concatenate([p[0] for p in parts if p[1] is not None])
        labels = np.concatenate([p[1] for p in parts if p[1] is not None])
        order = np.argsort(ids, kind="stable")
        self._ids = ids[order]
        self._labels = labels[order]
        self.num_classes = dataset.num_classes

    def __len__(self) -> int:
        return len(self._ids)

    def labels_of(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if len(ids) == 0:
            return np.zeros(0, dtype=np.int64)
        pos = np.clip(np.searchsorted(self._ids, ids), 0, max(len(self._ids) - 1, 0))
        if len(self._ids) == 0 or (self._ids[pos] != ids).any():
            missing = ids[(self._ids[pos] != ids)] if len(self._ids) else ids
            raise UnknownId(f"no ground truth for ids {missing[:5].tolist()}")
        return self._labels[pos]

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self._ids.tolist(), self._labels.tolist()))


def oracle_view(dataset: Dataset) -> OracleView:
    return OracleView(dataset)


def harmonic_mean(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2 * a * b / (a + b)


@dataclass(frozen=True)
class EvalReport:
    overall_accuracy: float
    base_accuracy: float | None
    novel_accuracy: float | None
    harmonic_mean: float | None
    per_class_accuracy: tuple[float | None, ...]

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "base_accuracy": self.base_accuracy,
            "novel_accuracy": self.novel_accuracy,
            "harmonic_mean": self.harmonic_mean,
            "per_class_accuracy": list(self.per_class_accuracy),
        }


def ensemble_predict(learners: Sequence, batch: Split, num_classes: int) -> np.ndarray:
    """Unique-argmax majority over all models; abstentions fall back to model 1."""
    votes = np.stack([m.predict_batch(batch) for m in learners])
    labels, _, ok = majority_vote(votes, num_classes, "paper")
    return np.where(ok, labels, votes[0])


def evaluate(
    predictor,
    test: Split,
    base_classes: Sequence[int],
    num_classes: int,
    require_hm: bool = False,
) -> EvalReport:
    """Accuracy report for a learner, a list of learners (ensemble vote), or
    a callable mapping a Split to predicted labels."""
    if len(test) == 0:
        raise EmptySubset("test split is empty")
    pred = _predict(predictor, test, num_classes)
    truth = test.labels
    hit = pred == truth
    base_mask = np.isin(truth, list(base_classes))
    novel_mask = ~base_mask

    def acc(mask):
        return float(hit[mask].mean()) if mask.any() else None

    base_acc, novel_acc = acc(base_mask), acc(novel_mask)
    if base_acc is None or novel_acc is None:
        if require_hm:
            raise EmptySubset("harmonic mean needs non-empty base and novel test subsets")
        hm = None
    else:
        hm = harmonic_mean(base_acc, novel_acc)
    per_class = tuple(acc(truth == c) for c in range(num_classes))
    return EvalReport(float(hit.mean()), base_acc, novel_acc, hm, per_class)


def _predict(predictor, batch: Split, num_classes: int) -> np.ndarray:
    if hasattr(predictor, "predict_batch"):
        return predictor.predict_batch(batch)
    if isinstance(predictor, (list, tuple)):
        return ensemble_predict(predictor, batch, num_classes)
    if callable(predictor):
        return np.asarray(predictor(batch), dtype=np.int64)
    raise TypeError(f"cannot predict with {type(predictor).__name__}")


def pseudo_label_accuracy(pl_set: PseudoLabeledSet, oracle: OracleView) -> float | None:
    """Fraction of correct pseudo-labels; None (undefined) for an empty set."""
    if len(pl_set) == 0:
        return None
    truth = oracle.labels_of(pl_set.ids())
    return float((truth == pl_set.labels()).mean())


@dataclass(frozen=True)
class DistributionStats:
    class_counts: tuple[int, ...]
    shares: tuple[float, ...]
    max_share: float | None
    entropy: float | None
    kl_to_uniform: float | None


def distribution_stats(pl_set: PseudoLabeledSet | Sequence[int], num_classes: int) -> DistributionStats:
    labels = pl_set.labels() if isinstance(pl_set, PseudoLabeledSet) else np.asarray(pl_set, dtype=np.int64)
    counts = np.bincount(labels, minlength=num_classes)[:num_classes]
    total = int(counts.sum())
    if total == 0:
        return DistributionStats(tuple(counts.tolist()), (0.0,) * num_classes, None, None, None)
    shares = counts / total
    nz = shares[shares > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    return DistributionStats(
        tuple(int(c) for c in counts),
        tuple(float(s) for s in shares),
        float(shares.max()),
        entropy,
        float(math.log(num_classes) - entropy),
    )


@dataclass(frozen=True)
class RatioPair:
    round: int
    estimated: float  # (e_t / e_prev) ** (alpha t) from labeled-data estimates
    true: float  # pseudo-label error at this update over the previous one


def error_ratio_track(history, model: int, alpha: float = 1.0) -> list[RatioPair]:
    """Estimated versus true error-ratio pairs for one model's update rounds.

    True errors are measured on the accepted pseudo-labels. Like the
    previous-error estimate, the previous true error starts at 0.5. Rounds
    without an update, or whose pseudo-label accuracy is undefined, emit no
    pair.
    """
    pairs: list[RatioPair] = []
    prev_true = 0.5
    for rec in history:
        m = rec.models[model]
        if not m.updated or m.pl_accuracy is None:
            continue
        true_err = 1.0 - m.pl_accuracy
        est = (m.measured_error / m.prev_error) ** (alpha * rec.round)
        ratio = true_err / prev_true if prev_true > 0 else float("nan")
        pairs.append(RatioPair(rec.round, est, ratio))
        prev_true = true_err
    return pairs


def peer_accuracy_on(pl_set: PseudoLabeledSet, peer_orig_predictions: np.ndarray, ids: np.ndarray,
                     oracle: OracleView) -> float | None:
    """Mean individual accuracy of the peers on the samples of ``pl_set``."""
    if len(pl_set) == 0:
        return None
    pos = {i: n for n, i in enumerate(np.asarray(ids).tolist())}
    idx = np.array([pos[i] for i in pl_set.entries], dtype=np.int64)
    truth = oracle.labels_of(pl_set.ids())
    return float((peer_orig_predictions[:, idx] == truth[None, :]).mean())

