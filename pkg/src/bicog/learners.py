"""Pluggable base learners.

Every learner predicts over the full label space [0, C). Pre-training on a
small sample that covers all classes stands in for the zero-shot ability of a
pre-trained vision-language model; fine-tuning always warm-starts from the
current parameters.
"""
from __future__ import annotations

import copy
from abc import ABC, abstractmethod
from typing import Mapping, Sequence

import numpy as np

from ._keyed import keyed_normal, keyed_uniform
from .core import Example, Split
from .errors import DimensionMismatch, EmptyTrainSet, InvalidParams, NoPrototype, UnknownId

VIEWS = ("orig", "weak", "strong")
_VIEW_CODE = {"orig": 0, "weak": 1, "strong": 2}


class BaseLearner(ABC):
    """Contract shared by all ensemble members.

    ``view`` and ``round`` tell the learner which augmented view a batch
    holds. Feature-based learners ignore them because the batch features are
    already perturbed; oracle learners use them to key their view behaviour.
    """

    family = "base"
    uses_oracle = False

    def __init__(self, num_classes: int, seed: int = 0):
        if num_classes < 1:
            raise InvalidParams("num_classes must be positive")
        self.num_classes = int(num_classes)
        self.seed = int(seed)

    @abstractmethod
    def pretrain(self, sample: Split) -> None: ...

    @abstractmethod
    def fine_tune(self, train: Split, epochs: int, learning_rate: float) -> None: ...

    @abstractmethod
    def predict_batch(self, batch: Split, *, view: str = "orig", round: int = 0) -> np.ndarray: ...

    def predict(self, example: Example, *, view: str = "orig", round: int = 0) -> int:
        batch = Split([example.id], np.asarray(example.features, dtype=np.float64)[None, :])
        return int(self.predict_batch(batch, view=view, round=round)[0])

    def snapshot(self):
        return copy.deepcopy(self.__dict__)

    def restore(self, snap) -> None:
        self.__dict__.update(copy.deepcopy(snap))


# --- multinomial logistic regression ---------------------------------------


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss_grad(W, b, X, y, l2=0.0):
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradient.

    Returns ``(loss, grad_W, grad_b)``; ``W`` has shape (C, d).
    """
    n = X.shape[0]
    probs = softmax(X @ W.T + b)
    picked = probs[np.arange(n), y]
    loss = -np.mean(np.log(np.clip(picked, 1e-300, None))) + 0.5 * l2 * np.sum(W * W)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, delta.T @ X + l2 * W, delta.sum(axis=0)


def logistic_fit(W, b, X, y, epochs: int, learning_rate: float, l2: float = 0.0):
    """Full-batch gradient descent; returns ``(W, b, losses)``.

    ``losses[i]`` is the objective before step ``i``; parameters are copied,
    never modified in place.
    """
    if epochs < 0:
        raise InvalidParams("epochs must be >= 0")
    if learning_rate <= 0:
        raise InvalidParams("learning_rate must be positive")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != W.shape[1]:
        raise DimensionMismatch(f"features have width {X.shape[-1]}, parameters expect {W.shape[1]}")
    y = np.asarray(y, dtype=np.int64)
    W, b = W.copy(), b.copy()
    losses = []
    for _ in range(epochs):
        loss, gW, gb = cross_entropy_loss_grad(W, b, X, y, l2)
        losses.append(loss)
        W -= learning_rate * gW
        b -= learning_rate * gb
    return W, b, losses


class LogisticLearner(BaseLearner):
    family = "logistic"

    def __init__(
        self,
        num_classes: int,
        l2: float = 1e-3,
        pretrain_epochs: int = 200,
        pretrain_lr: float = 0.1,
        init_scale: float = 0.01,
        seed: int = 0,
    ):
        super().__init__(num_classes, seed)
        self.l2 = l2
        self.pretrain_epochs = pretrain_epochs
        self.pretrain_lr = pretrain_lr
        self.init_scale = init_scale
        self.W: np.ndarray | None = None
        self.b: np.ndarray | None = None

    def _init(self, dim: int) -> None:
        rng = np.random.default_rng(self.seed)
        self.W = self.init_scale * rng.standard_normal((self.num_classes, dim))
        self.b = np.zeros(self.num_classes)

    def pretrain(self, sample: Split) -> None:
        self._init(sample.dim)
        self.W, self.b, _ = logistic_fit(
            self.W, self.b, sample.features, sample.labels,
            self.pretrain_epochs, self.pretrain_lr, self.l2,
        )

    def fine_tune(self, train: Split, epochs: int, learning_rate: float) -> None:
        if self.W is None:
            self._init(train.dim)
        if epochs == 0 or len(train) == 0:
            return
        self.W, self.b, _ = logistic_fit(
            self.W, self.b, train.features, train.labels, epochs, learning_rate, self.l2
        )

    def scores(self, features: np.ndarray) -> np.ndarray:
        if self.W is None:
            raise NoPrototype("logistic learner has not been trained")
        if features.shape[1] != self.W.shape[1]:
            raise DimensionMismatch(
                f"features have width {features.shape[1]}, parameters expect {self.W.shape[1]}"
            )
        return features @ self.W.T + self.b

    def predict_batch(self, batch: Split, *, view: str = "orig", round: int = 0) -> np.ndarray:
        if len(batch) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argmax(self.scores(batch.features), axis=1).astype(np.int64)


# --- nearest centroid -------------------------------------------------------


def centroid_predict(centroids: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Index of the nearest centroid; ties go to the lowest class index."""
    if np.isnan(centroids).any():
        missing = np.flatnonzero(np.isnan(centroids).any(axis=1)).tolist()
        raise NoPrototype(f"classes {missing} have no prototype")
    d2 = ((features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1).astype(np.int64)


class CentroidLearner(BaseLearner):
    """Nearest class centroid.

    Fine-tuning is gradient descent on the mean squared distance of each
    class's training points to its centroid, so one epoch at learning rate 1
    moves a centroid exactly onto its class mean.
    """

    family = "centroid"

    def __init__(self, num_classes: int, seed: int = 0):
        super().__init__(num_classes, seed)
        self.centroids: np.ndarray | None = None

    def _ensure(self, dim: int) -> None:
        if self.centroids is None:
            self.centroids = np.full((self.num_classes, dim), np.nan)

    def pretrain(self, sample: Split) -> None:
        self._ensure(sample.dim)
        for c in np.unique(sample.labels):
            self.centroids[c] = sample.features[sample.labels == c].mean(axis=0)

    def fine_tune(self, train: Split, epochs: int, learning_rate: float) -> None:
        if epochs == 0 or len(train) == 0:
            return
        self._ensure(train.dim)
        for c in np.unique(train.labels):
            mean = train.features[train.labels == c].mean(axis=0)
            if np.isnan(self.centroids[c]).any():
                self.centroids[c] = mean
                continue
            self.centroids[c] = mean + (1.0 - learning_rate) ** epochs * (self.centroids[c] - mean)

    def predict_batch(self, batch: Split, *, view: str = "orig", round: int = 0) -> np.ndarray:
        if self.centroids is None:
            raise NoPrototype("centroid learner has not been trained")
        if len(batch) == 0:
            return np.zeros(0, dtype=np.int64)
        return centroid_predict(self.centroids, batch.features)


# --- k nearest neighbours ---------------------------------------------------


def knn_predict(train: Split, features: np.ndarray, k: int, chunk: int = 256) -> np.ndarray:
    """Majority label among the k nearest training points.

    Distance ties break toward the lower example id, label ties toward the
    lower class index.
    """
    if len(train) == 0:
        raise EmptyTrainSet("k-NN needs a non-empty training set")
    if k < 1 or k > len(train):
        raise InvalidParams(f"k must lie in [1, {len(train)}], got {k}")
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    id_rank = np.argsort(np.argsort(train.ids, kind="stable"), kind="stable")
    C = int(train.labels.max()) + 1
    out = np.empty(features.shape[0], dtype=np.int64)
    for start in range(0, features.shape[0], chunk):
        q = features[start:start + chunk]
        d2 = ((q[:, None, :] - train.features[None, :, :]) ** 2).sum(axis=2)
        for r in range(q.shape[0]):
            order = np.lexsort((id_rank, d2[r]))[:k]
            out[start + r] = int(np.argmax(np.bincount(train.labels[order], minlength=C)))
    return out


class KNNLearner(BaseLearner):
    """k-NN over the pretrain sample plus the most recent fine-tuning set."""

    family = "knn"

    def __init__(self, num_classes: int, k: int = 5, seed: int = 0):
        super().__init__(num_classes, seed)
        self.k = k
        self.pretrain_split: Split | None = None
        self.memory: Split | None = None

    def pretrain(self, sample: Split) -> None:
        self.pretrain_split = sample
        self.memory = sample

    def fine_tune(self, train: Split, epochs: int, learning_rate: float) -> None:
        if epochs == 0 or len(train) == 0:
            return
        parts = [train]
        if self.pretrain_split is not None:
            keep = ~np.isin(self.pretrain_split.ids, train.ids)
            parts.insert(0, self.pretrain_split.take(np.flatnonzero(keep)))
        self.memory = Split.concat(parts)

    def predict_batch(self, batch: Split, *, view: str = "orig", round: int = 0) -> np.ndarray:
        if self.memory is None:
            raise EmptyTrainSet("k-NN learner has no training data")
        if len(batch) == 0:
            return np.zeros(0, dtype=np.int64)
        return knn_predict(self.memory, batch.features, min(self.k, len(self.memory)))


# --- noisy oracle -----------------------------------------------------------

_STREAM_LATENT = 1
_STREAM_WRONG = 2
_STREAM_VIEW = 3


class NoisyOracleLearner(BaseLearner):
    """Controlled testbed learner with oracle access to ground truth.

    Each example gets a latent score ``u ~ U[0, 1)`` keyed by (seed, id); the
    oracle is right on the original view iff ``u < p_y``. A wrong prediction
    is a fixed per-example draw from the confusion row of ``y`` (uniform over
    the other classes by default), so errors are independent across examples
    and across oracles with different seeds.

    Augmented views shift the latent score by Gaussian noise keyed by
    (seed, id, round, view); weak views use ``weak_sigma``, strong views
    ``strong_sigma``. Errors therefore flip under perturbation more often than
    confident correct predictions do.

    ``schedule`` optionally lists per-class accuracy vectors indexed by the
    number of completed fine-tuning calls (clamped to the last entry). Because
    the latent scores are shared across versions, a rising schedule only ever
    turns wrong predictions into right ones.
    """

    family = "oracle"
    uses_oracle = True

    def __init__(
        self,
        truth: Mapping[int, int],
        num_classes: int,
        accuracy: float | Sequence[float] = 0.9,
        confusion: np.ndarray | None = None,
        schedule: Sequence[float | Sequence[float]] | None = None,
        weak_sigma: float = 0.05,
        strong_sigma: float = 0.5,
        seed: int = 0,
    ):
        super().__init__(num_classes, seed)
        items = sorted((int(k), int(v)) for k, v in dict(truth).items())
        self._ids = np.array([k for k, _ in items], dtype=np.int64)
        self._truth = np.array([v for _, v in items], dtype=np.int64)
        entries = list(schedule) if schedule else [accuracy]
        self.schedule = [self._as_vector(a) for a in entries]
        self.confusion = self._wrong_rows(confusion)
        self.weak_sigma = weak_sigma
        self.strong_sigma = strong_sigma
        self.version = 0

    def _as_vector(self, acc) -> np.ndarray:
        vec = np.broadcast_to(np.asarray(acc, dtype=np.float64), (self.num_classes,)).copy()
        if ((vec < 0) | (vec > 1)).any():
            raise InvalidParams("accuracies must lie in [0, 1]")
        return vec

    def _wrong_rows(self, confusion) -> np.ndarray:
        C = self.num_classes
        rows = np.ones((C, C)) if confusion is None else np.array(confusion, dtype=np.float64)
        if rows.shape != (C, C) or (rows < 0).any():
            raise InvalidParams("confusion must be a non-negative C x C matrix")
        np.fill_diagonal(rows, 0.0)
        sums = rows.sum(axis=1, keepdims=True)
        if C > 1 and (sums == 0).any():
            raise InvalidParams("every confusion row needs mass off the diagonal")
        return np.divide(rows, sums, out=np.zeros_like(rows), where=sums > 0)

    @property
    def accuracy(self) -> np.ndarray:
        return self.schedule[min(self.version, len(self.schedule) - 1)]

    def truth_of(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self._ids, ids)
        pos = np.clip(pos, 0, max(len(self._ids) - 1, 0))
        if len(self._ids) == 0 or (self._ids[pos] != ids).any():
            raise UnknownId("oracle has no ground truth for some requested ids")
        return self._truth[pos]

    def pretrain(self, sample: Split) -> None:
        pass

    def fine_tune(self, train: Split, epochs: int, learning_rate: float) -> None:
        if epochs > 0:
            self.version += 1

    def oracle_predict(self, ids, round: int = 0, view: str = "orig") -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        y = self.truth_of(ids)
        u = keyed_uniform(self.seed, ids, _STREAM_LATENT)
        if view != "orig":
            sigma = self.weak_sigma if view == "weak" else self.strong_sigma
            u = u + sigma * keyed_normal(self.seed, ids, round, _VIEW_CODE[view], _STREAM_VIEW)
        correct = u < self.accuracy[y]
        cdf = np.cumsum(self.confusion[y], axis=1)
        w = keyed_uniform(self.seed, ids, _STREAM_WRONG)
        wrong = np.minimum((cdf <= w[:, None] * cdf[:, -1:]).sum(axis=1), self.num_classes - 1)
        return np.where(correct, y, wrong).astype(np.int64)

    def predict_batch(self, batch: Split, *, view: str = "orig", round: int = 0) -> np.ndarray:
        if view not in _VIEW_CODE:
            raise InvalidParams(f"unknown view {view!r}")
        return self.oracle_predict(batch.ids, round=round, view=view)


def build_learner(family: str, num_classes: int, seed: int = 0, **params) -> BaseLearner:
    """Construct a feature-based learner by family name."""
    families = {"logistic": LogisticLearner, "centroid": CentroidLearner, "knn": KNNLearner}
    if family not in families:
        raise InvalidParams(f"unknown learner family {family!r}; oracle learners need a truth table")
    return families[family](num_classes, seed=seed, **params)
