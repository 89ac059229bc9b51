"""Three-stage pseudo-label selection.

1. inter-model consistency: unique-majority vote of the K-1 peers;
2. intra-model consistency: every peer is stable under a weak view, flips
   under a strong view, and all peers agree on the original view;
3. error-aware filtering: the peers' majority error on labeled data gates the
   update and bounds how many pseudo-labels may be used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Context, Decimal
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import PseudoLabeledSet, Split
from .errors import InvalidErrorRatio, InvalidParams, NoConsensus, PeerCountMismatch

VOTE_MODES = ("paper", "strict")
BUDGET_MODES = ("theorem", "algorithm")


@dataclass(frozen=True)
class VoteTally:
    example_id: int
    counts: tuple[int, ...]
    winner: tuple[int, int] | None

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class ErrorEstimate:
    error_rate: float
    consensus_count: int
    floor_applied: bool
    raw_error: float = 0.0
    error_floor: float = 0.0


def tally_votes(example_id: int, votes: Sequence[int], num_classes: int) -> VoteTally:
    counts = np.bincount(np.asarray(votes, dtype=np.int64), minlength=num_classes)
    top = int(counts.max()) if len(counts) else 0
    leaders = np.flatnonzero(counts == top)
    winner = (int(leaders[0]), top) if len(leaders) == 1 and top > 0 else None
    return VoteTally(int(example_id), tuple(int(c) for c in counts), winner)


def vote_threshold(num_peers: int, mode: str = "paper") -> float:
    """Minimum winning vote count: ceil(P/2) in paper mode, > P/2 in strict."""
    if mode == "paper":
        return math.ceil(num_peers / 2)
    if mode == "strict":
        return num_peers // 2 + 1
    raise InvalidParams(f"unknown vote mode {mode!r}")


def majority_vote(votes: np.ndarray, num_classes: int, mode: str = "paper"):
    """Vectorised unique-argmax majority rule.

    ``votes`` has shape (P, n). Returns ``(labels, top_counts, accepted)``;
    a sample is accepted iff its argmax is unique and meets the threshold.
    """
    votes = np.asarray(votes, dtype=np.int64)
    if votes.ndim != 2:
        raise InvalidParams("votes must have shape (peers, samples)")
    P, n = votes.shape
    counts = np.zeros((n, num_classes), dtype=np.int64)
    for row in votes:
        counts[np.arange(n), row] += 1
    top = counts.max(axis=1) if n else np.zeros(0, dtype=np.int64)
    labels = counts.argmax(axis=1) if n else np.zeros(0, dtype=np.int64)
    unique = (counts == top[:, None]).sum(axis=1) == 1
    accepted = unique & (top >= vote_threshold(P, mode))
    return labels.astype(np.int64), top, accepted


def _num_classes(*arrays, hint=None) -> int:
    if hint is not None:
        return int(hint)
    peak = max((int(np.max(a)) for a in arrays if np.size(a)), default=0)
    return peak + 1


def inter_consistency(
    unlabeled_ids,
    peer_predictions: Sequence[Sequence[int]],
    K: int,
    mode: str = "paper",
    num_classes: int | None = None,
) -> PseudoLabeledSet:
    """Samples whose peer vote has a unique, sufficiently large majority."""
    ids = np.asarray(unlabeled_ids, dtype=np.int64).reshape(-1)
    if len(peer_predictions) != K - 1:
        raise PeerCountMismatch(f"expected {K - 1} peer prediction lists, got {len(peer_predictions)}")
    votes = np.asarray(peer_predictions, dtype=np.int64).reshape(K - 1, -1)
    if votes.shape[1] != ids.shape[0]:
        raise PeerCountMismatch("every peer must predict every unlabeled sample")
    labels, _, accepted = majority_vote(votes, _num_classes(votes, hint=num_classes), mode)
    return PseudoLabeledSet(dict(zip(ids[accepted].tolist(), labels[accepted].tolist())), "inter")


def intra_from_predictions(unlabeled_ids, orig, weak, strong) -> PseudoLabeledSet:
    """Intersection over peers of {(x, f(x)) : f(x) = f(weak x), f(x) != f(strong x)}."""
    ids = np.asarray(unlabeled_ids, dtype=np.int64).reshape(-1)
    orig, weak, strong = (np.atleast_2d(np.asarray(a, dtype=np.int64)) for a in (orig, weak, strong))
    keep = ((orig == weak) & (orig != strong)).all(axis=0) & (orig == orig[0]).all(axis=0)
    return PseudoLabeledSet(dict(zip(ids[keep].tolist(), orig[0, keep].tolist())), "intra")


def peer_views(unlabeled: Split, peers, augmentor, round: int):
    """Predictions of every peer on the original, weak and strong views."""
    out = {}
    for kind in ("orig", "weak", "strong"):
        batch = augmentor.view(unlabeled, kind, round)
        out[kind] = np.stack([p.predict_batch(batch, view=kind, round=round) for p in peers])
    return out


def intra_consistency(unlabeled: Split, peers, augmentor, round: int) -> PseudoLabeledSet:
    views = peer_views(unlabeled, peers, augmentor, round)
    return intra_from_predictions(unlabeled.ids, views["orig"], views["weak"], views["strong"])


def intersect(a: PseudoLabeledSet, b: PseudoLabeledSet) -> PseudoLabeledSet:
    """Entries whose (id, label) pair appears in both sets."""
    shared = {i: y for i, y in a.entries.items() if b.entries.get(i) == y}
    return PseudoLabeledSet(shared, "intersection")


def measure_error(
    labeled: Split,
    peers,
    error_floor: float | None = None,
    *,
    mode: str = "paper",
    count_no_consensus: bool = False,
    num_classes: int | None = None,
) -> ErrorEstimate:
    """Error of the peers' majority vote on labeled data.

    ``peers`` is either a sequence of learners or a (P, n) array of their
    predictions on ``labeled``. By default samples without a unique majority
    are left out of the denominator; ``count_no_consensus`` counts them as
    errors instead. The result is clamped below by ``error_floor``, which
    defaults to ``1 / (2 |D_L|)``.
    """
    if len(labeled) == 0:
        raise InvalidParams("labeled split is empty")
    votes = _as_votes(labeled, peers)
    C = _num_classes(votes, labeled.labels, hint=num_classes)
    labels, _, accepted = majority_vote(votes, C, mode)
    wrong = int((accepted & (labels != labeled.labels)).sum())
    consensus = int(accepted.sum())
    if count_no_consensus:
        wrong += len(labeled) - consensus
        denom = len(labeled)
    else:
        if consensus == 0:
            raise NoConsensus("no labeled sample has a unique peer majority")
        denom = consensus
    raw = wrong / denom
    floor = 1.0 / (2 * len(labeled)) if error_floor is None else float(error_floor)
    applied = raw < floor
    return ErrorEstimate(max(raw, floor), consensus, applied, raw, floor)


def _as_votes(split: Split, peers) -> np.ndarray:
    if isinstance(peers, np.ndarray):
        return peers.astype(np.int64).reshape(-1, len(split))
    peers = list(peers)
    if peers and hasattr(peers[0], "predict_batch"):
        return np.stack([p.predict_batch(split) for p in peers])
    return np.asarray(peers, dtype=np.int64).reshape(-1, len(split))


# --- error-aware budget -----------------------------------------------------

_DECIMAL = Context(prec=60)


def _iroot(x: int, q: int) -> int | None:
    """Exact integer q-th root of x >= 0, or None."""
    if x < 2:
        return x
    r = 1 << -(-x.bit_length() // q)  # upper bound on the root
    while True:
        nxt = ((q - 1) * r + x // r ** (q - 1)) // q
        if nxt >= r:
            break
        r = nxt
    return r if r ** q == x else None


def ratio_power(e_prev: float, e_cur: float, t: int, alpha: float):
    """``(e_prev / e_cur) ** (alpha * t)`` as an exact Fraction when rational.

    Falls back to a 60-digit Decimal when the power is irrational, in which
    case it can never land exactly on an integer boundary.
    """
    ratio = Fraction(e_prev) / Fraction(e_cur)
    expo = Fraction(alpha) * t
    if expo.denominator == 1 and abs(expo.numerator) <= 4096:
        return ratio ** expo.numerator
    if expo.denominator <= 64 and abs(expo.numerator) <= 4096:
        powered = ratio ** expo.numerator
        num = _iroot(powered.numerator, expo.denominator)
        den = _iroot(powered.denominator, expo.denominator)
        if num is not None and den is not None:
            return Fraction(num, den)
    base = _DECIMAL.divide(Decimal(e_prev), Decimal(e_cur))
    return _DECIMAL.power(base, _DECIMAL.multiply(Decimal(alpha), Decimal(t)))


def _check_budget_args(e_prev, e_cur, t, alpha):
    if t < 1:
        raise InvalidParams("t must be >= 1")
    if alpha <= 0:
        raise InvalidParams("alpha must be positive")
    if not (0 < e_cur and e_prev <= 1):
        raise InvalidParams("error rates must satisfy 0 < e_cur and e_prev <= 1")


def budget(e_prev: float, e_cur: float, t: int, alpha: float, L_prev: int, mode: str = "theorem") -> int:
    """Maximum number of pseudo-labels usable at round ``t``.

    ``theorem`` mode: ``ceil(R * L_prev - 1)``; ``algorithm`` mode:
    ``floor(R * L_prev)``, where ``R = (e_prev / e_cur) ** (alpha * t)``.
    The theorem form is -1 when ``L_prev`` is 0.
    """
    _check_budget_args(e_prev, e_cur, t, alpha)
    if e_cur >= e_prev:
        raise InvalidErrorRatio(f"need e_cur < e_prev, got {e_cur} >= {e_prev}")
    if L_prev < 0:
        raise InvalidParams("L_prev must be >= 0")
    scaled = ratio_power(e_prev, e_cur, t, alpha) * int(L_prev)
    if mode == "theorem":
        return int(math.ceil(scaled - 1))
    if mode == "algorithm":
        return int(math.floor(scaled))
    raise InvalidParams(f"unknown budget mode {mode!r}")


def lower_bound_ok(e_prev: float, e_cur: float, t: int, alpha: float, L_prev: int) -> bool:
    """True iff e_cur < e_prev and L_prev > e_cur^(at) / (e_prev^(at) - e_cur^(at))."""
    _check_budget_args(e_prev, e_cur, t, alpha)
    if e_cur >= e_prev:
        return False
    # L (a - b) > b  <=>  L (R - 1) > 1 with R = a / b
    return bool(int(L_prev) * (ratio_power(e_prev, e_cur, t, alpha) - 1) > 1)


def bootstrap_count(e_prev: float, e_cur: float, t: int, alpha: float) -> int:
    """Smallest count satisfying the lower bound: floor(b / (a - b)) + 1."""
    _check_budget_args(e_prev, e_cur, t, alpha)
    if e_cur >= e_prev:
        raise InvalidErrorRatio(f"need e_cur < e_prev, got {e_cur} >= {e_prev}")
    return int(math.floor(1 / (ratio_power(e_prev, e_cur, t, alpha) - 1))) + 1


def subsample(
    pl_set: PseudoLabeledSet, n: int, seed, stratified: bool = False
) -> PseudoLabeledSet:
    """Random subset of size ``n`` without replacement, tagged ``final``.

    Stratified mode allots per-class quotas proportionally with
    largest-remainder rounding (ties toward the lower class index).
    """
    if n < 0:
        raise InvalidParams("n must be >= 0")
    if n >= len(pl_set):
        return pl_set.retag("final")
    ids, labels = pl_set.ids(), pl_set.labels()
    rng = np.random.default_rng(seed)
    if not stratified:
        pick = np.sort(rng.choice(len(ids), size=n, replace=False))
        return PseudoLabeledSet(dict(zip(ids[pick].tolist(), labels[pick].tolist())), "final")
    classes, counts = np.unique(labels, return_counts=True)
    exact = counts * n / len(ids)
    quota = np.floor(exact).astype(np.int64)
    remainder = exact - quota
    order = sorted(range(len(classes)), key=lambda i: (-remainder[i], classes[i]))
    for i in order[: n - int(quota.sum())]:
        quota[i] += 1
    chosen: dict[int, int] = {}
    for c, q in zip(classes, quota):
        members = np.flatnonzero(labels == c)
        pick = rng.choice(members, size=int(q), replace=False)
        chosen.update(zip(ids[pick].tolist(), labels[pick].tolist()))
    return PseudoLabeledSet(chosen, "final")
