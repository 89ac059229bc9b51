"""Calculators for the noisy-label PAC argument behind error-aware filtering.

Learning with classification noise rate ``eta`` to excess error ``epsilon``
with confidence ``1 - delta`` over a finite class ``F`` needs

    m >= 2 / (epsilon^2 (1 - 2 eta)^2) * ln(2 |F| / delta)

samples. Writing ``c = 2 mu ln(2|F|/delta)`` turns this into
``epsilon = sqrt(c) / sqrt(m (1 - 2 eta)^2)``, so a self-training round helps
whenever it increases ``m (1 - 2 eta)^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidParams, NoiseTooHigh
from .selector import majority_vote


@dataclass(frozen=True)
class PacParams:
    epsilon: float
    eta: float
    hypothesis_count: int
    delta: float
    mu: float = 1.0

    def __post_init__(self):
        if self.eta >= 0.5:
            raise NoiseTooHigh(f"noise ratio must be < 0.5, got {self.eta}")
        if self.epsilon <= 0 or self.hypothesis_count < 1 or not 0 < self.delta < 1:
            raise InvalidParams("need epsilon > 0, |F| >= 1 and delta in (0, 1)")

    @property
    def c(self) -> float:
        return pac_constant(self.hypothesis_count, self.delta, self.mu)


def pac_constant(hypothesis_count: int, delta: float, mu: float = 1.0) -> float:
    return 2.0 * mu * math.log(2.0 * hypothesis_count / delta)


def pac_sample_bound(epsilon: float, eta: float, hypothesis_count: int, delta: float) -> int:
    """Smallest integer m satisfying the noisy-label PAC sample bound."""
    p = PacParams(epsilon, eta, hypothesis_count, delta)
    return math.ceil(2.0 / (p.epsilon**2 * (1 - 2 * p.eta) ** 2) * math.log(2 * p.hypothesis_count / p.delta))


def epsilon_from(m: float, eta: float, c: float) -> float:
    """Excess error reachable with ``m`` samples at noise ratio ``eta``."""
    if eta >= 0.5:
        raise NoiseTooHigh(f"noise ratio must be < 0.5, got {eta}")
    if m < 1 or c <= 0:
        raise InvalidParams("need m >= 1 and c > 0")
    return math.sqrt(c) / math.sqrt(m * (1 - 2 * eta) ** 2)


def noise_ratio(vote_error: float, pseudo_count: int, labeled_count: int) -> float:
    """Fraction of noisy labels in D_L plus pseudo-labels: e L_t / (L + L_t)."""
    if pseudo_count + labeled_count < 1:
        raise InvalidParams("training set is empty")
    if not 0 <= vote_error <= 1:
        raise InvalidParams("vote_error must lie in [0, 1]")
    return vote_error * pseudo_count / (labeled_count + pseudo_count)


def lemma1_holds(e_t: float, e_prev: float, L_t: int, L_prev: int) -> bool:
    """0 < e_t / e_prev < L_prev / L_t < 1, evaluated in exact arithmetic."""
    if e_prev <= 0 or L_t <= 0:
        raise InvalidParams("need e_prev > 0 and L_t > 0")
    err_ratio = Fraction(e_t) / Fraction(e_prev)
    count_ratio = Fraction(int(L_prev), int(L_t))
    return 0 < err_ratio < count_ratio < 1


@dataclass(frozen=True)
class SufficientCondition:
    holds: bool
    lhs: float  # (L + L_t) (1 - 2 eta_t)^2
    rhs: float  # (L + L_prev) (1 - 2 eta_prev)^2

    def __bool__(self) -> bool:
        return self.holds


def sufficient_condition_holds(
    e_t: float, e_prev: float, L_t: int, L_prev: int, labeled_count: int
) -> SufficientCondition:
    """L_t > L_prev and e_t L_t < e_prev L_prev, plus both sides of the
    ``m (1 - 2 eta)^2`` comparison the condition is meant to guarantee.

    The guarantee needs both noise ratios below 0.5, which holds whenever
    the error rates do.
    """
    if e_prev <= 0 or L_t <= 0:
        raise InvalidParams("need e_prev > 0 and L_t > 0")
    holds = int(L_t) > int(L_prev) and Fraction(e_t) * int(L_t) < Fraction(e_prev) * int(L_prev)
    if e_t <= 0:
        holds = False
    L = labeled_count

    def side(e, n):
        return (L + n) * (1 - 2 * noise_ratio(e, n, L)) ** 2 if L + n > 0 else 0.0

    return SufficientCondition(bool(holds), side(e_t, L_t), side(e_prev, L_prev))


@dataclass(frozen=True)
class VoteErrorEstimate:
    conditional_error: float
    acceptance_rate: float
    accepted: int
    trials: int


def mc_vote_error(
    peer_accuracies: Sequence[float],
    num_classes: int,
    trials: int,
    seed: int = 0,
    confusion: np.ndarray | None = None,
    mode: str = "paper",
    chunk: int = 1 << 16,
) -> VoteErrorEstimate:
    """Monte Carlo estimate of P(majority wrong | accepted) and P(accepted).

    Each peer is independently right with its accuracy; a wrong label is
    uniform over the other classes, or drawn from ``confusion[peer, y]``
    (a (P, C, C) array, or one (C, C) matrix shared by all peers). Votes go
    through the same unique-argmax rule as pseudo-label selection. Chunks use
    spawned seed streams and are reduced in order, so results depend only on
    ``seed`` and ``chunk``.
    """
    acc = np.asarray(peer_accuracies, dtype=np.float64)
    P, C = len(acc), int(num_classes)
    if trials < 1 or P < 1 or C < 2:
        raise InvalidParams("need trials >= 1, at least one peer and C >= 2")
    if ((acc < 0) | (acc > 1)).any():
        raise InvalidParams("accuracies must lie in [0, 1]")
    rows = None
    if confusion is not None:
        rows = np.broadcast_to(np.asarray(confusion, dtype=np.float64), (P, C, C)).copy()
        for k in range(P):
            np.fill_diagonal(rows[k], 0.0)
        rows /= rows.sum(axis=2, keepdims=True)
        rows = np.cumsum(rows, axis=2)

    wrong_total = accepted_total = 0
    streams = np.random.SeedSequence(seed).spawn(-(-trials // chunk))
    for n_done, ss in zip(range(0, trials, chunk), streams):
        n = min(chunk, trials - n_done)
        rng = np.random.default_rng(ss)
        truth = rng.integers(0, C, size=n)
        votes = np.empty((P, n), dtype=np.int64)
        for k in range(P):
            right = rng.random(n) < acc[k]
            if rows is None:
                wrong = (truth + rng.integers(1, C, size=n)) % C
            else:
                u = rng.random(n)[:, None]
                wrong = np.minimum((rows[k][truth] <= u).sum(axis=1), C - 1)
            votes[k] = np.where(right, truth, wrong)
        labels, _, ok = majority_vote(votes, C, mode)
        accepted_total += int(ok.sum())
        wrong_total += int((ok & (labels != truth)).sum())
    cond = wrong_total / accepted_total if accepted_total else float("nan")
    return VoteErrorEstimate(cond, accepted_total / trials, accepted_total, trials)
