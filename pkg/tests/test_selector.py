import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from oracles import all_vote_patterns, brute_vote, mp_budget, mp_lower_bound_ok

from bicog.core import PseudoLabeledSet, Split
from bicog.errors import InvalidErrorRatio, NoConsensus, PeerCountMismatch
from bicog.selector import (
    bootstrap_count,
    budget,
    inter_consistency,
    intersect,
    intra_consistency,
    intra_from_predictions,
    lower_bound_ok,
    measure_error,
    ratio_power,
    subsample,
    tally_votes,
    vote_threshold,
)

# --- inter-model consistency -----------------------------------------------------


def test_unanimous_peers_included():
    s = inter_consistency([7], [[2], [2]], K=3)
    assert s.entries == {7: 2} and s.stage == "inter"


def test_split_peers_excluded():
    assert len(inter_consistency([7], [[1], [2]], K=3)) == 0


def test_five_models_plurality_of_two():
    s = inter_consistency([0], [[3], [3], [1], [2]], K=5, mode="paper", num_classes=4)
    assert s.entries == {0: 3}
    assert len(inter_consistency([0], [[3], [3], [1], [2]], K=5, mode="strict", num_classes=4)) == 0


def test_peer_count_mismatch():
    with pytest.raises(PeerCountMismatch):
        inter_consistency([0], [[1], [1], [1]], K=3)


def test_thresholds():
    assert vote_threshold(2, "paper") == 1 and vote_threshold(2, "strict") == 2
    assert vote_threshold(4, "paper") == 2 and vote_threshold(4, "strict") == 3


@pytest.mark.parametrize("K,C", [(3, 2), (3, 3), (3, 4), (5, 2), (5, 3), (5, 4)])
@pytest.mark.parametrize("mode", ["paper", "strict"])
def test_matches_brute_force_on_every_pattern(K, C, mode):
    patterns = all_vote_patterns(K - 1, C)
    votes = np.array(patterns).T  # (peers, samples)
    got = inter_consistency(np.arange(len(patterns)), votes, K, mode, C).entries
    want = {i: y for i, p in enumerate(patterns) if (y := brute_vote(p, C, mode)) is not None}
    assert dict(got) == want


def test_tally_winner():
    t = tally_votes(3, [1, 1, 0, 2], 3)
    assert t.counts == (1, 2, 1) and t.winner == (1, 2) and t.total == 4
    assert tally_votes(3, [0, 1], 2).winner is None


# --- intra-model consistency -----------------------------------------------------


def test_intra_predicate_satisfied():
    s = intra_from_predictions([5], [[1], [1]], [[1], [1]], [[0], [0]])
    assert s.entries == {5: 1} and s.stage == "intra"


def test_intra_weak_flip_excluded():
    assert len(intra_from_predictions([5], [[1], [1]], [[1], [2]], [[0], [0]])) == 0


def test_intra_disagreeing_peers_excluded():
    assert len(intra_from_predictions([5], [[1], [2]], [[1], [2]], [[0], [0]])) == 0


def pair_set_oracle(orig, weak, strong):
    """Intersection over peers of each peer's (sample, label) pair set."""
    sets = []
    for o, w, s in zip(orig, weak, strong):
        sets.append({(i, o[i]) for i in range(len(o)) if o[i] == w[i] and o[i] != s[i]})
    return dict(set.intersection(*sets))


def test_intra_matches_pair_set_oracle_exhaustively():
    C = 3
    triples = list(itertools.product(range(C), repeat=3))  # (orig, weak, strong) of one peer
    combos = list(itertools.product(triples, repeat=2))  # two peers
    orig = np.array([[c[p][0] for c in combos] for p in range(2)])
    weak = np.array([[c[p][1] for c in combos] for p in range(2)])
    strong = np.array([[c[p][2] for c in combos] for p in range(2)])
    got = intra_from_predictions(np.arange(len(combos)), orig, weak, strong)
    assert dict(got.entries) == pair_set_oracle(orig.tolist(), weak.tolist(), strong.tolist())


class _Table:
    """Learner stub with fixed per-view predictions."""

    def __init__(self, orig, weak, strong):
        self.table = {"orig": orig, "weak": weak, "strong": strong}

    def predict_batch(self, batch, *, view="orig", round=0):
        return np.asarray(self.table[view])


class _IdentityAugmentor:
    def view(self, split, kind, round):
        return split


def test_intra_consistency_uses_peer_views():
    unl = Split([0, 1], np.zeros((2, 1)))
    peers = [_Table([1, 0], [1, 0], [0, 0]), _Table([1, 0], [1, 0], [2, 1])]
    assert intra_consistency(unl, peers, _IdentityAugmentor(), 1).entries == {0: 1}


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_intra_subset_of_original_agreement(data):
    n = data.draw(st.integers(1, 12))
    arr = st.lists(st.integers(0, 2), min_size=n, max_size=n)
    orig = [data.draw(arr) for _ in range(2)]
    weak = [data.draw(arr) for _ in range(2)]
    strong = [data.draw(arr) for _ in range(2)]
    s = intra_from_predictions(np.arange(n), orig, weak, strong)
    agree = {i for i in range(n) if orig[0][i] == orig[1][i]}
    assert set(s.entries) <= agree


# --- intersection ------------------------------------------------------------


def test_intersection_examples():
    a = PseudoLabeledSet({1: 1, 2: 2})
    assert intersect(a, PseudoLabeledSet({1: 1})).entries == {1: 1}
    assert len(intersect(PseudoLabeledSet({1: 1}), PseudoLabeledSet({1: 2}))) == 0
    assert len(intersect(PseudoLabeledSet({1: 1}), PseudoLabeledSet({3: 1}))) == 0
    assert intersect(a, a).stage == "intersection"


label_maps = st.dictionaries(st.integers(0, 30), st.integers(0, 3), max_size=20)


@given(label_maps, label_maps)
def test_intersection_properties(x, y):
    a, b = PseudoLabeledSet(x), PseudoLabeledSet(y)
    ab = intersect(a, b)
    assert ab.pairs() <= a.pairs() and ab.pairs() <= b.pairs()
    assert ab.pairs() == intersect(b, a).pairs()
    assert intersect(ab, ab).pairs() == ab.pairs()


# --- error measurement -------------------------------------------------------


def labeled(n, labels=None):
    return Split(np.arange(n), np.zeros((n, 1)), labels if labels is not None else np.zeros(n, dtype=int))


def test_error_two_of_ten_wrong():
    truth = np.zeros(10, dtype=int)
    votes = np.zeros((2, 10), dtype=int)
    votes[:, :2] = 1
    est = measure_error(labeled(10, truth), votes, num_classes=2)
    assert est.error_rate == 0.2 and est.consensus_count == 10 and not est.floor_applied


def test_error_perfect_peers_hit_floor():
    est = measure_error(labeled(10), np.zeros((2, 10), dtype=int), num_classes=2)
    assert est.error_rate == 1 / 20 and est.floor_applied


def test_error_no_consensus():
    votes = np.array([[0, 1], [1, 0]])
    with pytest.raises(NoConsensus):
        measure_error(labeled(2), votes, num_classes=2)


def test_error_counting_no_consensus_as_wrong():
    votes = np.array([[0, 1, 0, 0], [1, 0, 0, 0]])
    est = measure_error(labeled(4), votes, num_classes=2, count_no_consensus=True)
    assert est.error_rate == 0.5 and est.consensus_count == 2


def test_error_excludes_ties_from_denominator():
    votes = np.array([[0, 1, 0, 1], [1, 0, 0, 1]])
    est = measure_error(labeled(4), votes, num_classes=2)
    assert est.error_rate == 0.5 and est.consensus_count == 2


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_error_within_floor_and_one(data):
    n = data.draw(st.integers(1, 20))
    arr = st.lists(st.integers(0, 2), min_size=n, max_size=n)
    votes = np.array([data.draw(arr) for _ in range(2)])
    truth = np.array(data.draw(arr))
    try:
        est = measure_error(labeled(n, truth), votes, num_classes=3)
    except NoConsensus:
        return
    assert 1 / (2 * n) <= est.error_rate <= 1


# --- budget ------------------------------------------------------------------


def test_budget_examples():
    assert budget(0.2, 0.1, 2, 1.0, 100) == 399
    assert budget(0.5, 0.25, 1, 1.0, 10) == 19
    assert budget(0.5, 0.25, 1, 1.0, 10, mode="algorithm") == 20


def test_budget_small_alpha_limit():
    # R -> 1 from above, so ceil(R L - 1) -> L for L > 0
    assert budget(0.4, 0.2, 1, 1e-9, 10) == 10
    assert budget(0.4, 0.2, 1, 1e-9, 10, mode="algorithm") == 10
    assert budget(0.4, 0.2, 1, 1e-9, 0) == -1


def test_budget_rejects_non_improving_error():
    with pytest.raises(InvalidErrorRatio):
        budget(0.2, 0.2, 1, 1.0, 5)


def test_lower_bound_examples():
    assert lower_bound_ok(0.2, 0.1, 2, 1.0, 1)
    assert not lower_bound_ok(0.2, 0.1, 2, 1.0, 0)
    assert not lower_bound_ok(0.2, 0.2, 2, 1.0, 10)
    # bound is exactly 1/3 at R = 4; L = 1 > 1/3 but L (R - 1) = 3 > 1
    assert not lower_bound_ok(0.5, 0.25, 1, 1.0, 1)  # L (R - 1) = 1, not > 1


def test_bootstrap_count():
    assert bootstrap_count(0.5, 0.2, 1, 1.0) == 1  # floor(1 / 1.5) + 1
    assert bootstrap_count(0.5, 0.25, 1, 1.0) == 2  # boundary: 1 / (R - 1) = 1
    assert lower_bound_ok(0.5, 0.25, 1, 1.0, 2)


def test_ratio_power_exact_paths():
    assert ratio_power(0.2, 0.05, 1, 0.5) == 2
    assert ratio_power(0.2, 0.1, 3, 1.0) == 8
    assert ratio_power(0.5, 0.25, 2, 1.5) == 8


# frozen from the mpmath oracle in tests/oracles.py
FROZEN_BUDGETS = [
    ((0.3, 0.1, 1, 1.0, 7), "theorem", 20),
    ((0.3, 0.1, 1, 1.0, 7), "algorithm", 20),
    ((0.45, 0.4, 3, 0.7, 13), "theorem", 16),
    ((0.25, 0.08, 2, 0.5, 5), "theorem", 15),
    ((0.5, 0.0125, 1, 2.0, 1), "theorem", 1599),
]


@pytest.mark.parametrize("args,mode,value", FROZEN_BUDGETS)
def test_frozen_budget_values(args, mode, value):
    assert mp_budget(*args, mode=mode) == value
    assert budget(*args, mode=mode) == value


errors = st.sampled_from([0.5, 0.4, 0.3, 0.25, 0.2, 0.1, 0.05, 0.01])


@settings(max_examples=200, deadline=None)
@given(
    e_prev=errors,
    e_cur=errors,
    t=st.integers(1, 4),
    alpha=st.sampled_from([0.25, 0.5, 1.0, 2.0]),
    L=st.integers(0, 50),
)
def test_budget_matches_oracle_and_is_monotone(e_prev, e_cur, t, alpha, L):
    assume(e_cur < e_prev)
    b = budget(e_prev, e_cur, t, alpha, L)
    assert b == mp_budget(e_prev, e_cur, t, alpha, L)
    assert lower_bound_ok(e_prev, e_cur, t, alpha, L) == mp_lower_bound_ok(e_prev, e_cur, t, alpha, L)
    assert budget(e_prev, e_cur, t, alpha, L + 1) >= b
    assert budget(e_prev, e_cur, t + 1, alpha, L) >= b
    assert budget(e_prev, e_cur, t, alpha * 2, L) >= b
    smaller = [e for e in (0.01, 0.005) if e < e_cur]
    for e in smaller:
        assert budget(e_prev, e, t, alpha, L) >= b


@settings(max_examples=200, deadline=None)
@given(
    e_prev=errors,
    e_cur=errors,
    t=st.integers(1, 4),
    alpha=st.sampled_from([0.5, 1.0, 2.0]),
    L=st.integers(1, 50),
)
def test_gate_plus_budget_chains_lemma_condition(e_prev, e_cur, t, alpha, L):
    assume(e_cur < e_prev and lower_bound_ok(e_prev, e_cur, t, alpha, L))
    L_t = budget(e_prev, e_cur, t, alpha, L)
    inv_ratio = 1 / Fraction(ratio_power(e_prev, e_cur, t, alpha))
    assert 0 < inv_ratio < Fraction(L, L_t) < 1


# --- subsampling -------------------------------------------------------------


def big_set(n=50, C=3):
    return PseudoLabeledSet({i: i % C for i in range(n)}, "intersection")


def test_subsample_identity_and_zero():
    s = big_set()
    full = subsample(s, 60, seed=0)
    assert full.entries == s.entries and full.stage == "final"
    assert len(subsample(s, 0, seed=0)) == 0


def test_subsample_replay():
    a = subsample(big_set(), 17, seed=(1, 2, 3))
    b = subsample(big_set(), 17, seed=(1, 2, 3))
    assert a.entries == b.entries and len(a) == 17
    assert a.pairs() <= big_set().pairs()


def test_stratified_quotas_largest_remainder():
    s = PseudoLabeledSet({**{i: 0 for i in range(5)}, **{i: 1 for i in range(5, 8)}, 8: 2, 9: 2})
    # exact quotas 2.5, 1.5, 1.0 -> floors 2, 1, 1 and one extra seat to class 0
    out = subsample(s, 5, seed=0, stratified=True)
    assert np.bincount(out.labels(), minlength=3).tolist() == [3, 1, 1]
