import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bicog.core import Dataset, PseudoLabeledSet, Split
from bicog.errors import EmptySubset, UnknownId
from bicog.metrics import (
    distribution_stats,
    ensemble_predict,
    error_ratio_track,
    evaluate,
    harmonic_mean,
    oracle_view,
    peer_accuracy_on,
    pseudo_label_accuracy,
)
from bicog.orchestrator import ModelRound, RoundRecord


def test_harmonic_mean_examples():
    assert harmonic_mean(1.0, 1.0) == 1.0
    assert harmonic_mean(0.8, 0.6) == pytest.approx(0.96 / 1.4)
    assert harmonic_mean(0.7, 0.0) == 0.0
    assert harmonic_mean(0.0, 0.0) == 0.0


@given(st.floats(0, 1), st.floats(0, 1))
def test_harmonic_mean_bounds(a, b):
    hm = harmonic_mean(a, b)
    assert hm <= (a + b) / 2 + 1e-15
    assert 0 <= hm <= 1
    assert harmonic_mean(a, a) == pytest.approx(a)


def labeled_test_split():
    labels = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2, 2])
    return Split(np.arange(10), np.zeros((10, 1)), labels)


def test_always_class_zero_per_class_indicator():
    test = labeled_test_split()
    rep = evaluate(lambda b: np.zeros(len(b), dtype=int), test, [0, 1], 3)
    assert rep.per_class_accuracy == (1.0, 0.0, 0.0)
    assert rep.overall_accuracy == pytest.approx(0.3)
    assert rep.base_accuracy == pytest.approx(0.6) and rep.novel_accuracy == 0.0
    assert rep.harmonic_mean == 0.0


def test_evaluate_empty_subsets():
    test = labeled_test_split()
    rep = evaluate(lambda b: b.labels, test, [0, 1, 2], 3)
    assert rep.novel_accuracy is None and rep.harmonic_mean is None
    with pytest.raises(EmptySubset):
        evaluate(lambda b: b.labels, test, [0, 1, 2], 3, require_hm=True)
    with pytest.raises(EmptySubset):
        evaluate(lambda b: b.labels, Split.empty(1), [0], 3)


def test_evaluate_per_class_none_for_absent_class():
    rep = evaluate(lambda b: b.labels, labeled_test_split(), [0], 4)
    assert rep.per_class_accuracy[3] is None


class _Const:
    def __init__(self, labels):
        self.labels = np.asarray(labels)

    def predict_batch(self, batch, **kw):
        return self.labels


def test_ensemble_abstention_falls_back_to_first_model():
    batch = Split([0, 1], np.zeros((2, 1)))
    got = ensemble_predict([_Const([1, 0]), _Const([2, 2]), _Const([1, 1])], batch, 3)
    assert got.tolist() == [1, 0]


def dataset():
    return Dataset(
        Split([0, 1], np.zeros((2, 1)), [0, 1]),
        Split([2, 3, 4, 5], np.zeros((4, 1)), [1, 1, 0, 1]),
        Split([6], np.zeros((1, 1)), [0]),
        2,
    )


def test_pseudo_label_accuracy():
    view = oracle_view(dataset())
    assert pseudo_label_accuracy(PseudoLabeledSet({2: 1, 3: 1, 4: 1, 5: 1}), view) == 0.75
    assert pseudo_label_accuracy(PseudoLabeledSet({2: 1, 4: 0}), view) == 1.0
    assert pseudo_label_accuracy(PseudoLabeledSet({}), view) is None
    with pytest.raises(UnknownId):
        pseudo_label_accuracy(PseudoLabeledSet({99: 0}), view)


def test_oracle_view_covers_all_splits():
    view = oracle_view(dataset())
    assert len(view) == 7
    assert view.labels_of([6, 0, 4]).tolist() == [0, 0, 0]


def test_peer_accuracy_on_selected_samples():
    view = oracle_view(dataset())
    preds = np.array([[1, 1, 1, 0], [1, 0, 0, 0]])
    got = peer_accuracy_on(PseudoLabeledSet({2: 1, 4: 0}), preds, np.array([2, 3, 4, 5]), view)
    assert got == 0.75
    assert peer_accuracy_on(PseudoLabeledSet({}), preds, np.array([2, 3, 4, 5]), view) is None


def test_distribution_examples():
    s = distribution_stats([0, 0, 0, 1], 2)
    assert s.class_counts == (3, 1)
    assert s.entropy == pytest.approx(-(0.75 * math.log(0.75) + 0.25 * math.log(0.25)))
    assert round(s.entropy, 4) == 0.5623
    u = distribution_stats([0, 1, 2, 3], 4)
    assert u.entropy == pytest.approx(math.log(4)) and u.kl_to_uniform == pytest.approx(0.0)
    one = distribution_stats(PseudoLabeledSet({1: 2, 5: 2}), 3)
    assert one.entropy == 0.0 and one.max_share == 1.0
    empty = distribution_stats([], 3)
    assert empty.max_share is None and empty.entropy is None


@given(st.lists(st.integers(0, 4), min_size=1, max_size=40), st.permutations(range(5)))
def test_entropy_permutation_invariant(labels, perm):
    a = distribution_stats(labels, 5)
    b = distribution_stats([perm[x] for x in labels], 5)
    assert a.entropy == pytest.approx(b.entropy, abs=1e-12)
    assert sum(a.shares) == pytest.approx(1.0)
    assert 0 <= a.entropy <= math.log(5) + 1e-12


def record(round_, status, measured, prev, pl_acc):
    m = ModelRound(model=0, status=status, prev_error=prev, prev_count=0, measured_error=measured, pl_accuracy=pl_acc)
    return RoundRecord(round_, [m])


def test_ratio_track_halving():
    pairs = error_ratio_track([record(1, "updated", 0.25, 0.5, 0.75)], 0, alpha=1.0)
    assert len(pairs) == 1
    assert pairs[0].estimated == pytest.approx(0.5) and pairs[0].true == pytest.approx(0.5)


def test_ratio_track_skips_non_updates():
    history = [
        record(1, "updated", 0.25, 0.5, 0.75),
        record(2, "no_improvement", 0.3, 0.25, None),
        record(3, "updated", 0.125, 0.25, 0.875),
    ]
    pairs = error_ratio_track(history, 0, alpha=1.0)
    assert [p.round for p in pairs] == [1, 3]
    assert pairs[1].estimated == pytest.approx(0.125) and pairs[1].true == pytest.approx(0.5)


def test_ratio_track_constant_errors():
    pairs = error_ratio_track([record(1, "updated", 0.5, 0.5, 0.5)], 0)
    assert pairs[0].estimated == 1.0 and pairs[0].true == 1.0
