import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiplex_bp.metrics import (
    local_constraint_score,
    majority_labels,
    normalized_agreement,
    score,
    wpp_majority_trial_check,
)
from multiplex_bp.model import Labeling, heterogeneous_structure, planted_clusters, structure_to_labeling

from oracles import chance_wpp_pass_rate, wpp_by_sets


def _lab(cols, q):
    return Labeling(np.column_stack(cols), q)


def test_perfect_and_permuted_agreement():
    truth = _lab([[1, 1, 2, 2, 3, 3]], 3)
    rep = normalized_agreement(truth, _lab([[2, 2, 3, 3, 1, 1]], 3))
    assert rep.agreement == 1.0 and rep.q_norm == 1.0
    # predicted label b reads as pi[b-1] + 1
    assert [rep.best_permutation[b - 1] + 1 for b in (2, 3, 1)] == [1, 2, 3]


def test_chance_level_maps_to_zero():
    truth = _lab([[1, 1, 2, 2]], 2)
    rep = normalized_agreement(truth, _lab([[1, 2, 1, 2]], 2))
    assert rep.agreement == 0.5 and rep.q_norm == 0.0
    # all one label: agreement equals the largest group, Q clamps at 0
    rep = normalized_agreement(_lab([[1, 1, 1, 2]], 2), _lab([[1, 1, 1, 1]], 2))
    assert rep.agreement == 0.75 and rep.q_norm == 0.0


def test_shared_permutation_across_layers():
    truth = _lab([[1, 1, 2, 2], [1, 1, 2, 2]], 2)
    # second layer flipped: one permutation cannot fit both
    pred = _lab([[1, 1, 2, 2], [2, 2, 1, 1]], 2)
    rep = normalized_agreement(truth, pred, per_layer=True)
    assert rep.agreement == 0.5 and rep.q_norm == 0.0
    assert rep.per_layer == (1.0, 1.0)


def test_explicit_n_and_empty_truth_copies():
    truth = Labeling(np.array([[1, 0], [1, 2], [2, 2]]), 2)
    pred = Labeling(np.array([[1, 1], [1, 2], [2, 2]]), 2)
    rep = normalized_agreement(truth, pred, n=[0.5, 0.5])
    assert rep.agreement == 1.0 and rep.q_norm == 1.0
    with pytest.raises(ValueError):
        normalized_agreement(truth, Labeling(np.array([[1, 1], [0, 2], [2, 2]]), 2))
    with pytest.raises(ValueError):
        normalized_agreement(truth, _lab([[1, 1, 2]], 2))


def test_q_above_search_bound_rejected():
    with pytest.raises(ValueError):
        normalized_agreement(_lab([[1, 9]], 9), _lab([[1, 9]], 9))


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 4), st.integers(2, 12), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_agreement_against_brute_force(q, N, L, seed):
    rng = np.random.default_rng(seed)
    t = rng.integers(1, q + 1, (N, L))
    p = rng.integers(1, q + 1, (N, L))
    rep = normalized_agreement(Labeling(t, q), Labeling(p, q))
    best = max(np.mean(np.array(pi)[p - 1] + 1 == t) for pi in itertools.permutations(range(q)))
    assert rep.agreement == pytest.approx(best)
    # invariant under relabelling the prediction
    perm = rng.permutation(q) + 1
    assert normalized_agreement(Labeling(t, q), Labeling(perm[p - 1], q)).agreement == pytest.approx(best)
    assert 0.0 <= rep.q_norm <= 1.0


def test_majority_and_ties():
    pred = _lab([[1, 1, 2, 2, 2]], 2)
    assert majority_labels(pred, [(0, {0, 1, 2}), (0, {3, 4})]) == [1, 2]
    assert majority_labels(pred, [(0, {1, 2})]) is None
    assert not wpp_majority_trial_check(pred, [(0, {1, 2})])


def _hetero_clusters(N=200):
    s = heterogeneous_structure(N)
    return s, planted_clusters(s)


def test_wpp_trial_check_on_planted_labels():
    s, clusters = _hetero_clusters()
    truth = structure_to_labeling(s)
    assert wpp_majority_trial_check(truth, clusters)
    # permuting all labels consistently keeps the structure
    perm = np.array([3, 4, 1, 2])
    assert wpp_majority_trial_check(Labeling(perm[truth.t - 1], 4), clusters)
    # merging the two layer-2 communities fails
    t = truth.t.copy()
    t[100:, 1] = 3
    assert not wpp_majority_trial_check(Labeling(t, 4), clusters)
    # reusing the shared label for a different set fails
    t = truth.t.copy()
    t[:100, 1] = 3
    t[100:150, 1] = 1
    assert not wpp_majority_trial_check(Labeling(t, 4), clusters)


def test_random_labels_hit_chance_rate():
    # exhaustive over distinct labels per layer: exactly 1/12 pass
    s, clusters = _hetero_clusters(8)
    passed = total = 0
    for l1 in itertools.permutations(range(1, 5), 2):
        for l2 in itertools.permutations(range(1, 5), 3):
            t = np.zeros((8, 2), dtype=int)
            for (l, nodes), a in zip(clusters, list(l1) + list(l2)):
                t[list(nodes), l] = a
            passed += wpp_majority_trial_check(Labeling(t, 4), clusters)
            total += 1
    assert total == math.perm(4, 2) * math.perm(4, 3)
    assert passed / total == pytest.approx(chance_wpp_pass_rate()) == pytest.approx(1 / 12)


def test_local_score_bounds_and_oracle():
    s, _ = _hetero_clusters(12)
    truth = structure_to_labeling(s)
    assert local_constraint_score(truth) == 12 * 11 // 2
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = rng.integers(1, 4, (6, 3))
        expected = sum(
            wpp_by_sets(t[[i, j]][:, [l, m]])
            for i, j in itertools.combinations(range(6), 2)
            for l, m in itertools.combinations(range(3), 2)
        )
        assert local_constraint_score(Labeling(t, 3)) == expected
    with pytest.raises(ValueError):
        local_constraint_score(Labeling(np.array([[1, 0], [1, 1]]), 2))


def test_score_bundle():
    s, clusters = _hetero_clusters(20)
    truth = structure_to_labeling(s)
    rep = score(truth, truth, planted_clusters=clusters, per_layer=True)
    assert rep.q_norm == 1.0 and rep.wpp_majority_pass
    assert rep.local_pass_count == 20 * 19 // 2
    assert rep.per_layer == (1.0, 1.0)
