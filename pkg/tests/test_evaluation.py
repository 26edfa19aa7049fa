import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asdscreen.errors import (ParameterError, StratificationError, TuningError, UndefinedAUCError,
                              WeightingError)
from asdscreen.evaluation import (CVConfig, balance_weights, binary_metrics, bootstrapped_cv,
                                  forest_trainer, grid_search, roc, stratified_folds, tune_threshold)
from asdscreen.learners import ForestParams

from conftest import FAST_CV


def concordance(s, y, w):
    """Brute-force weighted pair concordance, ties counted half."""
    num = den = 0.0
    for i, j in itertools.product(np.flatnonzero(y == 1), np.flatnonzero(y == 0)):
        pw = w[i] * w[j]
        num += pw * (1.0 if s[i] > s[j] else 0.5 if s[i] == s[j] else 0.0)
        den += pw
    return num / den


def sweep(s, y, w, target):
    """Exhaustive sweep: largest candidate threshold with sensitivity >= target."""
    best = None
    for t in np.r_[np.unique(s), np.inf]:
        sens = w[(s >= t) & (y == 1)].sum() / w[y == 1].sum()
        if sens >= target - 1e-12:
            best = t
    return best


# -- weighting --------------------------------------------------------------

def test_balance_weights_two_cells():
    data = SimpleNamespace(age_months=np.full(4, 30), labels=np.array([1, 1, 1, 0]))
    w = balance_weights(data).weights
    np.testing.assert_allclose(w, [2 / 3, 2 / 3, 2 / 3, 2.0])


def test_balance_weights_four_cells():
    ages = np.r_[np.full(10, 30), np.full(20, 30), np.full(30, 60), np.full(40, 60)]
    labels = np.r_[np.ones(10), np.zeros(20), np.ones(30), np.zeros(40)].astype(int)
    scheme = balance_weights(SimpleNamespace(age_months=ages, labels=labels))
    assert all(abs(v - 25) < 1e-12 for v in scheme.cell_totals().values())
    assert abs(scheme.weights.sum() - 100) < 1e-9


def test_balance_weights_empty_cell():
    with pytest.raises(WeightingError):
        balance_weights(SimpleNamespace(age_months=np.array([30, 60, 60]), labels=np.array([1, 1, 0])))


@given(st.lists(st.tuples(st.integers(1, 100), st.integers(0, 1)), min_size=4, max_size=60))
def test_balanced_cells_are_equal(rows):
    ages, labels = map(np.array, zip(*rows))
    data = SimpleNamespace(age_months=ages, labels=labels)
    try:
        scheme = balance_weights(data)
    except WeightingError:
        return
    totals = list(scheme.cell_totals().values())
    np.testing.assert_allclose(totals, totals[0])
    assert abs(scheme.weights.sum() - len(rows)) < 1e-9


# -- folds ------------------------------------------------------------------

def test_folds_split_classes_evenly():
    labels = np.r_[np.ones(6), np.zeros(4)].astype(int)
    folds = stratified_folds(labels, 2, seed=0)
    for k in (0, 1):
        assert labels[folds == k].sum() == 3 and (labels[folds == k] == 0).sum() == 2


def test_folds_need_enough_members():
    with pytest.raises(StratificationError):
        stratified_folds(np.array([1, 1, 1, 0, 0]), 3)
    with pytest.raises(StratificationError):
        stratified_folds(np.ones(5), 2)


@given(st.integers(2, 6), st.integers(0, 40), st.integers(0, 40), st.integers(0, 1000))
def test_fold_sizes_differ_by_at_most_one(k, pos, neg, seed):
    labels = np.r_[np.ones(pos + k), np.zeros(neg + k)].astype(int)
    folds = stratified_folds(labels, k, seed=seed)
    for c in (0, 1):
        counts = np.bincount(folds[labels == c], minlength=k)
        assert counts.max() - counts.min() <= 1
    sizes = np.bincount(folds, minlength=k)
    assert sizes.max() - sizes.min() <= 1


# -- ROC ------------------------------------------------------------------

def test_four_sample_auc():
    assert roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]).auc == 0.75


def test_roc_needs_both_classes():
    with pytest.raises(UndefinedAUCError):
        roc([0.1, 0.2], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1), st.integers(1, 5)), min_size=2, max_size=40))
def test_auc_equals_pair_concordance(rows):
    s, y, w = (np.array(c, dtype=float) for c in zip(*rows))
    y = y.astype(int)
    if len(set(y)) < 2:
        return
    s = s / 7
    assert abs(roc(s, y, w).auc - concordance(s, y, w)) <= 1e-9


@given(st.integers(0, 10_000))
def test_auc_invariant_to_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    s = rng.random(50)
    y = np.r_[np.ones(25), np.zeros(25)].astype(int)
    w = rng.uniform(0.1, 3, 50)
    assert abs(roc(s, y, w).auc - roc(np.exp(3 * s) - 2, y, w).auc) <= 1e-12


@given(st.integers(0, 10_000))
def test_integer_weights_equal_duplication(seed):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 10, 30) / 10
    y = np.r_[np.ones(15), np.zeros(15)].astype(int)
    k = rng.integers(1, 4, 30)
    a = roc(s, y, k.astype(float))
    b = roc(np.repeat(s, k), np.repeat(y, k))
    assert abs(a.auc - b.auc) <= 1e-12
    np.testing.assert_allclose(a.sensitivity, b.sensitivity, atol=1e-12)


def test_roc_endpoints():
    curve = roc([0.2, 0.4, 0.6], [0, 1, 1])
    assert curve.sensitivity[0] == 1 and curve.sensitivity[-1] == 0 and curve.thresholds[-1] == np.inf
    assert np.all(np.diff(curve.sensitivity) <= 0) and np.all(np.diff(curve.specificity) >= 0)


# -- threshold tuning -------------------------------------------------------

@given(st.integers(0, 10_000), st.sampled_from([0.5, 0.7, 0.8, 0.9, 1.0]))
def test_tune_threshold_matches_exhaustive_sweep(seed, target):
    rng = np.random.default_rng(seed)
    s = np.round(rng.random(40), 2)
    y = rng.integers(0, 2, 40)
    y[:2] = [0, 1]
    w = rng.uniform(0.2, 2, 40)
    choice = tune_threshold(roc(s, y, w), target)
    assert choice.threshold == sweep(s, y, w, target)
    assert choice.sensitivity >= target - 1e-12
    assert choice.sensitivity == pytest.approx(binary_metrics(s, y, w, choice.threshold)["sensitivity"])


def test_tune_threshold_errors():
    curve = roc([0.1, 0.9], [0, 1])
    with pytest.raises(ParameterError):
        tune_threshold(curve, 0)
    assert tune_threshold(curve, 1.0).threshold == 0.9
    empty = type(curve)(np.array([np.inf]), np.array([0.0]), np.array([1.0]), 0.5)
    with pytest.raises(TuningError):
        tune_threshold(empty, 0.5)


# -- cross-validation -------------------------------------------------------

def test_cv_shapes_and_determinism(small_matrix):
    cfg = CVConfig(n_folds=3, n_bootstrap_rounds=3, seed=4)
    trainer = forest_trainer(ForestParams(n_trees=10))
    a = bootstrapped_cv(small_matrix, cfg, trainer)
    b = bootstrapped_cv(small_matrix, cfg, trainer)
    assert a.oof_scores.shape == (3, small_matrix.n_samples)
    assert np.array_equal(a.oof_scores, b.oof_scores)
    assert not np.isnan(a.oof_scores).any()
    s = a.summary()
    assert s["rounds"] == 3 and s["auc"]["ci_low"] <= s["auc"]["mean"] <= s["auc"]["ci_high"]
    assert a.mean_auc > 0.7


def test_cv_rounds_use_different_folds(small_matrix):
    res = bootstrapped_cv(small_matrix, CVConfig(3, 2), forest_trainer(ForestParams(n_trees=5)))
    assert not np.array_equal(res.oof_scores[0], res.oof_scores[1])


def test_cv_config_validation():
    with pytest.raises(ParameterError):
        CVConfig(n_folds=1)
    with pytest.raises(ParameterError):
        CVConfig(n_bootstrap_rounds=0)


# -- grid search ------------------------------------------------------------

def test_singleton_grid(small_matrix):
    res = grid_search(small_matrix, {"n_trees": [10]}, FAST_CV)
    assert res.best.n_trees == 10 and len(res.leaderboard) == 1


def test_grid_avoids_degenerate_point(small_matrix):
    grid = {"n_trees": [10], "min_samples_leaf": [0.6, 0.01]}
    res = grid_search(small_matrix, grid, FAST_CV)
    assert res.best.min_samples_leaf == 0.01
    assert len(res.leaderboard) == 2
    aucs = [e["auc"]["mean"] for e in res.leaderboard]
    assert aucs == sorted(aucs, reverse=True) and abs(aucs[-1] - 0.5) < 0.02


def test_empty_grid():
    with pytest.raises(ParameterError):
        grid_search(None, [], FAST_CV)
