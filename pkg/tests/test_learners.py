import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asdscreen.encoding import FeatureMatrix
from asdscreen.errors import ContractError, ParameterError, TrainingError
from asdscreen.evaluation import CVConfig, bootstrapped_cv, forest_trainer
from asdscreen.learners import (ForestModel, ForestParams, LogisticModel, feature_importance,
                                logistic_gradient, logistic_objective, predict_score, train_forest,
                                train_logistic)


def matrix(x, y, w=None, names=None):
    x = np.asarray(x)
    n, p = x.shape
    return FeatureMatrix(tuple(names or [f"f{j}" for j in range(p)]), x,
                         np.ones(n) if w is None else w, y, tuple(f"s{i}" for i in range(n)),
                         np.full(n, 30))


def random_matrix(n=200, p=6, seed=0, signal=True):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 3, size=(n, p))
    y = (x[:, 0] + rng.integers(0, 2, n) > 1).astype(int) if signal else rng.integers(0, 2, n)
    return matrix(x, y)


def single_tree(value):
    return ForestModel(("f0",), ForestParams(n_trees=1), np.array([0]), np.array([-1], np.int32),
                       np.zeros(1), np.array([-1], np.int32), np.array([-1], np.int32),
                       np.array([value]), np.ones(1), np.zeros(1))


# -- forest ---------------------------------------------------------------

def test_forced_stump_separates_and_owns_importance():
    rng = np.random.default_rng(0)
    sep = np.r_[np.zeros(50), np.ones(50)].astype(int)
    noise = rng.integers(0, 2, 100)
    m = matrix(np.column_stack([noise, sep]), sep)
    model = train_forest(m, ForestParams(n_trees=1, max_depth=1, max_features=1.0, bootstrap=False))
    pred = model.predict_score(m) >= 0.5
    assert np.array_equal(pred, sep == 1)
    assert feature_importance(model)[0] == ("f1", 1.0)


def test_noise_labels_give_chance_auc():
    m = random_matrix(n=600, p=10, seed=3, signal=False)
    res = bootstrapped_cv(m, CVConfig(n_folds=5, n_bootstrap_rounds=1, seed=1),
                          forest_trainer(ForestParams(n_trees=100)))
    assert abs(res.mean_auc - 0.5) <= 0.07


def test_duplicating_equals_doubling_weight():
    base = random_matrix(n=120, seed=4)
    rng = np.random.default_rng(5)
    k = rng.integers(1, 4, base.n_samples)
    rows = np.repeat(np.arange(base.n_samples), k)
    dup = base.subset(rows)
    heavy = base.with_weights(k.astype(float))
    probe = np.random.default_rng(6).integers(0, 3, size=(300, base.n_features))
    for seed in (0, 1):
        params = ForestParams(n_trees=25, seed=seed)
        a, b = train_forest(dup, params), train_forest(heavy, params)
        assert np.array_equal(a.predict_score(probe), b.predict_score(probe))
        assert np.array_equal(a.importances, b.importances)


def test_fixed_seed_is_deterministic():
    m = random_matrix(seed=7)
    a = train_forest(m, ForestParams(n_trees=20, seed=3))
    b = train_forest(m, ForestParams(n_trees=20, seed=3))
    c = train_forest(m, ForestParams(n_trees=20, seed=4))
    assert np.array_equal(a.threshold, b.threshold) and np.array_equal(a.value, b.value)
    assert not (len(a.value) == len(c.value) and np.array_equal(a.value, c.value))


def test_single_class_is_a_training_error():
    m = matrix(np.eye(4, dtype=int), [1, 1, 1, 1])
    with pytest.raises(TrainingError):
        train_forest(m)


def test_zero_weight_is_a_parameter_error():
    fake = SimpleNamespace(values=np.eye(4, dtype=int), labels=np.array([0, 1, 0, 1]),
                           weights=np.zeros(4), feature_names=("a", "b", "c", "d"))
    with pytest.raises(ParameterError):
        train_forest(fake)


def test_params_validation():
    with pytest.raises(ParameterError):
        ForestParams(n_trees=0)
    with pytest.raises(ParameterError):
        ForestParams(min_samples_leaf=0)
    with pytest.raises(ParameterError):
        ForestParams(max_features="log2")


def test_all_positive_leaf_scores_one():
    assert single_tree(1.0).predict_score(np.array([0])) == 1.0


def test_leaf_distribution_is_the_score():
    assert single_tree(0.25).predict_score(np.array([[0], [5]])).tolist() == [0.25, 0.25]


def test_tree_order_does_not_matter():
    m = random_matrix(seed=8)
    model = train_forest(m, ForestParams(n_trees=15, seed=2))
    d = model.to_dict()
    d["trees"] = d["trees"][::-1]
    flipped = ForestModel.from_dict(d)
    np.testing.assert_allclose(flipped.predict_score(m), model.predict_score(m), rtol=0, atol=1e-12)


def test_dimension_mismatch_is_a_contract_error():
    model = train_forest(random_matrix(), ForestParams(n_trees=3))
    with pytest.raises(ContractError):
        predict_score(model, np.zeros(3))
    with pytest.raises(ContractError):
        model.predict_score(matrix(np.zeros((2, 6), int), [0, 1], names=list("abcdef")))


def test_json_round_trip_is_exact():
    m = random_matrix(seed=9)
    model = train_forest(m, ForestParams(n_trees=10))
    back = ForestModel.from_dict(json.loads(json.dumps(model.to_dict())))
    assert np.array_equal(back.predict_score(m), model.predict_score(m))
    assert back.to_dict() == model.to_dict()


def test_leaves_are_valid_distributions_and_splits_valid():
    m = random_matrix(seed=10)
    model = train_forest(m, ForestParams(n_trees=10))
    leaf = model.feature < 0
    assert np.all((model.value[leaf] >= 0) & (model.value[leaf] <= 1))
    assert np.all(model.feature[~leaf] < m.n_features)


def test_importance_ranking():
    m = random_matrix(seed=11)
    model = train_forest(m, ForestParams(n_trees=50))
    ranked = feature_importance(model)
    values = [v for _, v in ranked]
    assert abs(sum(values) - 1) < 1e-12 and values == sorted(values, reverse=True)
    assert ranked[0][0] == "f0"
    assert all(v >= 0 for v in values)


def test_importance_ties_break_by_name():
    model = single_tree(0.5)
    d = model.to_dict()
    d["feature_names"] = ["b"]
    model = ForestModel.from_dict(d)
    object.__setattr__(model, "feature_names", ("b", "a"))
    object.__setattr__(model, "importances", np.array([0.5, 0.5]))
    assert [n for n, _ in feature_importance(model)] == ["a", "b"]


def test_min_leaf_weight_is_respected():
    m = random_matrix(n=300, seed=12)
    model = train_forest(m, ForestParams(n_trees=5, min_samples_leaf=0.1, bootstrap=False))
    leaf = model.feature < 0
    assert model.node_weight[leaf].min() >= 0.1 * m.weights.sum() - 1e-9


@given(seed=st.integers(0, 2**31), reps=st.lists(st.integers(1, 3), min_size=30, max_size=30))
def test_integer_weights_equal_duplication(seed, reps):
    base = random_matrix(n=30, p=4, seed=seed % 1000)
    k = np.array(reps)
    a = train_forest(base.subset(np.repeat(np.arange(30), k)), ForestParams(n_trees=5, seed=seed))
    b = train_forest(base.with_weights(k.astype(float)), ForestParams(n_trees=5, seed=seed))
    probe = np.random.default_rng(seed).integers(0, 3, size=(50, 4))
    assert np.array_equal(a.predict_score(probe), b.predict_score(probe))


# -- logistic ---------------------------------------------------------------

def _logit_data(seed=0, n=200):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = (rng.random(n) < 1 / (1 + np.exp(-(0.5 + 2 * x[:, 0] - x[:, 1])))).astype(float)
    w = rng.uniform(0.5, 2, n)
    return x, y, w


@pytest.mark.parametrize("seed", range(5))
def test_logistic_gradient_matches_finite_differences(seed):
    x, y, w = _logit_data(seed)
    beta = np.random.default_rng(seed + 100).normal(size=3)
    g = logistic_gradient(beta, x, y, w, 0.01)
    h = 1e-5
    fd = np.array([(logistic_objective(beta + h * e, x, y, w, 0.01)
                    - logistic_objective(beta - h * e, x, y, w, 0.01)) / (2 * h) for e in np.eye(3)])
    assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)) <= 1e-6


def test_logistic_fit_reaches_stationarity():
    x, y, w = _logit_data(1, n=2000)
    model = train_logistic(x, y, w, input_names=("a", "b"))
    assert model.meta["grad_max_norm"] <= 1e-6
    assert model.coefficients[0] > 1 and model.coefficients[1] < 0
    assert model.input_names == ("a", "b")


def test_logistic_separable_stays_finite():
    x = np.r_[np.zeros(10), np.ones(10)][:, None]
    y = np.r_[np.zeros(10), np.ones(10)]
    model = train_logistic(x, y)
    assert np.all(np.isfinite(model.coefficients)) and model.predict([[1.0]])[0] > 0.99


def test_logistic_round_trip_and_contract():
    x, y, w = _logit_data(2)
    model = train_logistic(x, y, w)
    back = LogisticModel.from_dict(json.loads(json.dumps(model.to_dict())))
    assert np.array_equal(back.predict(x), model.predict(x))
    with pytest.raises(ContractError):
        model.predict(np.zeros((2, 3)))
    with pytest.raises(TrainingError):
        train_logistic(x, np.ones(len(y)))


def test_logistic_weights_act_like_duplication():
    x, y, _ = _logit_data(3, n=60)
    k = np.random.default_rng(0).integers(1, 4, 60)
    a = train_logistic(np.repeat(x, k, axis=0), np.repeat(y, k))
    b = train_logistic(x, y, k.astype(float))
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-6)
