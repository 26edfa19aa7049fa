import numpy as np
import pytest

from asdscreen.encoding import question_of
from asdscreen.errors import ParameterError
from asdscreen.evaluation import CVConfig, forest_trainer
from asdscreen.learners import ForestParams
from asdscreen.selection import (SelectionConfig, jaccard, naive_select, progressive_sampling,
                                 robust_select)

from conftest import FAST_FOREST

FAST_SEL = SelectionConfig(n_bootstrap=8, per_iteration_top_k=8, candidate_pool=12, final_k=6)


def test_jaccard():
    assert jaccard({"a", "b"}, {"b", "c"}) == 1 / 3
    assert jaccard([], []) == 1.0


def test_naive_select_finds_planted_questions(small_data, small_matrix):
    picked = naive_select(small_matrix, 4, FAST_FOREST)
    assert {question_of(f) for f in picked} <= set(small_data.ground_truth.informative)


def test_naive_select_k_bounds(small_matrix):
    with pytest.raises(ParameterError):
        naive_select(small_matrix, 0)
    with pytest.raises(ParameterError):
        naive_select(small_matrix, small_matrix.n_features + 1)


def test_robust_select_report(small_data, small_matrix):
    rep = robust_select(small_matrix, FAST_SEL, FAST_FOREST)
    assert len(rep.selected) == 6 and len(rep.candidates) == 12
    assert set(rep.selected) <= set(rep.candidates)
    assert sum(rep.tally.values()) == 8 * 8 and len(rep.iterations) == 8
    assert max(rep.tally.values()) <= 8
    # candidates are the most-tallied features
    counts = [rep.tally.get(c, 0) for c in rep.candidates]
    assert min(counts) >= max([v for k, v in rep.tally.items() if k not in rep.candidates] or [0])
    planted = set(small_data.ground_truth.informative)
    assert sum(question_of(f) in planted for f in rep.selected) >= 4
    d = rep.to_dict()
    assert list(d["tally"].values()) == sorted(d["tally"].values(), reverse=True)


def test_robust_select_is_deterministic(small_matrix):
    a = robust_select(small_matrix, FAST_SEL, FAST_FOREST)
    b = robust_select(small_matrix, FAST_SEL, FAST_FOREST)
    assert a.to_dict() == b.to_dict()


def test_robust_select_iteration_subsamples(small_matrix):
    rep = robust_select(small_matrix, FAST_SEL, FAST_FOREST)
    expected = sum(round(0.9 * np.sum(small_matrix.labels == c)) for c in (0, 1))
    assert all(it["n_samples"] == expected for it in rep.iterations)


def test_selection_config_validation(small_matrix):
    with pytest.raises(ParameterError):
        SelectionConfig(final_k=40, candidate_pool=30)
    with pytest.raises(ParameterError):
        SelectionConfig(sample_fraction=0)
    with pytest.raises(ParameterError):
        robust_select(small_matrix, SelectionConfig(candidate_pool=10_000, final_k=5))
    cfg = SelectionConfig(seed=3, age_groups=(36, 60))
    assert SelectionConfig.from_dict(cfg.to_dict()) == cfg


def test_progressive_curve(small_matrix):
    curve = progressive_sampling(small_matrix, (0.01, 0.5, 1.0), CVConfig(3, 2),
                                 forest_trainer(ForestParams(n_trees=20)))
    assert curve.skipped == (0.01,)
    assert [p.fraction for p in curve.points] == [0.5, 1.0]
    assert curve.points[-1].n_samples == small_matrix.n_samples
    assert all(p.ci_low <= p.auc <= p.ci_high for p in curve.points)


def test_progressive_fraction_validation(small_matrix):
    with pytest.raises(ParameterError):
        progressive_sampling(small_matrix, (0.5, 0.25))
    with pytest.raises(ParameterError):
        progressive_sampling(small_matrix, (0.0, 1.0))
