import numpy as np
import pytest
from hypothesis import given, strategies as st

from asdscreen.dataset import (Dataset, ScoreSheet, SyntheticSpec, generate_synthetic, load_csv,
                               split_holdout, write_csv)
from asdscreen.encoding import EncodingSpec
from asdscreen.errors import (ParameterError, SchemaError, StratificationError, ValidationError)

from conftest import stump_cv_auc

ADIR = EncodingSpec.for_instrument("adir_like")


def _write(path, rows, header="subject_id,age_months,gender,label,q_1,q_2"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


def test_generate_is_deterministic(tmp_path):
    a = generate_synthetic(SyntheticSpec(seed=7, n_samples=200))
    b = generate_synthetic(SyntheticSpec(seed=7, n_samples=200))
    assert a == b
    write_csv(a, tmp_path / "a.csv")
    write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.ground_truth == b.ground_truth


def test_generate_other_seed_differs():
    a = generate_synthetic(SyntheticSpec(seed=1, n_samples=100))
    b = generate_synthetic(SyntheticSpec(seed=2, n_samples=100))
    assert not np.array_equal(a.answers, b.answers)


@pytest.mark.parametrize("n", [1000, 1500])
@pytest.mark.parametrize("frac", [0.3, 0.5, 0.71])
def test_label_balance(n, frac):
    d = generate_synthetic(SyntheticSpec(n_samples=n, positive_fraction=frac, n_questions=5,
                                         n_informative=1))
    assert abs(d.labels.mean() - frac) <= 0.02


def test_single_planted_question_is_recoverable_by_a_stump():
    d = generate_synthetic(SyntheticSpec(n_informative=1, n_samples=4000, n_questions=30, seed=3))
    aucs = [stump_cv_auc(d.answers[:, j], d.labels) for j in range(len(d.question_ids))]
    best = int(np.argmax(aucs))
    assert d.question_ids[best] == d.ground_truth.informative[0]
    assert aucs[best] > 0.95


def test_no_planted_question_means_chance_stumps():
    d = generate_synthetic(SyntheticSpec(n_informative=0, n_samples=2000, n_questions=30, seed=4))
    aucs = [stump_cv_auc(d.answers[:, j], d.labels) for j in range(len(d.question_ids))]
    assert all(abs(a - 0.5) <= 0.05 for a in aucs)


def _mutual_information(x, y):
    mi = 0.0
    for a in np.unique(x):
        for b in (0, 1):
            pxy = np.mean((x == a) & (y == b))
            if pxy > 0:
                mi += pxy * np.log(pxy / (np.mean(x == a) * np.mean(y == b)))
    return mi


def test_planted_questions_carry_the_most_information():
    d = generate_synthetic(SyntheticSpec(n_questions=60, n_informative=6, n_samples=2000, seed=8))
    mi = {q: _mutual_information(d.answers[:, j], d.labels) for j, q in enumerate(d.question_ids)}
    planted = set(d.ground_truth.informative)
    assert min(mi[q] for q in planted) > max(mi[q] for q in mi if q not in planted)


def test_age_specific_questions_are_disjoint_and_planted():
    d = generate_synthetic(SyntheticSpec(n_informative=10, age_signal_shift=0.6, seed=2, n_samples=50))
    gt = d.ground_truth
    assert len(gt.young_only) == 3 and len(gt.old_only) == 3
    assert not set(gt.young_only) & set(gt.old_only)
    assert set(gt.young_only) | set(gt.old_only) <= set(gt.informative)
    assert len(gt.shared) == 4


def test_age_specific_signal_is_confined_to_its_group():
    d = generate_synthetic(SyntheticSpec(n_questions=20, n_informative=8, age_signal_shift=1.0,
                                         n_samples=4000, seed=6))
    young = d.age_months < 48
    j = d.question_ids.index(d.ground_truth.young_only[0])
    in_group = stump_cv_auc(d.answers[young, j], d.labels[young])
    out_group = stump_cv_auc(d.answers[~young, j], d.labels[~young])
    assert in_group > 0.9
    assert abs(out_group - 0.5) < 0.06


def test_paired_instrument_reuses_subjects():
    q = generate_synthetic(SyntheticSpec(n_samples=50, seed=1))
    v = generate_synthetic(SyntheticSpec(n_samples=50, n_questions=30, n_informative=5, seed=2,
                                         instrument="ados_module1_like"), subjects=q)
    assert v.subject_ids == q.subject_ids
    assert np.array_equal(v.labels, q.labels) and np.array_equal(v.age_months, q.age_months)
    assert v.instrument == "ados_module1_like"


@pytest.mark.parametrize("kw", [
    dict(n_informative=200), dict(positive_fraction=0.0), dict(positive_fraction=1.0),
    dict(noise_rate=1.0), dict(age_signal_shift=-0.1), dict(n_samples=1), dict(instrument="mchat"),
])
def test_synthetic_spec_rejects_bad_fields(kw):
    with pytest.raises(ParameterError):
        SyntheticSpec(**kw)


def test_generated_codes_are_declared():
    d = generate_synthetic(SyntheticSpec(n_samples=300, seed=3))
    for j, q in enumerate(d.question_ids):
        assert set(np.unique(d.answers[:, j])) <= set(ADIR[q].codes)
    assert d.age_months.min() >= 18 and d.age_months.max() <= 84


# -- CSV ------------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    d = generate_synthetic(SyntheticSpec(n_samples=40, n_questions=12, n_informative=3, seed=1))
    write_csv(d, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", "adir_like", ADIR, provenance=d.provenance)
    assert back == d


def test_load_ten_rows(tmp_path):
    rows = [f"S{i},{20 + i},male,{'positive' if i % 2 else 'negative'},0,3" for i in range(10)]
    d = load_csv(_write(tmp_path / "x.csv", rows), "adir_like", ADIR)
    assert len(d) == 10 and len(d.sheets) == 10
    assert d.sheets[1].label == "positive" and d.sheets[1].answers == {"1": 0, "2": 3}


def test_age_out_of_range_is_reported(tmp_path):
    rows = ["A,30,male,positive,0,1", "B,12,female,negative,0,1"]
    with pytest.raises(ValidationError) as err:
        load_csv(_write(tmp_path / "x.csv", rows), "adir_like", ADIR)
    issues = err.value.issues
    assert len(issues) == 1 and issues[0]["row"] == 3 and issues[0]["field"] == "age_months"


def test_undeclared_code_names_row_question_and_code(tmp_path):
    rows = ["A,30,male,positive,0,5"]
    with pytest.raises(ValidationError) as err:
        load_csv(_write(tmp_path / "x.csv", rows), "adir_like", ADIR)
    (issue,) = err.value.issues
    assert issue["row"] == 2 and issue["field"] == "q_2" and issue["value"] == 5
    assert "5" in issue["message"] and "question 2" in issue["message"]


def test_every_bad_row_is_collected(tmp_path):
    rows = ["A,30,male,positive,0,5", "B,90,male,maybe,0,1", "A,40,robot,negative,x,1"]
    with pytest.raises(ValidationError) as err:
        load_csv(_write(tmp_path / "x.csv", rows), "adir_like", ADIR)
    fields = sorted((i["row"], i["field"]) for i in err.value.issues)
    assert fields == [(2, "q_2"), (3, "age_months"), (3, "label"), (4, "gender"), (4, "q_1"),
                      (4, "subject_id")]


def test_missing_column_is_a_schema_error(tmp_path):
    path = _write(tmp_path / "x.csv", ["A,30,positive,0,1"], header="subject_id,age_months,label,q_1,q_2")
    with pytest.raises(SchemaError, match="gender"):
        load_csv(path, "adir_like", ADIR)


def test_unknown_question_is_a_schema_error(tmp_path):
    path = _write(tmp_path / "x.csv", ["A,30,male,positive,0,1"],
                  header="subject_id,age_months,gender,label,q_1,q_999")
    with pytest.raises(SchemaError):
        load_csv(path, "adir_like", ADIR)


def test_sheets_round_trip():
    d = generate_synthetic(SyntheticSpec(n_samples=20, n_questions=5, n_informative=1))
    assert Dataset.from_sheets(d.sheets, d.instrument, d.provenance) == d


def test_duplicate_subject_ids_rejected():
    sheet = ScoreSheet("A", 30, "male", {"1": 0}, "positive")
    with pytest.raises(ParameterError):
        Dataset.from_sheets([sheet, sheet], "adir_like")


# -- holdout --------------------------------------------------------------

def _balanced(npos, nneg):
    return generate_synthetic(SyntheticSpec(n_samples=npos + nneg, positive_fraction=npos / (npos + nneg),
                                            n_questions=3, n_informative=1))


def test_holdout_exact_stratification():
    train, hold = split_holdout(_balanced(50, 50), 0.2, seed=0)
    assert (hold.labels == 1).sum() == 10 and (hold.labels == 0).sum() == 10
    assert len(train) == 80


def test_holdout_tiny():
    train, hold = split_holdout(_balanced(2, 2), 0.5, seed=0)
    for part in (train, hold):
        assert sorted(part.labels.tolist()) == [0, 1]


def test_holdout_deterministic():
    d = _balanced(30, 20)
    a, b = split_holdout(d, 0.3, 4), split_holdout(d, 0.3, 4)
    assert a[1].subject_ids == b[1].subject_ids


def test_holdout_needs_two_per_class():
    d = _balanced(1, 9)
    with pytest.raises(StratificationError):
        split_holdout(d, 0.5, 0)


@given(n=st.integers(4, 60), frac=st.floats(0.05, 0.95), seed=st.integers(0, 2**32 - 1),
       pos=st.floats(0.2, 0.8))
def test_holdout_partition_property(n, frac, seed, pos):
    d = generate_synthetic(SyntheticSpec(n_samples=n, positive_fraction=pos, n_questions=2,
                                         n_informative=0, seed=1))
    if min(np.bincount(d.labels, minlength=2)) < 2:
        return
    train, hold = split_holdout(d, frac, seed)
    assert not set(train.subject_ids) & set(hold.subject_ids)
    assert sorted(train.subject_ids + hold.subject_ids) == sorted(d.subject_ids)
    for c in (0, 1):
        assert (train.labels == c).sum() >= 1 and (hold.labels == c).sum() >= 1
