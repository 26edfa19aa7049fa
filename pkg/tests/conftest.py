import numpy as np
import pytest
from hypothesis import settings

from asdscreen.dataset import SyntheticSpec, generate_synthetic
from asdscreen.evaluation import CVConfig
from asdscreen.learners import ForestParams

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

FAST_FOREST = ForestParams(n_trees=30)
FAST_CV = CVConfig(n_folds=3, n_bootstrap_rounds=2)


@pytest.fixture(scope="session")
def small_data():
    return generate_synthetic(SyntheticSpec(n_questions=20, n_informative=4, n_samples=300,
                                            noise_rate=0.3, seed=5))


@pytest.fixture(scope="session")
def shifted_data():
    return generate_synthetic(SyntheticSpec(n_questions=30, n_informative=8, n_samples=400,
                                            noise_rate=0.4, age_signal_shift=0.5, seed=9))


def stump_cv_auc(codes, labels, n_folds=5, seed=0):
    """Out-of-fold AUC of a per-code positive-rate lookup (one-question stump)."""
    from asdscreen.evaluation import auc_score, stratified_folds

    folds = stratified_folds(labels, n_folds, seed=seed)
    oof = np.empty(len(labels))
    for k in range(n_folds):
        train, test = folds != k, folds == k
        prior = labels[train].mean()
        rate = {}
        for c in np.unique(codes[train]):
            m = train & (codes == c)
            rate[c] = labels[m].mean()
        oof[test] = [rate.get(c, prior) for c in codes[test]]
    return auc_score(oof, labels)


@pytest.fixture(scope="session")
def small_matrix(small_data):
    from asdscreen import EncodingSpec, balance_weights, encode

    m = encode(small_data, EncodingSpec.for_instrument(small_data.instrument).subset(small_data.question_ids),
               "one_hot")
    return m.with_weights(balance_weights(m).weights)


def run_cli(*args):
    """Run the command-line entry point in-process; returns the exit status."""
    from asdscreen.cli import main

    return main([str(a) for a in args])


def dir_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


SMALL_PIPELINE = ("--n-trees", 15, "--n-folds", 3, "--rounds", 2, "--n-bootstrap", 4,
                  "--final-k", 8, "--candidate-pool", 12)


COMMAND_RUNS = ["generate", "generate_video", "validate", "select", "train", "calibrate", "evaluate",
                "evaluate_artifact", "progressive", "combine", "screen"]


def build_chain(root):
    """Run every command once on small inputs; returns {name: (argv, out_dir)}."""
    import csv
    import json

    runs = {}

    def run(name, *args):
        out = root / name
        argv = (args[0], "--out", out) + args[1:]
        assert run_cli(*argv) == 0, name
        runs[name] = (argv, out)
        return out

    q = run("generate", "generate", "--seed", 3, "--n-questions", 25, "--n-informative", 5,
            "--n-samples", 300, "--noise-rate", 0.4, "--age-signal-shift", 0.5)
    v = run("generate_video", "generate", "--seed", 4, "--n-questions", 12, "--n-informative", 4,
            "--noise-rate", 0.4, "--instrument", "ados_module1_like", "--subjects", q / "data.csv")
    data = q / "data.csv"
    run("validate", "validate", "--data", data)
    run("select", "select", "--data", data, "--encoding", "one_hot", *SMALL_PIPELINE)
    t = run("train", "train", "--data", data, "--variant", "inconclusive", *SMALL_PIPELINE)
    run("calibrate", "calibrate", "--scores", t / "oof_young.csv", "--artifact", t / "screener_young.json",
        "--max-inconclusive-rate", 0.3)
    run("evaluate", "evaluate", "--scores", t / "oof_old.csv", "--target-sensitivity", 0.8)
    run("evaluate_artifact", "evaluate", "--artifact", t / "screener_old.json", "--data", data)
    run("progressive", "progressive", "--data", data, "--fractions", 0.5, 1.0, *SMALL_PIPELINE)
    c = run("combine", "combine", "--data", data, "--video", v / "data.csv", "--variant", "severity",
            *SMALL_PIPELINE)

    with open(data, newline="") as fh:
        row = next(r for r in csv.DictReader(fh) if int(r["age_months"]) < 48)
    with open(v / "data.csv", newline="") as fh:
        vrow = next(r for r in csv.DictReader(fh) if r["subject_id"] == row["subject_id"])
    resp = {"age_months": int(row["age_months"]), "gender": row["gender"],
            "questionnaire": {k[2:]: int(x) for k, x in row.items() if k.startswith("q_")},
            "video": {k[2:]: int(x) for k, x in vrow.items() if k.startswith("q_")}}
    (root / "responses.json").write_text(json.dumps(resp))
    run("screen", "screen", "--screener", c / "combined.json", "--responses", root / "responses.json")
    runs["_root"] = root
    return runs


def rerun(argv, out, again, threads):
    """Repeat a recorded command into ``again`` with a thread count; returns its files."""
    argv = [again if a == out else a for a in argv] + ["--threads", threads]
    assert run_cli(*argv) == 0
    return dir_bytes(again)
