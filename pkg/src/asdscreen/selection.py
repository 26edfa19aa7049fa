"""Feature selection by forest importance, the bootstrapped tally variant,
and progressive-sampling learning curves."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import stratified_subsample
from .errors import ParameterError, ScreeningError, SelectionError
from .evaluation import (DEFAULT_AGE_GROUPS, CVConfig, Trainer, balance_weights,
                         bootstrapped_cv, forest_trainer, round_seeds)
from .learners import ForestParams, feature_importance, train_forest

log = logging.getLogger(__name__)


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def top_k(model, k: int) -> list[str]:
    return [name for name, _ in feature_importance(model)[:k]]


def naive_select(matrix, k: int, params: ForestParams = ForestParams()) -> list[str]:
    """Top ``k`` features by importance from a single forest fit."""
    if not 1 <= k <= matrix.n_features:
        raise ParameterError(f"k={k} must lie in 1..{matrix.n_features}")
    return top_k(train_forest(matrix, params), k)


@dataclass(frozen=True)
class SelectionConfig:
    n_bootstrap: int = 100
    sample_fraction: float = 0.9
    per_iteration_top_k: int = 20
    candidate_pool: int = 30
    final_k: int = 20
    seed: int = 0
    age_groups: tuple[int, ...] = DEFAULT_AGE_GROUPS

    def __post_init__(self):
        if self.n_bootstrap < 1:
            raise ParameterError("n_bootstrap must be >= 1")
        if not 0 < self.sample_fraction <= 1:
            raise ParameterError("sample_fraction must lie in (0, 1]")
        if not 1 <= self.final_k <= self.candidate_pool:
            raise ParameterError("final_k must lie in 1..candidate_pool")
        if self.per_iteration_top_k < 1:
            raise ParameterError("per_iteration_top_k must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["age_groups"] = list(self.age_groups)
        return d

    @classmethod
    def from_dict(cls, d) -> "SelectionConfig":
        d = dict(d)
        if "age_groups" in d:
            d["age_groups"] = tuple(d["age_groups"])
        return cls(**d)


@dataclass(frozen=True)
class SelectionReport:
    tally: dict
    candidates: tuple[str, ...]
    selected: tuple[str, ...]
    iterations: list = field(default_factory=list)
    redraws: int = 0

    def to_dict(self) -> dict:
        return {
            "tally": dict(sorted(self.tally.items(), key=lambda kv: (-kv[1], kv[0]))),
            "candidates": list(self.candidates),
            "selected": list(self.selected),
            "redraws": self.redraws,
            "iterations": self.iterations,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def robust_select(matrix, cfg: SelectionConfig = SelectionConfig(),
                  params: ForestParams = ForestParams()) -> SelectionReport:
    """Two-step bootstrapped selection.

    Step 1 fits one forest per iteration on a label-stratified, re-balanced
    subsample (without replacement) and tallies the features making that
    iteration's top-k list, ignoring rank. Step 2 keeps the
    ``candidate_pool`` most-tallied features and picks ``final_k`` of them
    with one more forest fit on the full matrix.

    Iteration ``i`` grows its forest with seed ``params.seed + i``.
    """
    k = cfg.per_iteration_top_k
    if k > matrix.n_features or cfg.candidate_pool > matrix.n_features:
        raise ParameterError("per-iteration top-k and candidate pool must not exceed the feature count")

    rng = np.random.default_rng(cfg.seed)
    tally = Counter({name: 0 for name in matrix.feature_names})
    iterations = []
    redraws = 0
    max_redraws = int(0.2 * cfg.n_bootstrap)
    for i in range(cfg.n_bootstrap):
        while True:
            rows = stratified_subsample(matrix.labels, cfg.sample_fraction, rng)
            sub = matrix.subset(rows)
            try:
                sub = sub.with_weights(balance_weights(sub, cfg.age_groups).weights)
                model = train_forest(sub, replace(params, seed=params.seed + i))
                break
            except ScreeningError as exc:
                redraws += 1
                log.warning("selection iteration %d: degenerate subsample (%s); redrawing", i, exc)
                if redraws > max_redraws:
                    raise SelectionError(f"{redraws} degenerate subsamples exceed 20% of "
                                         f"{cfg.n_bootstrap} iterations") from exc
        top = top_k(model, k)
        tally.update(top)
        iterations.append({"iteration": i, "n_samples": int(len(rows)), "top": top})

    ranked = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))
    candidates = tuple(name for name, _ in ranked[: cfg.candidate_pool])
    final = naive_select(matrix.select(candidates), cfg.final_k, params)
    return SelectionReport(
        tally={n: c for n, c in tally.items() if c > 0},
        candidates=candidates,
        selected=tuple(final),
        iterations=iterations,
        redraws=redraws,
    )


# ---------------------------------------------------------------------------
# progressive sampling

DEFAULT_FRACTIONS = (0.125, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    n_samples: int
    auc: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class ProgressiveCurve:
    points: tuple[CurvePoint, ...]
    skipped: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"points": [asdict(p) for p in self.points], "skipped": list(self.skipped)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fraction", "auc", "ci_low", "ci_high"])
            for p in self.points:
                w.writerow([repr(p.fraction), repr(p.auc), repr(p.ci_low), repr(p.ci_high)])

    def aucs(self) -> np.ndarray:
        return np.array([p.auc for p in self.points])


def progressive_sampling(matrix, fractions: Sequence[float] = DEFAULT_FRACTIONS,
                         cv: CVConfig = CVConfig(), trainer: Trainer | None = None,
                         seed: int = 0, age_groups=DEFAULT_AGE_GROUPS) -> ProgressiveCurve:
    """Bootstrapped-CV AUC on stratified subsamples of increasing size.

    Each fraction draws its own subsample (fraction 1 uses every row) and
    re-balances weights over it. Fractions too small to stratify into
    ``cv.n_folds`` folds are skipped with a warning.
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(not 0 < f <= 1 for f in fractions) or fractions != sorted(fractions):
        raise ParameterError("fractions must be ascending values in (0, 1]")
    trainer = trainer or forest_trainer()
    points, skipped = [], []
    for f, s in zip(fractions, round_seeds(seed, len(fractions))):
        rng = np.random.default_rng(s)
        rows = np.arange(matrix.n_samples) if f == 1.0 else stratified_subsample(matrix.labels, f, rng)
        sub = matrix.subset(rows)
        counts = np.bincount(sub.labels, minlength=2)
        if counts.min() < cv.n_folds:
            log.warning("fraction %.3f too small to stratify into %d folds; skipped", f, cv.n_folds)
            skipped.append(f)
            continue
        try:
            sub = sub.with_weights(balance_weights(sub, age_groups).weights)
        except ScreeningError as exc:
            log.warning("fraction %.3f cannot be weight-balanced (%s); skipped", f, exc)
            skipped.append(f)
            continue
        res = bootstrapped_cv(sub, cv, trainer).summary()["auc"]
        points.append(CurvePoint(f, int(len(rows)), res["mean"], res["ci_low"], res["ci_high"]))
    return ProgressiveCurve(tuple(points), tuple(skipped))
