"""Sample weighting, stratified and bootstrapped cross-validation, grid search,
ROC analysis and sensitivity-anchored threshold tuning."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (EvaluationError, ParameterError, ScreeningError, StratificationError,
                     TuningError, UndefinedAUCError, WeightingError)
from .learners import ForestParams, train_forest

log = logging.getLogger(__name__)

DEFAULT_AGE_GROUPS = (48,)


# ---------------------------------------------------------------------------
# weighting

@dataclass(frozen=True, eq=False)
class WeightScheme:
    age_group: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def cell_totals(self) -> dict[tuple[int, int], float]:
        out = {}
        for g, y in sorted(set(zip(self.age_group.tolist(), self.labels.tolist()))):
            mask = (self.age_group == g) & (self.labels == y)
            out[(g, y)] = float(self.weights[mask].sum())
        return out


def age_group_of(ages, boundaries: Sequence[int] = DEFAULT_AGE_GROUPS) -> np.ndarray:
    """Index of the age group for each age; group k holds ages in [b[k-1], b[k])."""
    return np.searchsorted(np.asarray(sorted(boundaries)), np.asarray(ages), side="right")


def balance_weights(data, age_groups: Sequence[int] = DEFAULT_AGE_GROUPS) -> WeightScheme:
    """Equalize total weight across the (age group, label) cells present.

    Each sample gets ``(n / n_cells) / cell_count``: every cell then sums to
    ``n / n_cells`` and the grand total is ``n``. Every cell implied by the
    groups present in the data must be non-empty.
    """
    groups = age_group_of(data.age_months, age_groups)
    labels = np.asarray(data.labels, dtype=np.int8)
    n = len(labels)
    if n == 0:
        raise WeightingError("cannot weight an empty dataset")
    present_groups = np.unique(groups)
    cells = {}
    for g in present_groups:
        for y in (0, 1):
            count = int(np.sum((groups == g) & (labels == y)))
            if count == 0:
                raise WeightingError(f"empty weighting cell (age_group={int(g)}, label={y})")
            cells[(int(g), y)] = count
    per_cell = n / len(cells)
    w = np.empty(n)
    for (g, y), count in cells.items():
        w[(groups == g) & (labels == y)] = per_cell / count
    return WeightScheme(groups, labels, w)


# ---------------------------------------------------------------------------
# ROC

@dataclass(frozen=True, eq=False)
class RocCurve:
    """Operating points ordered by increasing threshold.

    A sample is called positive when its score is >= the threshold. The
    first point (lowest threshold) has sensitivity 1; the last, at +inf,
    has sensitivity 0.
    """

    thresholds: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.sensitivity.tolist(), self.specificity.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "sensitivity", "specificity"])
            for t, se, sp in self.points:
                w.writerow([repr(t), repr(se), repr(sp)])


def _check_binary(scores, labels, weights):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.int8)
    w = np.ones(len(s)) if weights is None else np.asarray(weights, dtype=np.float64)
    if not (len(s) == len(y) == len(w)):
        raise ParameterError("scores, labels and weights must have the same length")
    wp, wn = w[y == 1].sum(), w[y == 0].sum()
    if not (wp > 0 and wn > 0):
        raise UndefinedAUCError("ROC/AUC undefined: both classes must be present")
    return s, y, w, wp, wn


def roc(scores, labels, weights=None) -> RocCurve:
    """Weighted ROC over every distinct score; AUC by the trapezoid rule."""
    s, y, w, wp, wn = _check_binary(scores, labels, weights)
    uniq = np.unique(s)
    # weight at or above each distinct threshold
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    tp = np.cumsum(np.where(y[order] == 1, w[order], 0.0))
    fp = np.cumsum(np.where(y[order] == 0, w[order], 0.0))
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tpr_desc = tp[last] / wp  # thresholds descending: s_sorted[last]
    fpr_desc = fp[last] / wn
    tpr = np.r_[0.0, tpr_desc]
    fpr = np.r_[0.0, fpr_desc]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    thresholds = np.r_[uniq, np.inf]
    sens = np.r_[tpr_desc[::-1], 0.0]
    spec = np.r_[1.0 - fpr_desc[::-1], 1.0]
    return RocCurve(thresholds, np.clip(sens, 0, 1), np.clip(spec, 0, 1), auc)


def auc_score(scores, labels, weights=None) -> float:
    return roc(scores, labels, weights).auc


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    sensitivity: float
    specificity: float

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "sensitivity": self.sensitivity,
                "specificity": self.specificity}


def tune_threshold(curve: RocCurve, target_sensitivity: float) -> ThresholdChoice:
    """Largest threshold whose sensitivity reaches the target.

    Sensitivity falls as the threshold rises, so this point also has the
    best specificity among the qualifying ones.
    """
    if not 0 < target_sensitivity <= 1:
        raise ParameterError("target sensitivity must lie in (0, 1]")
    ok = np.flatnonzero(curve.sensitivity >= target_sensitivity - 1e-12)
    if len(ok) == 0:
        raise TuningError(f"no threshold reaches sensitivity {target_sensitivity}")
    i = ok[-1]
    return ThresholdChoice(float(curve.thresholds[i]), float(curve.sensitivity[i]),
                           float(curve.specificity[i]))


def binary_metrics(scores, labels, weights, threshold: float) -> dict:
    s, y, w, wp, wn = _check_binary(scores, labels, weights)
    pred = s >= threshold
    sens = float(w[pred & (y == 1)].sum() / wp)
    spec = float(w[~pred & (y == 0)].sum() / wn)
    acc = float(w[pred == (y == 1)].sum() / w.sum())
    return {"sensitivity": sens, "specificity": spec, "accuracy": acc,
            "balanced_accuracy": (sens + spec) / 2}


# ---------------------------------------------------------------------------
# cross-validation

@dataclass(frozen=True)
class CVConfig:
    n_folds: int = 10
    n_bootstrap_rounds: int = 20
    seed: int = 0
    decision_threshold: float = 0.5

    def __post_init__(self):
        if self.n_folds < 2:
            raise ParameterError("n_folds must be >= 2")
        if self.n_bootstrap_rounds < 1:
            raise ParameterError("n_bootstrap_rounds must be >= 1")


def stratified_folds(labels, cfg: CVConfig | int, seed: int | None = None) -> np.ndarray:
    """Fold index per sample; each class is dealt round-robin after shuffling."""
    n_folds = cfg if isinstance(cfg, int) else cfg.n_folds
    seed = (0 if isinstance(cfg, int) else cfg.seed) if seed is None else seed
    if n_folds < 2:
        raise ParameterError("n_folds must be >= 2")
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) < 2:
        raise StratificationError("stratified folds need both classes")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in classes:
        members = np.flatnonzero(y == c)
        if len(members) < n_folds:
            raise StratificationError(
                f"class {int(c)} has {len(members)} member(s), fewer than {n_folds} folds")
        members = rng.permutation(members)
        folds[members] = (np.arange(len(members)) + offset) % n_folds
        offset = (offset + len(members)) % n_folds
    return folds


Trainer = Callable[..., Callable]


def forest_trainer(params: ForestParams = ForestParams()) -> Trainer:
    """Trainer for :func:`bootstrapped_cv`: fit a forest, return its scorer."""

    def fit(train, seed):
        model = train_forest(train, replace(params, seed=seed))
        return model.predict_score

    return fit


@dataclass(frozen=True, eq=False)
class CVResult:
    """Bootstrapped cross-validation outcome.

    ``oof_scores`` has one row per round (NaN rows for skipped rounds);
    metric summaries hold the mean and the 2.5/97.5 percentile interval.
    """

    auc: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray
    oof_scores: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    failed_rounds: tuple[int, ...] = ()
    threshold: float = 0.5

    @staticmethod
    def _summary(v):
        lo, hi = np.percentile(v, [2.5, 97.5])
        return {"mean": float(np.mean(v)), "ci_low": float(lo), "ci_high": float(hi)}

    @property
    def ok(self) -> np.ndarray:
        return ~np.isnan(self.auc)

    def summary(self) -> dict:
        ok = self.ok
        return {
            "auc": self._summary(self.auc[ok]),
            "sensitivity": self._summary(self.sensitivity[ok]),
            "specificity": self._summary(self.specificity[ok]),
            "rounds": int(ok.sum()),
            "failed_rounds": list(self.failed_rounds),
        }

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.auc[self.ok]))

    def mean_oof(self) -> np.ndarray:
        """Per-sample out-of-fold score averaged over successful rounds."""
        return self.oof_scores[self.ok].mean(axis=0)


def round_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def bootstrapped_cv(matrix, cfg: CVConfig, trainer: Trainer | None = None) -> CVResult:
    """Repeated stratified k-fold CV with fresh fold seeds each round.

    Out-of-fold scores are pooled per round before computing AUC and the
    sensitivity/specificity at ``cfg.decision_threshold``. A round whose
    trainer raises a :class:`ScreeningError` is logged and skipped; more
    than 10% skipped rounds is an error.
    """
    trainer = trainer or forest_trainer()
    n = matrix.n_samples
    labels = np.asarray(matrix.labels)
    weights = np.asarray(matrix.weights)
    rounds = cfg.n_bootstrap_rounds
    auc = np.full(rounds, np.nan)
    sens = np.full(rounds, np.nan)
    spec = np.full(rounds, np.nan)
    oof = np.full((rounds, n), np.nan)
    failed = []
    for r, seed in enumerate(round_seeds(cfg.seed, rounds)):
        folds = stratified_folds(labels, cfg.n_folds, seed=seed)
        fold_seeds = round_seeds(seed, cfg.n_folds)
        try:
            for k in range(cfg.n_folds):
                test = folds == k
                scorer = trainer(matrix.subset(~test), fold_seeds[k])
                oof[r, test] = scorer(matrix.subset(test))
        except ScreeningError as exc:
            log.warning("cross-validation round %d failed: %s", r, exc)
            failed.append(r)
            oof[r] = np.nan
            continue
        auc[r] = auc_score(oof[r], labels, weights)
        m = binary_metrics(oof[r], labels, weights, cfg.decision_threshold)
        sens[r], spec[r] = m["sensitivity"], m["specificity"]
    if len(failed) > 0.1 * rounds:
        raise EvaluationError(f"{len(failed)} of {rounds} cross-validation rounds failed")
    return CVResult(auc, sens, spec, oof, labels, weights, tuple(failed), cfg.decision_threshold)


def pooled_cv(parts: Sequence[CVResult]) -> CVResult:
    """Combine per-silo CV results round by round into one population result."""
    rounds = len(parts[0].auc)
    labels = np.concatenate([p.labels for p in parts])
    weights = np.concatenate([p.weights for p in parts])
    oof = np.hstack([p.oof_scores for p in parts])
    auc = np.full(rounds, np.nan)
    sens = np.full(rounds, np.nan)
    spec = np.full(rounds, np.nan)
    threshold = parts[0].threshold
    for r in range(rounds):
        if np.isnan(oof[r]).any():
            continue
        auc[r] = auc_score(oof[r], labels, weights)
        m = binary_metrics(oof[r], labels, weights, threshold)
        sens[r], spec[r] = m["sensitivity"], m["specificity"]
    failed = tuple(sorted({r for p in parts for r in p.failed_rounds}))
    return CVResult(auc, sens, spec, oof, labels, weights, failed, threshold)


# ---------------------------------------------------------------------------
# grid search

@dataclass(frozen=True)
class GridResult:
    best: ForestParams
    leaderboard: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"best": self.best.to_dict(), "leaderboard": self.leaderboard}


def expand_grid(grid: Mapping[str, Sequence] | Sequence[ForestParams],
                base: ForestParams = ForestParams()) -> list[ForestParams]:
    if isinstance(grid, Mapping):
        keys = sorted(grid)
        return [replace(base, **dict(zip(keys, combo)))
                for combo in itertools.product(*(grid[k] for k in keys))]
    return list(grid)


def _grid_key(params: ForestParams) -> tuple:
    d = params.to_dict()
    d.pop("seed", None)
    return (params.n_trees, json.dumps(d, sort_keys=True, default=str))


def grid_search(matrix, grid, cfg: CVConfig, base: ForestParams = ForestParams(),
                make_trainer: Callable[[ForestParams], Trainer] = forest_trainer) -> GridResult:
    """Exhaustive bootstrapped-CV evaluation of every grid point.

    The best point has the highest mean AUC; ties go to fewer trees and then
    to the lexicographically smaller parameter set.
    """
    points = expand_grid(grid, base)
    if not points:
        raise ParameterError("parameter grid is empty")
    board = []
    for params in points:
        res = bootstrapped_cv(matrix, cfg, make_trainer(params))
        board.append((params, res.summary()))
    ranked = sorted(board, key=lambda e: (-e[1]["auc"]["mean"], _grid_key(e[0])))
    leaderboard = [{"params": p.to_dict(), **s} for p, s in ranked]
    return GridResult(ranked[0][0], leaderboard)
