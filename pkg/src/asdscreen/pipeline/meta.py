"""Inconclusive output from a misclassification predictor.

A first forest is cross-validated and its out-of-fold mistakes become the
labels of a second forest (the gate). The gate sees the input features plus
the first forest's score. Subjects the gate flags are inconclusive; the rest
go to a third forest trained only on the subjects the gate lets through.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..encoding import FeatureMatrix
from ..evaluation import CVConfig, bootstrapped_cv, forest_trainer
from ..learners import ForestModel, ForestParams, train_forest
from .bands import INCONCLUSIVE, NEGATIVE, POSITIVE, DecisionBand, band_metrics, calibrate_band

log = logging.getLogger(__name__)

FIRST_SCORE = "first_stage_score"


def _with_score(rows, score):
    if isinstance(rows, FeatureMatrix):
        return rows.with_columns([FIRST_SCORE], np.asarray(score, dtype=np.float64)[:, None])
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    return np.column_stack([rows, score])


@dataclass(frozen=True, eq=False)
class MetaInconclusive:
    first: ForestModel
    first_threshold: float
    gate: ForestModel | None = None
    gate_threshold: float = np.inf
    conclusive: ForestModel | None = None
    conclusive_threshold: float = 0.5
    fallback_band: DecisionBand | None = None
    metrics: dict = field(default_factory=dict)

    @property
    def is_fallback(self) -> bool:
        return self.fallback_band is not None

    def decide(self, rows) -> np.ndarray:
        if self.is_fallback:
            return self.fallback_band.decide(self.first.predict_score(rows))
        gate_rows = _with_score(rows, self.first.predict_score(rows))
        flagged = self.gate.predict_score(gate_rows) >= self.gate_threshold
        positive = self.conclusive.predict_score(rows) >= self.conclusive_threshold
        return np.where(flagged, INCONCLUSIVE, np.where(positive, POSITIVE, NEGATIVE))


def _balanced_accuracy(pred, y, w) -> float:
    pos, neg = y == 1, y == 0
    if w[pos].sum() == 0 or w[neg].sum() == 0:
        return -np.inf
    sens = w[pred & pos].sum() / w[pos].sum()
    spec = w[~pred & neg].sum() / w[neg].sum()
    return (sens + spec) / 2


def _gate_threshold(gate_scores, first_pred, y, w, cap) -> float:
    """Gate cutoff maximizing first-stage balanced accuracy on what passes."""
    cand = np.r_[np.unique(np.quantile(gate_scores, np.linspace(0, 1, 101), method="inverted_cdf")), np.inf]
    best, best_t = -np.inf, np.inf
    for t in cand[::-1]:  # high to low: ties keep the larger cutoff
        flagged = gate_scores >= t
        if w[flagged].sum() / w.sum() > cap + 1e-12:
            break
        keep = ~flagged
        score = _balanced_accuracy(first_pred[keep], y[keep], w[keep])
        if score > best + 1e-12:
            best, best_t = score, t
    return float(best_t)


def _enough(labels, n_folds) -> bool:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=2)
    return bool(counts.min() >= n_folds)


def meta_inconclusive(matrix: FeatureMatrix, params: ForestParams = ForestParams(),
                      cv: CVConfig = CVConfig(), max_inconclusive_rate: float = 0.25) -> MetaInconclusive:
    """Fit the first classifier, the misclassification gate and the conclusive classifier.

    The first classifier's cutoff maximizes out-of-fold balanced accuracy.
    The gate's cutoff keeps the weighted flagged share within
    ``max_inconclusive_rate``. When the out-of-fold mistakes are too few
    to cross-validate a gate, this falls back to a calibrated band on the
    first classifier's scores.
    """
    y, w = matrix.labels, matrix.weights
    oof1 = bootstrapped_cv(matrix, cv, forest_trainer(params)).mean_oof()
    t1 = calibrate_band(oof1, y, w, 0.0).low
    pred1 = oof1 >= t1
    wrong = pred1 != (y == 1)
    first = train_forest(matrix, params)

    def fallback(reason):
        log.warning("meta_inconclusive: %s; falling back to a calibrated band", reason)
        band = calibrate_band(oof1, y, w, max_inconclusive_rate)
        return MetaInconclusive(first, t1, fallback_band=band,
                                metrics={"fallback": reason, **band_metrics(band, oof1, y, w)})

    if not _enough(wrong, cv.n_folds):
        return fallback(f"only {int(wrong.sum())} out-of-fold misclassifications")

    gate_matrix = replace(_with_score(matrix, oof1), labels=wrong.astype(np.int8))
    oof2 = bootstrapped_cv(gate_matrix, cv, forest_trainer(params)).mean_oof()
    gate = train_forest(gate_matrix, params)
    t2 = _gate_threshold(oof2, pred1, y, w, max_inconclusive_rate)
    passed = oof2 < t2
    if not _enough(y[passed], cv.n_folds):
        return fallback("too few gated-through samples of one class")

    sub = matrix.subset(passed)
    oof3 = bootstrapped_cv(sub, cv, forest_trainer(params)).mean_oof()
    t3 = calibrate_band(oof3, sub.labels, sub.weights, 0.0).low
    conclusive = train_forest(sub, params)
    correct = (oof3 >= t3) == (sub.labels == 1)
    metrics = {
        "fallback": None,
        "inconclusive_rate": float(w[~passed].sum() / w.sum()),
        "conclusive_accuracy": float(sub.weights[correct].sum() / sub.weights.sum()),
        "first_stage_accuracy": float(w[~wrong].sum() / w.sum()),
    }
    return MetaInconclusive(first, t1, gate, t2, conclusive, t3, None, metrics)
