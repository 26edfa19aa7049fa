"""Decision bands: a score interval inside which the screener abstains."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..evaluation import roc, tune_threshold

log = logging.getLogger(__name__)

NEGATIVE, INCONCLUSIVE, POSITIVE = "negative", "inconclusive", "positive"


@dataclass(frozen=True)
class DecisionBand:
    """``score < low`` is negative, ``score >= high`` positive, the rest inconclusive.

    With ``low == high`` the band is an ordinary binary threshold.
    """

    low: float
    high: float

    def __post_init__(self):
        if not self.low <= self.high:
            raise ParameterError(f"band low={self.low} exceeds high={self.high}")

    @property
    def is_binary(self) -> bool:
        return self.low == self.high

    def decide(self, scores):
        s = np.asarray(scores, dtype=np.float64)
        out = np.where(s >= self.high, POSITIVE, np.where(s < self.low, NEGATIVE, INCONCLUSIVE))
        return str(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"low": float(self.low), "high": float(self.high)}

    @classmethod
    def from_dict(cls, d) -> "DecisionBand":
        return cls(float(d["low"]), float(d["high"]))


def band_metrics(band: DecisionBand, scores, labels, weights=None) -> dict:
    """Weighted inconclusive rate and conclusive-subset accuracy of a band."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    w = np.ones(len(s)) if weights is None else np.asarray(weights, dtype=np.float64)
    d = band.decide(s)
    conclusive = d != INCONCLUSIVE
    correct = conclusive & ((d == POSITIVE) == (y == 1))
    wc = w[conclusive].sum()
    pos, neg = conclusive & (y == 1), conclusive & (y == 0)
    sens = w[correct & pos].sum() / w[pos].sum() if w[pos].sum() > 0 else float("nan")
    spec = w[correct & neg].sum() / w[neg].sum() if w[neg].sum() > 0 else float("nan")
    return {
        "inconclusive_rate": float(1 - wc / w.sum()),
        "conclusive_accuracy": float(w[correct].sum() / wc) if wc > 0 else float("nan"),
        "conclusive_sensitivity": float(sens),
        "conclusive_specificity": float(spec),
    }


def calibrate_band(scores, labels, weights=None, max_inconclusive_rate: float = 0.25,
                   target_sensitivity: float = 0.8, grid_step: float = 0.01) -> DecisionBand:
    """Grid-search a (low, high) band on out-of-fold scores.

    Candidates are the score quantiles at ``grid_step`` spacing. Among bands
    whose weighted inconclusive rate is within the cap, the one with the
    best weighted balanced accuracy over conclusive samples wins; ties go
    to the narrower band, then the lower center. With a cap of 0 only
    binary bands are feasible.
    """
    if not 0 <= max_inconclusive_rate < 1:
        raise ParameterError("max_inconclusive_rate must lie in [0, 1)")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    w = np.ones(len(s)) if weights is None else np.asarray(weights, dtype=np.float64)
    if len(s) == 0:
        raise ParameterError("no scores to calibrate on")

    qs = np.linspace(0, 1, int(round(1 / grid_step)) + 1)
    cand = np.unique(np.quantile(s, qs, method="inverted_cdf"))

    order = np.argsort(s, kind="stable")
    ss = s[order]
    cum_pos = np.r_[0.0, np.cumsum(np.where(y[order] == 1, w[order], 0.0))]
    cum_neg = np.r_[0.0, np.cumsum(np.where(y[order] == 0, w[order], 0.0))]
    below = np.searchsorted(ss, cand, side="left")  # count of scores < c
    pos_below, neg_below = cum_pos[below], cum_neg[below]
    total_pos, total_neg = cum_pos[-1], cum_neg[-1]
    total = total_pos + total_neg

    lo = np.arange(len(cand))[:, None]
    hi = np.arange(len(cand))[None, :]
    valid = lo <= hi
    tn = neg_below[:, None]
    fn = pos_below[:, None]
    tp = total_pos - pos_below[None, :]
    fp = total_neg - neg_below[None, :]
    rate = (total - tn - fn - tp - fp) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        sens = tp / (tp + fn)
        spec = tn / (tn + fp)
    bal = (sens + spec) / 2
    feasible = valid & (rate <= max_inconclusive_rate + 1e-12) & np.isfinite(bal)
    if not feasible.any():
        log.warning("no feasible inconclusive band; falling back to a binary threshold")
        t = tune_threshold(roc(s, y, w), target_sensitivity).threshold
        return DecisionBand(t, t)

    width = cand[None, :] - cand[:, None]
    center = (cand[None, :] + cand[:, None]) / 2
    ii, jj = np.nonzero(feasible)
    objective = bal[ii, jj]
    best = objective.max()
    near = np.abs(objective - best) <= 1e-12
    ii, jj = ii[near], jj[near]
    pick = np.lexsort((center[ii, jj], width[ii, jj]))[0]
    return DecisionBand(float(cand[ii[pick]]), float(cand[jj[pick]]))
