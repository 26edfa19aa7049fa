"""Missing-value injection for presence-encoded training sets.

Duplicates of the training rows get some presence bits flipped from 1 to
0 so that, in the augmented weighted set, a zero carries about as much
positive as negative weight and stops being evidence either way.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..errors import ParameterError

log = logging.getLogger(__name__)

PRESENCE_SUFFIX = ".observed"
INTERPRETATION = ("target is the positive share of zero-valued weight (1:1 positive to "
                  "negative), not a positive-to-negative ratio of 0.5")


@dataclass(frozen=True)
class InjectionConfig:
    """``max_duplicate_weight`` caps the duplicate-to-original weight ratio."""

    target_zero_balance: float = 0.5
    tolerance: float = 0.05
    seed: int = 0
    max_duplicate_weight: float = 20.0

    def __post_init__(self):
        if not 0 < self.target_zero_balance < 1:
            raise ParameterError("target_zero_balance must lie in (0, 1)")
        if not 0 <= self.tolerance < min(self.target_zero_balance, 1 - self.target_zero_balance):
            raise ParameterError("tolerance must be >= 0 and keep the target band inside (0, 1)")
        if self.max_duplicate_weight <= 0:
            raise ParameterError("max_duplicate_weight must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def zero_share(values, labels, weights) -> float:
    """Positive-class share of the weight on rows where ``values == 0``."""
    zero = np.asarray(values) == 0
    total = weights[zero].sum()
    return float(weights[zero & (labels == 1)].sum() / total) if total > 0 else float("nan")


def zero_balance(matrix, features=None) -> dict[str, float]:
    """Zero-value positive share per presence feature."""
    names = features or [n for n in matrix.feature_names if n.endswith(PRESENCE_SUFFIX)]
    return {n: zero_share(matrix.column(n), matrix.labels, matrix.weights) for n in names}


def _required(p0, n0, target):
    """Weight to add at zero to the deficient class; sign says which class."""
    share = p0 / (p0 + n0)
    if share < target:
        return 1, target * n0 / (1 - target) - p0
    return 0, (1 - target) * p0 / target - n0


def inject_missing(matrix, cfg: InjectionConfig = InjectionConfig()):
    """Augment ``matrix`` with weight-rescaled duplicates carrying 1 -> 0 flips.

    Every row is duplicated once. With duplicate ratio ``a`` the originals
    keep weight ``w / (1 + a)`` and duplicates get ``a * w / (1 + a)``, so
    per-class totals are unchanged. For each presence feature whose zero
    share misses the target, duplicates of the class short of zero weight
    are flipped (random order, weight prefix) until the share reaches the
    target. ``a`` is the smallest ratio that lets every feasible feature
    reach it. Features that cannot (no zeros at all, or not enough ones to
    flip within ``max_duplicate_weight``) are skipped and logged.

    The report lands in ``notes["injection"]`` of the result.
    """
    names = [n for n in matrix.feature_names if n.endswith(PRESENCE_SUFFIX)]
    if not names:
        raise ParameterError("inject_missing needs presence-encoded (.observed) features")
    cols = [matrix.feature_names.index(n) for n in names]
    block = matrix.values[:, cols]
    if not np.isin(block, (0, 1)).all():
        raise ParameterError("presence features must be binary")

    t, tol = cfg.target_zero_balance, cfg.tolerance
    y, w = matrix.labels, matrix.weights
    r_max = cfg.max_duplicate_weight / (1 + cfg.max_duplicate_weight)
    report, plan = {}, {}
    for name, x in zip(names, block.T):
        p0 = w[(x == 0) & (y == 1)].sum()
        n0 = w[(x == 0) & (y == 0)].sum()
        entry = {"before": zero_share(x, y, w)}
        report[name] = entry
        if p0 + n0 == 0:
            entry["status"] = "skipped: feature is never 0"
            continue
        if abs(entry["before"] - t) <= tol:
            entry["status"] = "balanced"
            continue
        cls, need = _required(p0, n0, t)
        ones = w[(x == 1) & (y == cls)].sum()
        r = need / ones if ones > 0 else np.inf
        if r >= r_max:
            entry["status"] = (f"skipped: needs {need:.6g} class-{cls} zero weight, "
                               f"only {ones:.6g} flippable")
            continue
        plan[name] = (cls, need)
        entry["ratio"] = float(r)

    for name, entry in report.items():
        if entry.get("status", "").startswith("skipped"):
            log.warning("inject_missing: %s %s", name, entry["status"])

    notes = dict(matrix.notes)
    if not plan:
        notes["injection"] = {"interpretation": INTERPRETATION, "duplicate_ratio": 0.0,
                              "features": report, "config": cfg.to_dict()}
        return replace(matrix, notes=notes)

    r = max(report[n]["ratio"] for n in plan)
    a = r / (1 - r)
    rng = np.random.default_rng(cfg.seed)
    dup = matrix.values.copy()
    for name in names:  # fixed order keeps the random stream reproducible
        if name not in plan:
            continue
        cls, need = plan[name]
        j = matrix.feature_names.index(name)
        flip_weight = need * (1 + a) / a
        cand = rng.permutation(np.flatnonzero((matrix.values[:, j] == 1) & (y == cls)))
        cum = np.cumsum(w[cand])
        # prefix whose cumulative weight lands closest to the requirement
        k = int(np.searchsorted(cum, flip_weight))
        if k < len(cum) and (k == 0 or abs(cum[k] - flip_weight) < abs(cum[k - 1] - flip_weight)):
            k += 1
        dup[cand[:k], j] = 0
        report[name]["flipped"] = int(k)
        report[name]["flipped_weight"] = float(cum[k - 1]) if k else 0.0

    n = matrix.n_samples
    out = replace(
        matrix,
        values=np.vstack([matrix.values, dup]),
        weights=np.r_[w / (1 + a), w * a / (1 + a)],
        labels=np.r_[y, y],
        subject_ids=matrix.subject_ids + tuple(f"{s}#dup" for s in matrix.subject_ids),
        age_months=np.r_[matrix.age_months, matrix.age_months],
        augmented=np.r_[matrix.augmented, np.ones(n, bool)],
    )
    after = zero_balance(out, names)
    for name in names:
        report[name]["after"] = after[name]
        if name in plan:
            ok = abs(after[name] - t) <= tol
            report[name]["status"] = "flipped" if ok else "flipped: outside tolerance"
            if not ok:
                log.warning("inject_missing: %s zero share %.3f outside target band", name, after[name])
        report[name].pop("ratio", None)
    notes["injection"] = {"interpretation": INTERPRETATION, "duplicate_ratio": float(a),
                          "features": report, "config": cfg.to_dict()}
    return replace(out, notes=notes)
