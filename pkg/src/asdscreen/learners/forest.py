"""Weighted random forest over binary and small-integer features."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ContractError, ParameterError, TrainingError
from . import _kernels

FOREST_FORMAT = "asdscreen.forest/1"


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters.

    ``min_samples_leaf`` is a fraction of the total training weight that
    every leaf must hold. ``max_features`` is ``"sqrt"`` or a fraction of
    the feature count tried at each split. ``max_depth=None`` means
    unlimited.
    """

    n_trees: int = 400
    max_depth: int | None = None
    min_samples_leaf: float = 0.01
    max_features: str | float = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if not self.min_samples_leaf > 0:
            raise ParameterError("min_samples_leaf must be > 0")
        if self.max_depth is not None and self.max_depth < 0:
            raise ParameterError("max_depth must be >= 0 or None")
        if isinstance(self.max_features, str):
            if self.max_features != "sqrt":
                raise ParameterError("max_features must be 'sqrt' or a fraction")
        elif not 0 < float(self.max_features) <= 1:
            raise ParameterError("fractional max_features must lie in (0, 1]")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        return max(1, int(round(float(self.max_features) * n_features)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "ForestParams":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ForestModel:
    """Trained forest stored as flat node arrays.

    Node ``i`` is a leaf when ``feature[i] == -1``; otherwise rows with
    ``x[feature[i]] <= threshold[i]`` go to ``left[i]``. Child indices are
    absolute; ``roots[t]`` is the root node of tree ``t``.
    """

    feature_names: tuple[str, ...]
    params: ForestParams
    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    node_weight: np.ndarray
    importances: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def predict_score(self, rows) -> np.ndarray:
        return predict_score(self, rows)

    def tree_nodes(self, t: int) -> range:
        start = self.roots[t]
        end = self.roots[t + 1] if t + 1 < self.n_trees else len(self.feature)
        return range(start, end)

    def to_dict(self) -> dict:
        trees = [self._node_dict(int(r)) for r in self.roots]
        return {
            "format": FOREST_FORMAT,
            "feature_names": list(self.feature_names),
            "params": self.params.to_dict(),
            "importances": [float(v) for v in self.importances],
            "trees": trees,
            "meta": self.meta,
        }

    def _node_dict(self, i: int) -> dict:
        if self.feature[i] < 0:
            return {"value": float(self.value[i]), "weight": float(self.node_weight[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "weight": float(self.node_weight[i]),
            "left": self._node_dict(int(self.left[i])),
            "right": self._node_dict(int(self.right[i])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format") != FOREST_FORMAT:
            raise ContractError(f"unsupported forest format {d.get('format')!r}")
        feature, threshold, left, right, value, weight, roots = [], [], [], [], [], [], []

        def add(node):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            weight.append(float(node["weight"]))
            if "feature" in node:
                feature[i] = int(node["feature"])
                threshold[i] = float(node["threshold"])
                left[i] = add(node["left"])
                right[i] = add(node["right"])
            else:
                value[i] = float(node["value"])
            return i

        for tree in d["trees"]:
            roots.append(add(tree))
        return cls(
            feature_names=tuple(d["feature_names"]),
            params=ForestParams.from_dict(d["params"]),
            roots=np.array(roots, dtype=np.int64),
            feature=np.array(feature, dtype=np.int32),
            threshold=np.array(threshold),
            left=np.array(left, dtype=np.int32),
            right=np.array(right, dtype=np.int32),
            value=np.array(value),
            node_weight=np.array(weight),
            importances=np.array(d["importances"]),
            meta=dict(d.get("meta", {})),
        )


def _bin_features(x: np.ndarray):
    n, p = x.shape
    uniques = [np.unique(x[:, f]) for f in range(p)]
    nbins = np.array([len(u) for u in uniques], dtype=np.int64)
    max_bins = int(nbins.max()) if p else 1
    if max_bins > np.iinfo(np.uint16).max:
        raise ParameterError("a feature has too many distinct values for binning")
    bin_values = np.zeros((p, max_bins))
    xb = np.empty((p, n), dtype=np.uint16)
    for f, u in enumerate(uniques):
        bin_values[f, : len(u)] = u
        xb[f] = np.searchsorted(u, x[:, f])
    return xb, nbins, bin_values


def _collapse(xb, y, w):
    """Merge identical (binned row, label) pairs, summing weights, in canonical order."""
    key = np.column_stack([xb.T.astype(np.int64), y.astype(np.int64)])
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    weights = np.bincount(inverse, weights=w, minlength=len(uniq))
    return np.ascontiguousarray(uniq[:, :-1].T, dtype=np.uint16), uniq[:, -1].astype(np.int8), weights


def train_forest(matrix, params: ForestParams = ForestParams()) -> ForestModel:
    """Fit a weighted Gini forest on a :class:`FeatureMatrix`.

    Sample weights enter the bootstrap draw (weight-proportional), the
    impurity and the leaf class distributions. Identical rows are merged
    first, so doubling a sample's weight and duplicating the sample give
    the same model for a fixed seed. For the same reason a bootstrap draws
    ``max(n_unique_rows, round(total_weight))`` samples, which is ``n`` for
    the usual weights summing to ``n``.
    """
    x = np.asarray(matrix.values)
    y = np.asarray(matrix.labels, dtype=np.int8)
    w = np.asarray(matrix.weights, dtype=np.float64)
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise ParameterError("cannot train on an empty matrix")
    total = float(w.sum())
    if not total > 0:
        raise ParameterError("total sample weight is zero")
    if w[y == 1].sum() <= 0 or w[y == 0].sum() <= 0:
        raise TrainingError("training data must contain both classes with positive weight")

    xb, nbins, bin_values = _bin_features(x)
    xb, yu, wu = _collapse(xb, y, w)
    n_u = len(yu)

    children = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    tree_weights = np.empty((params.n_trees, n_u))
    seeds = np.empty(params.n_trees, dtype=np.uint64)
    probs = wu / wu.sum()
    n_draw = max(n_u, int(round(total)))
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        seeds[t] = rng.integers(0, 2**63, dtype=np.uint64)
        if params.bootstrap:
            counts = rng.multinomial(n_draw, probs)
            tree_weights[t] = counts * (total / n_draw)
        else:
            tree_weights[t] = wu

    min_leaf = params.min_samples_leaf * total
    max_leaves = min(n_u, int(total / min_leaf) + 1)
    max_nodes = 2 * max_leaves + 1
    mtry = params.features_per_split(x.shape[1])
    depth = -1 if params.max_depth is None else int(params.max_depth)

    feat, thr, left, right, value, nweight, imp, counts = _kernels.build_forest(
        xb, nbins, bin_values, yu, tree_weights, depth, min_leaf, mtry, seeds, max_nodes)

    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    parts = {k: [] for k in ("feat", "thr", "left", "right", "value", "weight")}
    for t in range(params.n_trees):
        c = counts[t]
        off = offsets[t]
        lt, rt = left[t, :c].astype(np.int64), right[t, :c].astype(np.int64)
        parts["feat"].append(feat[t, :c])
        parts["thr"].append(thr[t, :c])
        parts["left"].append(np.where(lt >= 0, lt + off, -1))
        parts["right"].append(np.where(rt >= 0, rt + off, -1))
        parts["value"].append(value[t, :c])
        parts["weight"].append(nweight[t, :c])

    per_tree = imp.sum(axis=1)
    grown = per_tree > 0
    if grown.any():
        importances = (imp[grown] / per_tree[grown, None]).mean(axis=0)
        importances /= importances.sum()
    else:
        importances = np.zeros(x.shape[1])

    return ForestModel(
        feature_names=tuple(matrix.feature_names),
        params=params,
        roots=offsets,
        feature=np.concatenate(parts["feat"]).astype(np.int32),
        threshold=np.concatenate(parts["thr"]),
        left=np.concatenate(parts["left"]).astype(np.int32),
        right=np.concatenate(parts["right"]).astype(np.int32),
        value=np.concatenate(parts["value"]),
        node_weight=np.concatenate(parts["weight"]),
        importances=importances,
    )


def predict_score(model: ForestModel, rows) -> np.ndarray:
    """Positive-class score in [0, 1]: mean leaf probability over trees.

    ``rows`` may be a single feature row, a 2-D array, or a FeatureMatrix
    whose feature names must match the model's.
    """
    if hasattr(rows, "feature_names"):
        if tuple(rows.feature_names) != model.feature_names:
            raise ContractError("feature names do not match the model")
        rows = rows.values
    x = np.asarray(rows, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != len(model.feature_names):
        raise ContractError(f"expected {len(model.feature_names)} features, got {x.shape[1]}")
    out = _kernels.predict_forest(np.ascontiguousarray(x), model.roots, model.feature,
                                  model.threshold, model.left, model.right, model.value)
    return out[0] if single else out


def feature_importance(model: ForestModel) -> list[tuple[str, float]]:
    """(feature, importance) pairs, descending; ties broken by feature name."""
    pairs = [(n, float(v)) for n, v in zip(model.feature_names, model.importances)]
    return sorted(pairs, key=lambda p: (-p[1], p[0]))
