"""Age silos, the questionnaire variant ladder and per-silo screener training."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ..dataset import AGE_MAX, AGE_MIN, Dataset
from ..encoding import EncodingSpec, aggregates, backing_questions, encode
from ..errors import ParameterError, TrainingError
from ..evaluation import (CVConfig, CVResult, balance_weights, bootstrapped_cv, grid_search,
                          pooled_cv, roc, tune_threshold)
from ..learners import ForestParams, train_forest
from ..selection import SelectionConfig, SelectionReport, naive_select, robust_select
from .artifacts import ScreenerArtifact
from .bands import DecisionBand, band_metrics, calibrate_band
from .injection import InjectionConfig, inject_missing

log = logging.getLogger(__name__)

YOUNG, OLD, ALL = "young", "old", "all"


# ---------------------------------------------------------------------------
# silos

@dataclass(frozen=True)
class SiloConfig:
    boundary_months: int = 48

    def __post_init__(self):
        if not AGE_MIN < self.boundary_months <= AGE_MAX:
            raise ParameterError(f"silo boundary must lie in ({AGE_MIN}, {AGE_MAX}]")

    def silo_of(self, age_months) -> str:
        return YOUNG if age_months < self.boundary_months else OLD

    def to_dict(self) -> dict:
        return asdict(self)


def silo_split(data: Dataset, cfg: SiloConfig = SiloConfig()) -> dict[str, Dataset]:
    """Partition by ``age_months < boundary``; both silos must be non-empty."""
    young = np.asarray(data.age_months) < cfg.boundary_months
    out = {YOUNG: data.subset(young), OLD: data.subset(~young)}
    for name, part in out.items():
        if len(part) == 0:
            raise TrainingError(f"{name} silo is empty at boundary {cfg.boundary_months} months")
    return out


def route_silo(age_months, cfg: SiloConfig, available: Sequence[str]) -> tuple[str, list[str]]:
    """Silo for one subject plus any warnings raised while routing."""
    warnings = []
    if tuple(available) == (ALL,):
        silo = ALL
    else:
        silo = cfg.silo_of(age_months)
    if not AGE_MIN <= age_months <= AGE_MAX:
        warnings.append(f"age {age_months} months outside {AGE_MIN}..{AGE_MAX}; "
                        f"routed to nearest silo {silo!r}")
        log.warning(warnings[-1])
    if silo not in available:
        raise ParameterError(f"no {silo!r} silo in this screener (have {sorted(available)})")
    return silo, warnings


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class Recipe:
    """What a screener variant does, step by step."""

    encoding: str
    selection: str
    siloed: bool
    aggregates: bool = False
    band: bool = False
    inject: bool = False
    final_k: int | None = None


VARIANTS = {
    "baseline": Recipe("one_hot", "naive", False),
    "robust": Recipe("one_hot", "robust", False),
    "siloed": Recipe("one_hot", "robust", True),
    "severity": Recipe("severity", "robust", True),
    "aggregate": Recipe("severity", "robust", True, aggregates=True),
    "inconclusive": Recipe("severity", "robust", True, aggregates=True, band=True),
}
LADDER = tuple(VARIANTS)
VIDEO_RECIPE = Recipe("presence", "robust", True, inject=True, final_k=10)


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of screener training.

    ``selection_forest`` grows the forests used inside feature selection
    and defaults to ``forest``. ``param_grid`` switches on the
    bootstrapped grid search over forest parameters.
    """

    forest: ForestParams = ForestParams()
    selection_forest: ForestParams | None = None
    selection: SelectionConfig = SelectionConfig()
    cv: CVConfig = CVConfig()
    param_grid: Mapping | None = None
    silo: SiloConfig = SiloConfig()
    injection: InjectionConfig = InjectionConfig()
    max_inconclusive_rate: float = 0.25
    target_sensitivity: float = 0.8

    def __post_init__(self):
        if not 0 <= self.max_inconclusive_rate < 1:
            raise ParameterError("max_inconclusive_rate must lie in [0, 1)")
        if not 0 < self.target_sensitivity <= 1:
            raise ParameterError("target_sensitivity must lie in (0, 1]")

    @property
    def age_groups(self) -> tuple[int, ...]:
        return (self.silo.boundary_months,)

    def to_dict(self) -> dict:
        return {
            "forest": self.forest.to_dict(),
            "selection_forest": None if self.selection_forest is None else self.selection_forest.to_dict(),
            "selection": self.selection.to_dict(),
            "cv": asdict(self.cv),
            "param_grid": None if self.param_grid is None else {k: list(v) for k, v in self.param_grid.items()},
            "silo": self.silo.to_dict(),
            "injection": self.injection.to_dict(),
            "max_inconclusive_rate": self.max_inconclusive_rate,
            "target_sensitivity": self.target_sensitivity,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PipelineConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ParameterError(f"unknown pipeline settings: {sorted(unknown)}")
        kw = {}
        if "forest" in d:
            kw["forest"] = ForestParams.from_dict(d["forest"])
        if d.get("selection_forest") is not None:
            kw["selection_forest"] = ForestParams.from_dict(d["selection_forest"])
        if "selection" in d:
            kw["selection"] = SelectionConfig.from_dict(d["selection"])
        if "cv" in d:
            kw["cv"] = CVConfig(**d["cv"])
        if d.get("param_grid") is not None:
            kw["param_grid"] = {k: tuple(v) for k, v in d["param_grid"].items()}
        if "silo" in d:
            kw["silo"] = SiloConfig(**d["silo"])
        if "injection" in d:
            kw["injection"] = InjectionConfig(**d["injection"])
        for key in ("max_inconclusive_rate", "target_sensitivity"):
            if key in d:
                kw[key] = float(d[key])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ParameterError(str(exc)) from None


def clean_json(obj):
    """Replace non-finite floats by None so metadata stays strict JSON."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# training

def make_trainer(params: ForestParams, injection: InjectionConfig | None = None):
    """CV trainer; with ``injection`` each training fold is augmented first."""

    def fit(train, seed):
        if injection is not None:
            train = inject_missing(train, replace(injection, seed=seed))
        return train_forest(train, replace(params, seed=seed)).predict_score

    return fit


@dataclass(frozen=True, eq=False)
class ScreenerResult:
    artifact: ScreenerArtifact
    cv: CVResult
    matrix: object
    selection: SelectionReport | None = None


def _selection_config(cfg: SelectionConfig, n_features: int, final_k: int | None) -> SelectionConfig:
    pool = min(cfg.candidate_pool, n_features)
    k = min(final_k or cfg.final_k, pool)
    return replace(cfg, candidate_pool=pool, final_k=k,
                   per_iteration_top_k=min(cfg.per_iteration_top_k, n_features))


def select_features(matrix, recipe: Recipe, config: PipelineConfig):
    params = config.selection_forest or config.forest
    cfg = _selection_config(config.selection, matrix.n_features, recipe.final_k)
    if recipe.selection == "naive":
        return tuple(naive_select(matrix, cfg.final_k, params)), None
    if recipe.selection == "robust":
        report = robust_select(matrix, cfg, params)
        return report.selected, report
    raise ParameterError(f"unknown selection method {recipe.selection!r}")


def train_screener(data: Dataset, spec: EncodingSpec, recipe: Recipe, config: PipelineConfig,
                   silo: str = ALL, variant: str = "custom", selected: Sequence[str] | None = None,
                   memo: dict | None = None) -> ScreenerResult:
    """Encode, select, cross-validate, fit and set the decision band for one silo.

    ``selected`` skips selection. ``memo`` caches the fitted stages so a
    ladder of variants that share steps does the shared work once.
    """
    memo = {} if memo is None else memo
    spec = spec.with_mode(recipe.encoding)
    matrix = encode(data, spec, recipe.encoding)
    matrix = matrix.with_weights(balance_weights(matrix, config.age_groups).weights)

    report = None
    if selected is None:
        key = ("select", recipe.encoding, recipe.selection, recipe.final_k, silo)
        if key not in memo:
            memo[key] = select_features(matrix, recipe, config)
        selected, report = memo[key]
    final = matrix.select(selected)

    agg_questions: tuple[str, ...] = ()
    if recipe.aggregates:
        agg_questions = backing_questions(selected)
        if agg_questions:
            agg = aggregates(data, agg_questions, spec)
            col = agg.values
            keep = [i for i in range(col.shape[1]) if not np.all(col[:, i] == col[0, i])]
            final = final.with_columns([agg.feature_names[i] for i in keep], col[:, keep])

    injection = config.injection if recipe.inject else None
    key = ("fit", recipe.encoding, recipe.selection, recipe.final_k, recipe.aggregates,
           recipe.inject, silo, tuple(final.feature_names))
    if key not in memo:
        params, leaderboard = config.forest, None
        if config.param_grid:
            grid = grid_search(final, config.param_grid, config.cv, config.forest,
                               lambda p: make_trainer(p, injection))
            params, leaderboard = grid.best, grid.leaderboard
        cv = bootstrapped_cv(final, config.cv, make_trainer(params, injection))
        fit_matrix = inject_missing(final, injection) if injection else final
        model = train_forest(fit_matrix, params)
        memo[key] = (params, leaderboard, cv, model, fit_matrix.notes.get("injection"))
    params, leaderboard, cv, model, injection_report = memo[key]

    oof = cv.mean_oof()
    if recipe.band:
        band = calibrate_band(oof, final.labels, final.weights, config.max_inconclusive_rate,
                              config.target_sensitivity)
        choice = None
    else:
        choice = tune_threshold(roc(oof, final.labels, final.weights), config.target_sensitivity)
        band = DecisionBand(choice.threshold, choice.threshold)

    metadata = {
        "n_train": final.n_samples,
        "class_counts": {"negative": int(np.sum(final.labels == 0)),
                         "positive": int(np.sum(final.labels == 1))},
        "recipe": asdict(recipe),
        "forest_params": params.to_dict(),
        "selection_config": config.selection.to_dict(),
        "cv_config": asdict(config.cv),
        "cv": cv.summary(),
        "oof_auc": roc(oof, final.labels, final.weights).auc,
        "selected_features": list(selected),
        "pruned_features": list(matrix.pruned),
        "operating_point": None if choice is None else choice.to_dict(),
        "band_metrics": band_metrics(band, oof, final.labels, final.weights),
        "max_inconclusive_rate": config.max_inconclusive_rate if recipe.band else 0.0,
    }
    if leaderboard is not None:
        metadata["grid_leaderboard"] = leaderboard
    if injection_report is not None:
        metadata["injection"] = injection_report
    artifact = ScreenerArtifact(
        silo=silo,
        instrument=data.instrument,
        variant=variant,
        encoding_mode=recipe.encoding,
        encoding=spec.subset(list(backing_questions(final.feature_names)) +
                             [q for q in agg_questions if q not in backing_questions(final.feature_names)]),
        feature_names=final.feature_names,
        aggregate_questions=agg_questions,
        model=model,
        band=band,
        metadata=clean_json(metadata),
    )
    return ScreenerResult(artifact, cv, final, report)


@dataclass(frozen=True, eq=False)
class VariantResult:
    """Artifacts per silo plus population-level pooled CV metrics."""

    variant: str
    artifacts: dict
    cv: CVResult
    silo_cv: dict
    selections: dict = field(default_factory=dict)

    @property
    def mean_auc(self) -> float:
        return self.cv.mean_auc

    def summary(self) -> dict:
        return clean_json({
            "variant": self.variant,
            "silos": sorted(self.artifacts),
            "cv": self.cv.summary(),
            "silo_cv": {s: r.summary() for s, r in sorted(self.silo_cv.items())},
        })


def _parts(data: Dataset, recipe: Recipe, config: PipelineConfig) -> dict[str, Dataset]:
    return silo_split(data, config.silo) if recipe.siloed else {ALL: data}


def train_variant(data: Dataset, variant: str, config: PipelineConfig = PipelineConfig(),
                  spec: EncodingSpec | None = None, memo: dict | None = None) -> VariantResult:
    """Train one preset of the ladder (one artifact per silo)."""
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; choose from {list(VARIANTS)}")
    recipe = VARIANTS[variant]
    spec = spec or EncodingSpec.for_instrument(data.instrument).subset(data.question_ids)
    memo = {} if memo is None else memo
    results = {silo: train_screener(part, spec, recipe, config, silo, variant, memo=memo)
               for silo, part in _parts(data, recipe, config).items()}
    silo_cv = {s: r.cv for s, r in results.items()}
    pooled = next(iter(silo_cv.values())) if len(silo_cv) == 1 else pooled_cv(list(silo_cv.values()))
    return VariantResult(variant, {s: r.artifact for s, r in results.items()}, pooled, silo_cv,
                         {s: r.selection for s, r in results.items() if r.selection is not None})


def train_ladder(data: Dataset, config: PipelineConfig = PipelineConfig(),
                 variants: Sequence[str] = LADDER, spec: EncodingSpec | None = None) -> dict[str, VariantResult]:
    """Train several variants, sharing selections and fits where recipes agree."""
    memo: dict = {}
    return {v: train_variant(data, v, config, spec, memo) for v in variants}
