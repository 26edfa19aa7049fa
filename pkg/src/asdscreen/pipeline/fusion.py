"""Logistic fusion of questionnaire and video scores, per silo, and the
runtime screening entry point."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..dataset import Dataset
from ..encoding import EncodingSpec, FeatureMatrix
from ..errors import MissingResponsesError, ParameterError, SchemaError, TrainingError
from ..evaluation import CVConfig, balance_weights, bootstrapped_cv, roc
from ..learners import LogisticModel, train_logistic
from .artifacts import ScreenerArtifact, content_hash, dump_json, read_json
from .bands import DecisionBand, band_metrics, calibrate_band
from .variants import (ALL, VARIANTS, VIDEO_RECIPE, PipelineConfig, SiloConfig, clean_json,
                       route_silo, silo_split, train_screener)

log = logging.getLogger(__name__)

COMBINED_FORMAT = "asdscreen.combined/1"
FUSION_INPUTS = ("questionnaire_score", "video_score")
VERBAL_MODULE = {False: "ados_module1_like", True: "ados_module2_like"}


@dataclass(frozen=True)
class Combination:
    decision: str
    fused_score: float | None
    flags: tuple[str, ...] = ()


def combine(questionnaire_score: float, video_score: float | None, fusion: LogisticModel,
            band: DecisionBand, fallback_band: DecisionBand | None = None) -> Combination:
    """Fuse two screener scores and apply the combined band.

    Without a video score the questionnaire score alone is judged by
    ``fallback_band`` and the result is flagged.
    """
    if video_score is None:
        if fallback_band is None:
            raise ParameterError("no video score and no questionnaire-only fallback band")
        return Combination(fallback_band.decide(questionnaire_score), None, ("questionnaire_only",))
    fused = float(fusion.predict(np.array([[questionnaire_score, video_score]]))[0])
    return Combination(band.decide(fused), fused)


def logistic_trainer(l2: float = 1e-4):
    def fit(train, seed):
        model = train_logistic(train.values, train.labels, train.weights, l2=l2)
        return lambda m: model.predict(m.values)

    return fit


@dataclass(frozen=True, eq=False)
class SiloScreener:
    silo: str
    questionnaire: ScreenerArtifact
    video: dict
    fusion: LogisticModel
    band: DecisionBand
    fallback_band: DecisionBand
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "silo": self.silo,
            "questionnaire": self.questionnaire.to_dict(),
            "video": {k: v.to_dict() for k, v in sorted(self.video.items())},
            "fusion": self.fusion.to_dict(),
            "band": self.band.to_dict(),
            "fallback_band": self.fallback_band.to_dict(),
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d) -> "SiloScreener":
        return cls(
            silo=d["silo"],
            questionnaire=ScreenerArtifact.from_dict(d["questionnaire"]),
            video={k: ScreenerArtifact.from_dict(v) for k, v in d["video"].items()},
            fusion=LogisticModel.from_dict(d["fusion"]),
            band=DecisionBand.from_dict(d["band"]),
            fallback_band=DecisionBand.from_dict(d["fallback_band"]),
            metrics=d.get("metrics", {}),
        )


@dataclass(frozen=True, eq=False)
class CombinedScreener:
    silos: dict
    silo_config: SiloConfig = SiloConfig()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.silos.values():
            if tuple(s.fusion.input_names) != FUSION_INPUTS:
                raise ParameterError(f"fusion inputs must be {list(FUSION_INPUTS)}")

    def _body(self) -> dict:
        return {
            "format": COMBINED_FORMAT,
            "silo_config": self.silo_config.to_dict(),
            "silos": {k: v.to_dict() for k, v in sorted(self.silos.items())},
            "metadata": self.metadata,
        }

    @property
    def version(self) -> str:
        return content_hash(self._body())

    def to_dict(self) -> dict:
        body = self._body()
        body["artifact_version"] = content_hash(body)
        return body

    @classmethod
    def from_dict(cls, d) -> "CombinedScreener":
        if d.get("format") != COMBINED_FORMAT:
            raise SchemaError(f"not a combined screener (format={d.get('format')!r})")
        try:
            return cls({k: SiloScreener.from_dict(v) for k, v in d["silos"].items()},
                       SiloConfig(**d["silo_config"]), d.get("metadata", {}))
        except KeyError as exc:
            raise SchemaError(f"combined screener lacks field {exc.args[0]!r}") from None

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "CombinedScreener":
        return cls.from_dict(read_json(path))


def _video_scores(results: Mapping[str, object]) -> dict[str, float]:
    out = {}
    for module in sorted(results):
        r = results[module]
        for sid, s in zip(r.matrix.subject_ids, r.cv.mean_oof()):
            out.setdefault(sid, float(s))
    return out


def _fusion_inputs(q_result, v_scores):
    q_ids = q_result.matrix.subject_ids
    q_oof = q_result.cv.mean_oof()
    rows = [i for i, sid in enumerate(q_ids) if sid in v_scores]
    x = np.array([[q_oof[i], v_scores[q_ids[i]]] for i in rows])
    return rows, x


def train_combined(questionnaire: Dataset, videos: Sequence[Dataset], config: PipelineConfig = PipelineConfig(),
                   q_variant: str = "aggregate", q_spec: EncodingSpec | None = None,
                   v_specs: Mapping[str, EncodingSpec] | None = None, siloed: bool = True) -> CombinedScreener:
    """Train questionnaire and video screeners per silo and fuse their out-of-fold scores.

    Subjects are matched across instruments by subject id. The fusion
    logistic regression and the combined band are fitted on out-of-fold
    scores only; the fused CV AUC comes from cross-validating the fusion
    over those same inputs.
    """
    if q_variant not in VARIANTS:
        raise ParameterError(f"unknown variant {q_variant!r}")
    q_spec = q_spec or EncodingSpec.for_instrument(questionnaire.instrument).subset(questionnaire.question_ids)
    v_specs = dict(v_specs or {})
    for v in videos:
        v_specs.setdefault(v.instrument, EncodingSpec.for_instrument(v.instrument).subset(v.question_ids))
    recipe = VARIANTS[q_variant]
    q_parts = silo_split(questionnaire, config.silo) if siloed else {ALL: questionnaire}
    v_parts = [silo_split(v, config.silo) if siloed else {ALL: v} for v in videos]

    silos = {}
    for silo, q_data in q_parts.items():
        q_res = train_screener(q_data, q_spec, recipe, config, silo, q_variant)
        v_res = {}
        for v, parts in zip(videos, v_parts):
            v_res[v.instrument] = train_screener(parts[silo], v_specs[v.instrument], VIDEO_RECIPE,
                                                 config, silo, "video")
        v_scores = _video_scores(v_res)
        rows, x = _fusion_inputs(q_res, v_scores)
        if len(rows) == 0:
            raise TrainingError(f"no subject in the {silo} silo has both questionnaire and video data")
        paired = q_res.matrix.subset(rows)
        w = balance_weights(paired, config.age_groups).weights
        fm = FeatureMatrix(FUSION_INPUTS, x, w, paired.labels, paired.subject_ids, paired.age_months)
        fusion = train_logistic(x, paired.labels, w, input_names=FUSION_INPUTS)
        fused_cv = bootstrapped_cv(fm, config.cv, logistic_trainer())
        fused_oof = fused_cv.mean_oof()
        band = calibrate_band(fused_oof, paired.labels, w, config.max_inconclusive_rate,
                              config.target_sensitivity)
        q_oof = q_res.cv.mean_oof()
        fallback = calibrate_band(q_oof, q_res.matrix.labels, q_res.matrix.weights,
                                  config.max_inconclusive_rate, config.target_sensitivity)
        metrics = {
            "n_paired": len(rows),
            "fused_cv": fused_cv.summary(),
            "auc": {
                "fused": fused_cv.mean_auc,
                "questionnaire": roc(x[:, 0], paired.labels, w).auc,
                "video": roc(x[:, 1], paired.labels, w).auc,
            },
            "band_metrics": band_metrics(band, fused_oof, paired.labels, w),
        }
        silos[silo] = SiloScreener(silo, q_res.artifact, {k: r.artifact for k, r in v_res.items()},
                                   fusion, band, fallback, clean_json(metrics))
    metadata = clean_json({"config": config.to_dict(), "questionnaire_variant": q_variant,
                           "individual_bands": "disabled inside fusion; questionnaire band used "
                                               "only when video is missing"})
    return CombinedScreener(silos, config.silo, metadata)


def _pick_module(silo: SiloScreener, verbal, silo_id) -> str | None:
    modules = sorted(silo.video)
    if not modules:
        return None
    if verbal is not None:
        module = VERBAL_MODULE[bool(verbal)]
        if module not in silo.video:
            raise ParameterError(f"no video screener for {module!r} in silo {silo_id!r}")
        return module
    if len(modules) == 1:
        return modules[0]
    # no verbal flag: the younger silo stands in for pre-verbal
    guess = VERBAL_MODULE[silo_id != "young"]
    return guess if guess in modules else modules[0]


def screen(responses: Mapping, combined: CombinedScreener, age_months: int, gender: str = "unknown",
           video_responses: Mapping | None = None, verbal: bool | None = None) -> dict:
    """Route by age, score both screeners, fuse and decide.

    Without ``video_responses`` the decision falls back to the
    questionnaire alone and is flagged. Missing answers from either
    instrument are reported together.
    """
    silo_id, warnings = route_silo(age_months, combined.silo_config, list(combined.silos))
    silo = combined.silos[silo_id]
    q_art = silo.questionnaire
    module = _pick_module(silo, verbal, silo_id) if video_responses is not None else None

    missing = []
    for art, resp, prefix in ((q_art, responses, "questionnaire"),
                              (silo.video.get(module), video_responses, "video")):
        if art is None:
            continue
        resp = {str(k): v for k, v in resp.items()}
        missing += [f"{prefix}:{q}" for q in art.questions if q not in resp]
    if missing:
        raise MissingResponsesError(missing)

    q_score = q_art.score(responses, age_months, gender)
    v_score = None
    if module is not None:
        v_score = silo.video[module].score(video_responses, age_months, gender)
    result = combine(q_score, v_score, silo.fusion, silo.band, silo.fallback_band)
    return {
        "decision": result.decision,
        "fused_score": result.fused_score,
        "questionnaire_score": q_score,
        "video_score": v_score,
        "video_module": module,
        "silo": silo_id,
        "flags": list(result.flags),
        "warnings": warnings,
        "artifact_version": combined.version,
    }
