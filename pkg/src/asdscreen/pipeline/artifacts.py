"""Deployable per-silo screener bundle and its JSON form."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..encoding import (EncodingSpec, FeatureMatrix, _encode, aggregates, backing_questions,
                        encode_responses)
from ..errors import ContractError, SchemaError
from ..learners import ForestModel
from .bands import DecisionBand

ARTIFACT_FORMAT = "asdscreen.screener/1"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc})") from None


@dataclass(frozen=True, eq=False)
class ScreenerArtifact:
    """One trained screener for one silo.

    ``feature_names`` is the model's input order: selected question
    features, then any aggregate columns. ``aggregate_questions`` are the
    questions the aggregates run over.
    """

    silo: str
    instrument: str
    variant: str
    encoding_mode: str
    encoding: EncodingSpec
    feature_names: tuple[str, ...]
    aggregate_questions: tuple[str, ...]
    model: ForestModel
    band: DecisionBand
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.model.feature_names) != tuple(self.feature_names):
            raise ContractError("model features do not match the artifact's feature names")
        missing = [q for q in self.questions if q not in self.encoding]
        if missing:
            raise ContractError(f"no encoding for questions {missing}")

    @property
    def questions(self) -> tuple[str, ...]:
        out = list(backing_questions(self.feature_names))
        out += [q for q in self.aggregate_questions if q not in out]
        return tuple(out)

    # -- scoring --------------------------------------------------------
    def encode(self, responses: Mapping, age_months=None, gender="unknown") -> np.ndarray:
        return encode_responses(responses, self.feature_names, self.encoding, self.encoding_mode,
                                self.aggregate_questions, age_months, gender)

    def score(self, responses: Mapping, age_months=None, gender="unknown") -> float:
        return float(self.model.predict_score(self.encode(responses, age_months, gender)[None, :])[0])

    def encode_dataset(self, data) -> FeatureMatrix:
        """Encode a whole dataset to the artifact's feature layout."""
        base = [n for n in self.feature_names if not n.startswith("agg.")]
        m = _encode(data.select_questions(backing_questions(base)), self.encoding,
                    self.encoding_mode, require_mode=False, prune=False)
        m = m.select(base)
        if self.aggregate_questions:
            agg = aggregates(data, self.aggregate_questions, self.encoding)
            keep = [i for i, n in enumerate(agg.feature_names) if n in self.feature_names]
            m = m.with_columns([agg.feature_names[i] for i in keep], agg.values[:, keep])
        return m.select(self.feature_names)

    def score_dataset(self, data) -> np.ndarray:
        return self.model.predict_score(self.encode_dataset(data))

    def decide(self, scores):
        return self.band.decide(scores)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        body = {
            "format": ARTIFACT_FORMAT,
            "silo": self.silo,
            "instrument": self.instrument,
            "variant": self.variant,
            "encoding_mode": self.encoding_mode,
            "encoding": self.encoding.subset(self.questions).to_dict(),
            "feature_names": list(self.feature_names),
            "questions": list(self.questions),
            "aggregate_questions": list(self.aggregate_questions),
            "band": self.band.to_dict(),
            "metadata": self.metadata,
            "model": self.model.to_dict(),
        }
        body["artifact_version"] = content_hash(body)
        return body

    @property
    def version(self) -> str:
        return self.to_dict()["artifact_version"]

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScreenerArtifact":
        if d.get("format") != ARTIFACT_FORMAT:
            raise SchemaError(f"not a screener artifact (format={d.get('format')!r})")
        try:
            return cls(
                silo=d["silo"],
                instrument=d["instrument"],
                variant=d["variant"],
                encoding_mode=d["encoding_mode"],
                encoding=EncodingSpec.from_dict(d["encoding"]),
                feature_names=tuple(d["feature_names"]),
                aggregate_questions=tuple(d["aggregate_questions"]),
                model=ForestModel.from_dict(d["model"]),
                band=DecisionBand.from_dict(d["band"]),
                metadata=d.get("metadata", {}),
            )
        except KeyError as exc:
            raise SchemaError(f"screener artifact lacks field {exc.args[0]!r}") from None

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "ScreenerArtifact":
        return cls.from_dict(read_json(path))
