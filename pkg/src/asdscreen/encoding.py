"""Answer-code encoders: one-hot, severity-level and presence-of-behavior.

Every encoder turns a :class:`~asdscreen.dataset.Dataset` into a binary
:class:`FeatureMatrix`. Age is kept as an integer column and gender as a
single ``gender.male`` bit; both are appended after the question columns.

Feature naming::

    q37==2            one-hot / equality feature
    q37>=2            severity threshold feature
    q12.observed      presence feature
    agg.max_severity>=3, agg.count_level2, agg.count_other
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import EncodingError, MissingResponsesError, ParameterError

log = logging.getLogger(__name__)

MODES = ("one_hot", "severity", "presence")
MAX_CODE = 99

AGE_FEATURE = "age_months"
GENDER_FEATURE = "gender.male"


@dataclass(frozen=True)
class QuestionEncoding:
    """How one question's answer codes map to features.

    The declared code set is ``chain ∪ equality ∪ null_codes``. The first
    chain element is the non-symptomatic base level and gets an equality
    feature of its own; every later chain element gets a ``>=`` feature.
    """

    mode: str
    chain: tuple[int, ...] = ()
    equality: tuple[int, ...] = ()
    null_codes: tuple[int, ...] = ()
    observed_codes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown encoding mode {self.mode!r}")
        chain = tuple(int(c) for c in self.chain)
        # a base level listed under equality too is tolerated and folded away
        equality = tuple(int(c) for c in self.equality if not (chain and int(c) == chain[0]))
        object.__setattr__(self, "chain", chain)
        object.__setattr__(self, "equality", equality)
        object.__setattr__(self, "null_codes", tuple(int(c) for c in self.null_codes))
        object.__setattr__(self, "observed_codes", tuple(int(c) for c in self.observed_codes))

        groups = [set(self.chain), set(self.equality), set(self.null_codes)]
        if len(set(self.chain)) != len(self.chain):
            raise ParameterError(f"severity chain {self.chain} repeats a code")
        for a in range(3):
            for b in range(a + 1, 3):
                if groups[a] & groups[b]:
                    raise ParameterError(
                        f"codes {sorted(groups[a] & groups[b])} declared in more than one group")
        codes = self.codes
        if not codes:
            raise ParameterError("question declares no answer codes")
        if any(c < 0 or c > MAX_CODE for c in codes):
            raise ParameterError(f"answer codes must lie in 0..{MAX_CODE}")
        if self.mode == "severity" and len(self.chain) < 2:
            raise ParameterError("severity mode needs a chain with at least 2 levels")
        if not set(self.observed_codes) <= set(codes):
            raise ParameterError("observed_codes must be declared codes")

    @property
    def codes(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.chain) | set(self.equality) | set(self.null_codes)))

    def severity_level(self, code: int) -> int | None:
        """Position of ``code`` in the chain, or None for equality/null codes."""
        try:
            return self.chain.index(code)
        except ValueError:
            return None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "chain": list(self.chain),
            "equality": list(self.equality),
            "null_codes": list(self.null_codes),
            "observed_codes": list(self.observed_codes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuestionEncoding":
        return cls(
            mode=d["mode"],
            chain=tuple(d.get("chain", ())),
            equality=tuple(d.get("equality", ())),
            null_codes=tuple(d.get("null_codes", ())),
            observed_codes=tuple(d.get("observed_codes", ())),
        )


class EncodingSpec(Mapping):
    """Per-question encoding declarations, keyed by question id (a string)."""

    def __init__(self, questions: Mapping[str, QuestionEncoding]):
        self._q = {str(k): v for k, v in questions.items()}

    def __getitem__(self, key):
        return self._q[str(key)]

    def __iter__(self):
        return iter(self._q)

    def __len__(self):
        return len(self._q)

    def __eq__(self, other):
        return isinstance(other, EncodingSpec) and self._q == other._q

    def __repr__(self):
        modes = sorted({q.mode for q in self._q.values()})
        return f"EncodingSpec({len(self)} questions, modes={modes})"

    def with_mode(self, mode: str) -> "EncodingSpec":
        if mode not in MODES:
            raise ParameterError(f"unknown encoding mode {mode!r}")
        return EncodingSpec({k: replace(v, mode=mode) for k, v in self._q.items()})

    def subset(self, question_ids: Iterable[str]) -> "EncodingSpec":
        return EncodingSpec({str(q): self[q] for q in question_ids})

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self._q.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncodingSpec":
        return cls({str(k): QuestionEncoding.from_dict(v) for k, v in d.items()})

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EncodingSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"malformed encoding spec {path}: {exc}") from exc

    @classmethod
    def for_instrument(cls, instrument: str) -> "EncodingSpec":
        """Load the shipped spec for ``adir_like``, ``ados_module1_like`` or ``ados_module2_like``."""
        try:
            text = resources.files("asdscreen.specs").joinpath(f"{instrument}.json").read_text("utf-8")
        except FileNotFoundError:
            raise ParameterError(f"no shipped encoding spec for instrument {instrument!r}") from None
        return cls.from_dict(json.loads(text))


# Code templates for the shipped instruments. ADI-R items use 0..3 severity,
# 7 for "other" presentations and 8/9 for not-applicable/no-answer.
INSTRUMENT_TEMPLATES = {
    "adir_like": dict(mode="severity", chain=(0, 1, 2, 3), equality=(7,), null_codes=(8, 9),
                      observed_codes=(1, 2, 3, 7)),
    "ados_module1_like": dict(mode="presence", chain=(0, 1, 2, 3), equality=(7,), null_codes=(8, 9),
                              observed_codes=(1, 2, 3, 7)),
    "ados_module2_like": dict(mode="presence", chain=(0, 1, 2, 3), equality=(7,), null_codes=(8, 9),
                              observed_codes=(1, 2, 3, 7)),
}
INSTRUMENTS = tuple(INSTRUMENT_TEMPLATES)


def build_encoding_spec(instrument: str, question_ids: Iterable[str]) -> EncodingSpec:
    if instrument not in INSTRUMENT_TEMPLATES:
        raise ParameterError(f"unknown instrument {instrument!r}")
    template = INSTRUMENT_TEMPLATES[instrument]
    return EncodingSpec({str(q): QuestionEncoding(**template) for q in question_ids})


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Encoded feature table with per-sample weights and labels.

    ``values`` is an integer array of shape (n_samples, n_features). Labels
    are 1 for positive, 0 for negative. ``augmented`` flags rows added by
    training-set augmentation.
    """

    feature_names: tuple[str, ...]
    values: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    subject_ids: tuple[str, ...]
    age_months: np.ndarray
    pruned: tuple[str, ...] = ()
    augmented: np.ndarray | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ParameterError("feature values must be two-dimensional")
        n, p = values.shape
        if p != len(self.feature_names):
            raise ParameterError(f"{p} columns but {len(self.feature_names)} feature names")
        if len(set(self.feature_names)) != p:
            raise ParameterError("feature names must be unique")
        weights = np.asarray(self.weights, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int8)
        ages = np.asarray(self.age_months, dtype=np.int64)
        if weights.shape != (n,) or labels.shape != (n,) or ages.shape != (n,) or len(self.subject_ids) != n:
            raise ParameterError("per-sample arrays must match the number of rows")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise ParameterError("sample weights must be finite and > 0")
        augmented = np.zeros(n, bool) if self.augmented is None else np.asarray(self.augmented, bool)
        for name, arr in (("values", values), ("weights", weights), ("labels", labels),
                          ("age_months", ages), ("augmented", augmented)):
            arr = arr.copy() if arr.flags.writeable else arr
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.n_samples

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def select(self, names: Iterable[str]) -> "FeatureMatrix":
        names = list(names)
        index = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise ParameterError(f"unknown features: {missing[:5]}")
        return replace(self, feature_names=tuple(names), values=self.values[:, [index[n] for n in names]])

    def subset(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return replace(
            self,
            values=self.values[rows],
            weights=self.weights[rows],
            labels=self.labels[rows],
            subject_ids=tuple(self.subject_ids[i] for i in rows),
            age_months=self.age_months[rows],
            augmented=self.augmented[rows],
        )

    def with_weights(self, weights) -> "FeatureMatrix":
        return replace(self, weights=np.asarray(weights, dtype=np.float64))

    def with_columns(self, names, values) -> "FeatureMatrix":
        values = np.asarray(values).reshape(self.n_samples, -1)
        return replace(
            self,
            feature_names=self.feature_names + tuple(names),
            values=np.hstack([self.values, values]).astype(np.result_type(self.values, values)),
        )

    def prune_constant(self) -> "FeatureMatrix":
        return _prune(self)


# ---------------------------------------------------------------------------
# column construction

def _feature_table(qid: str, enc: QuestionEncoding, mode: str):
    """Return (names, table) where table[code] is the feature row for that code."""
    q = f"q{qid}"
    if mode == "one_hot":
        names = [f"{q}=={c}" for c in enc.codes]
        rows = {c: [int(c == d) for d in enc.codes] for c in enc.codes}
    elif mode == "severity":
        base, upper = enc.chain[0], enc.chain[1:]
        names = [f"{q}=={base}"] + [f"{q}>={c}" for c in upper] + [f"{q}=={c}" for c in enc.equality]
        rows = {}
        for c in enc.codes:
            level = enc.severity_level(c)
            row = [int(c == base)]
            row += [int(level is not None and level >= j) for j in range(1, len(enc.chain))]
            row += [int(c == e) for e in enc.equality]
            rows[c] = row
    elif mode == "presence":
        names = [f"{q}.observed"]
        rows = {c: [int(c in enc.observed_codes)] for c in enc.codes}
    else:
        raise ParameterError(f"unknown encoding mode {mode!r}")
    table = np.full((MAX_CODE + 1, len(names)), -1, dtype=np.int32)
    for c, row in rows.items():
        table[c] = row
    return names, table


def _encode_question(qid, enc, mode, codes, subject_ids):
    names, table = _feature_table(qid, enc, mode)
    codes = np.asarray(codes, dtype=np.int64)
    bad = (codes < 0) | (codes > MAX_CODE)
    safe = np.where(bad, 0, codes)
    out = table[safe]
    bad |= out[:, 0] < 0
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise EncodingError(
            f"undeclared answer code {int(codes[i])} for question {qid} "
            f"(row {i}, subject {subject_ids[i]}); declared {list(enc.codes)}")
    return names, out


def _demographic_columns(ages, genders):
    ages = np.asarray(ages, dtype=np.int64)
    male = np.array([g == "male" for g in genders], dtype=np.int32)
    return [AGE_FEATURE, GENDER_FEATURE], np.column_stack([ages, male]).astype(np.int32)


def _prune(matrix: FeatureMatrix) -> FeatureMatrix:
    v = matrix.values
    if v.shape[0] == 0:
        return matrix
    constant = np.all(v == v[0], axis=0)
    if not constant.any():
        return matrix
    pruned = tuple(n for n, c in zip(matrix.feature_names, constant) if c)
    log.info("pruned %d constant feature column(s)", len(pruned))
    keep = [n for n, c in zip(matrix.feature_names, constant) if not c]
    out = matrix.select(keep)
    return replace(out, pruned=matrix.pruned + pruned)


def _encode(data, spec: EncodingSpec, mode: str, *, require_mode: bool = True,
            prune: bool = True) -> FeatureMatrix:
    names, blocks = [], []
    for j, qid in enumerate(data.question_ids):
        if qid not in spec:
            raise EncodingError(f"question {qid} has no encoding declaration")
        enc = spec[qid]
        if require_mode and enc.mode != mode:
            raise EncodingError(f"question {qid} is declared {enc.mode!r}, not {mode!r}")
        qn, block = _encode_question(qid, enc, mode, data.answers[:, j], data.subject_ids)
        names += qn
        blocks.append(block)
    dn, dblock = _demographic_columns(data.age_months, data.gender)
    names += dn
    blocks.append(dblock)
    matrix = FeatureMatrix(
        feature_names=tuple(names),
        values=np.hstack(blocks).astype(np.int32),
        weights=np.ones(len(data.subject_ids)),
        labels=data.labels,
        subject_ids=data.subject_ids,
        age_months=data.age_months,
    )
    return _prune(matrix) if prune else matrix


def one_hot_encode(data, spec: EncodingSpec) -> FeatureMatrix:
    """One binary column per (question, declared code), plus age and gender."""
    return _encode(data, spec, "one_hot")


def severity_encode(data, spec: EncodingSpec) -> FeatureMatrix:
    """Cumulative severity-threshold encoding.

    For a chain ``0<1<2<3`` with equality code 7 and null codes 8, 9 the
    question yields ``==0, >=1, >=2, >=3, ==7``. A chain code at level k
    sets every ``>=`` feature up to level k; null codes set nothing.
    """
    return _encode(data, spec, "severity")


def presence_encode(data, spec: EncodingSpec) -> FeatureMatrix:
    """One bit per question: 1 iff the answer code is in ``observed_codes``.

    A 0 means the behavior was not observed, which is not the same as
    absent.
    """
    return _encode(data, spec, "presence")


ENCODERS = {"one_hot": one_hot_encode, "severity": severity_encode, "presence": presence_encode}


def encode(data, spec: EncodingSpec, mode: str) -> FeatureMatrix:
    if mode not in ENCODERS:
        raise ParameterError(f"unknown encoding mode {mode!r}")
    return ENCODERS[mode](data, spec.with_mode(mode))


# ---------------------------------------------------------------------------
# aggregates

@dataclass(frozen=True)
class AggregateColumns:
    """Aggregate severity features for a set of questions.

    ``values`` holds the binary and count columns named in ``feature_names``;
    ``raw`` keeps the unthresholded min/max/mean (NaN where undefined).
    """

    feature_names: tuple[str, ...]
    values: np.ndarray
    raw: dict
    questions: tuple[str, ...]


def aggregate_feature_names(max_level: int) -> tuple[str, ...]:
    names = []
    for stat in ("min", "max", "mean"):
        names += [f"agg.{stat}_severity>={k}" for k in range(1, max_level + 1)]
    names += [f"agg.count_level{k}" for k in range(max_level + 1)]
    names.append("agg.count_other")
    return tuple(names)


def _aggregate_rows(levels: np.ndarray, other: np.ndarray, max_level: int):
    """levels: (n, q) float with NaN for codes outside the chain."""
    defined = ~np.isnan(levels)
    any_defined = defined.any(axis=1)
    filled = np.where(defined, levels, 0.0)
    mn = np.where(any_defined, np.where(defined, levels, np.inf).min(axis=1), np.nan)
    mx = np.where(any_defined, np.where(defined, levels, -np.inf).max(axis=1), np.nan)
    mean = np.where(any_defined, filled.sum(axis=1) / np.maximum(defined.sum(axis=1), 1), np.nan)
    cols = []
    for stat in (mn, mx, mean):
        for k in range(1, max_level + 1):
            # NaN compares False, so undefined samples encode as all-false
            cols.append(np.nan_to_num(stat, nan=-1.0) >= k)
    for k in range(max_level + 1):
        cols.append((levels == k).sum(axis=1))
    cols.append(other.sum(axis=1))
    values = np.column_stack(cols).astype(np.int32)
    return values, {"min": mn, "max": mx, "mean": mean}


def _levels_for(answers: np.ndarray, question_ids, spec: EncodingSpec):
    n = answers.shape[0]
    levels = np.full((n, len(question_ids)), np.nan)
    other = np.zeros((n, len(question_ids)), dtype=np.int32)
    max_level = 0
    for j, qid in enumerate(question_ids):
        enc = spec[qid]
        if enc.mode != "severity" and len(enc.chain) < 2:
            raise ParameterError(f"question {qid} has no severity chain for aggregates")
        max_level = max(max_level, len(enc.chain) - 1)
        lut = np.full(MAX_CODE + 1, np.nan)
        for lvl, c in enumerate(enc.chain):
            lut[c] = lvl
        col = np.asarray(answers[:, j], dtype=np.int64)
        if np.any((col < 0) | (col > MAX_CODE)) or not np.isin(col, enc.codes).all():
            bad = col[~np.isin(col, enc.codes)][0]
            raise EncodingError(f"undeclared answer code {int(bad)} for question {qid}")
        levels[:, j] = lut[col]
        other[:, j] = np.isin(col, enc.equality)
    return levels, other, max_level


def aggregates(data, questions: Iterable[str], spec: EncodingSpec) -> AggregateColumns:
    """Min/max/mean severity and per-level counts over ``questions``.

    Null-coded and equality-coded answers are left out of min/max/mean;
    equality codes are counted in ``agg.count_other``. Min/max/mean are
    thresholded at every integer level to keep the matrix binary.
    """
    questions = tuple(str(q) for q in questions)
    if not questions:
        raise ParameterError("aggregates need at least one question")
    index = {q: j for j, q in enumerate(data.question_ids)}
    missing = [q for q in questions if q not in index]
    if missing:
        raise ParameterError(f"questions not in dataset: {missing}")
    answers = data.answers[:, [index[q] for q in questions]]
    levels, other, max_level = _levels_for(answers, questions, spec)
    values, raw = _aggregate_rows(levels, other, max_level)
    return AggregateColumns(aggregate_feature_names(max_level), values, raw, questions)


def backing_questions(feature_names: Iterable[str]) -> tuple[str, ...]:
    """Question ids referenced by feature names, in first-seen order."""
    out = []
    for name in feature_names:
        qid = question_of(name)
        if qid is not None and qid not in out:
            out.append(qid)
    return tuple(out)


def question_of(feature_name: str) -> str | None:
    if not feature_name.startswith("q"):
        return None
    for sep in ("==", ">=", ".observed"):
        if sep in feature_name:
            return feature_name[1:feature_name.index(sep)]
    return None


# ---------------------------------------------------------------------------
# runtime encoding

def encode_responses(responses: Mapping, feature_names, encoding: EncodingSpec, mode: str,
                     aggregate_questions=(), age_months=None, gender="unknown") -> np.ndarray:
    """Encode one subject's responses into exactly ``feature_names``, in order."""
    responses = {str(k): v for k, v in responses.items()}
    feature_names = tuple(feature_names)
    needed = list(backing_questions(feature_names))
    for q in aggregate_questions:
        if str(q) not in needed:
            needed.append(str(q))
    missing = [q for q in needed if q not in responses]
    if AGE_FEATURE in feature_names and age_months is None:
        missing.append(AGE_FEATURE)
    if missing:
        raise MissingResponsesError(missing)

    values: dict[str, int] = {}
    for qid in sorted(needed, key=str):
        enc = encoding[qid]
        code = responses[qid]
        try:
            code = int(code)
        except (TypeError, ValueError):
            raise EncodingError(f"answer for question {qid} is not an integer code: {code!r}") from None
        names, table = _feature_table(qid, enc, mode)
        if not 0 <= code <= MAX_CODE or table[code, 0] < 0:
            raise EncodingError(
                f"undeclared answer code {code} for question {qid}; declared {list(enc.codes)}")
        values.update(zip(names, table[code].tolist()))
    if aggregate_questions:
        qs = tuple(str(q) for q in aggregate_questions)
        answers = np.array([[int(responses[q]) for q in qs]])
        levels, other, max_level = _levels_for(answers, qs, encoding)
        agg_values, _ = _aggregate_rows(levels, other, max_level)
        values.update(zip(aggregate_feature_names(max_level), agg_values[0].tolist()))
    if age_months is not None:
        values[AGE_FEATURE] = int(age_months)
    values[GENDER_FEATURE] = int(gender == "male")
    try:
        return np.array([values[n] for n in feature_names], dtype=np.int32)
    except KeyError as exc:
        raise EncodingError(f"cannot produce feature {exc.args[0]!r} from responses") from None
