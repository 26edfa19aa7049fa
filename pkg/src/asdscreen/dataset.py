"""Score-sheet datasets, CSV ingestion and the synthetic score-sheet generator."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .encoding import INSTRUMENTS, EncodingSpec, build_encoding_spec
from .errors import ParameterError, SchemaError, StratificationError, ValidationError

AGE_MIN, AGE_MAX = 18, 84
GENDERS = ("male", "female", "unknown")
LABELS = ("negative", "positive")
REQUIRED_COLUMNS = ("subject_id", "age_months", "gender", "label")
SILO_BOUNDARY = 48


@dataclass(frozen=True)
class ScoreSheet:
    subject_id: str
    age_months: int
    gender: str
    answers: Mapping[str, int]
    label: str


@dataclass(frozen=True)
class GroundTruth:
    """Questions the synthetic generator planted signal into."""

    informative: tuple[str, ...]
    young_only: tuple[str, ...] = ()
    old_only: tuple[str, ...] = ()

    @property
    def shared(self) -> tuple[str, ...]:
        age = set(self.young_only) | set(self.old_only)
        return tuple(q for q in self.informative if q not in age)

    def to_dict(self) -> dict:
        return {"informative": list(self.informative), "shared": list(self.shared),
                "young_only": list(self.young_only), "old_only": list(self.old_only)}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of score sheets for one instrument.

    Stored column-wise: ``answers`` is an (n_subjects, n_questions) integer
    array whose columns follow ``question_ids``; ``labels`` holds 1 for
    positive and 0 for negative.
    """

    subject_ids: tuple[str, ...]
    age_months: np.ndarray
    gender: tuple[str, ...]
    labels: np.ndarray
    question_ids: tuple[str, ...]
    answers: np.ndarray
    instrument: str
    provenance: str = ""
    ground_truth: GroundTruth | None = field(default=None, compare=False)

    def __post_init__(self):
        ids = tuple(str(s) for s in self.subject_ids)
        n = len(ids)
        if len(set(ids)) != n:
            raise ParameterError("subject_ids must be unique within a dataset")
        if self.instrument not in INSTRUMENTS:
            raise ParameterError(f"unknown instrument {self.instrument!r}")
        qids = tuple(str(q) for q in self.question_ids)
        ages = np.asarray(self.age_months, dtype=np.int64).reshape(n)
        labels = np.asarray(self.labels, dtype=np.int8).reshape(n)
        answers = np.asarray(self.answers, dtype=np.int16).reshape(n, len(qids))
        gender = tuple(self.gender)
        if len(gender) != n:
            raise ParameterError("gender must have one entry per subject")
        for name, arr in (("age_months", ages), ("labels", labels), ("answers", answers)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "question_ids", qids)
        object.__setattr__(self, "gender", gender)

    def __len__(self):
        return len(self.subject_ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.subject_ids == other.subject_ids
                and self.question_ids == other.question_ids
                and self.gender == other.gender
                and self.instrument == other.instrument
                and self.provenance == other.provenance
                and np.array_equal(self.age_months, other.age_months)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.answers, other.answers))

    def __repr__(self):
        return (f"Dataset({self.instrument}, n={len(self)}, questions={len(self.question_ids)}, "
                f"positives={int(self.labels.sum())})")

    @property
    def sheets(self) -> list[ScoreSheet]:
        return [
            ScoreSheet(
                subject_id=sid,
                age_months=int(self.age_months[i]),
                gender=self.gender[i],
                answers=dict(zip(self.question_ids, self.answers[i].tolist())),
                label=LABELS[self.labels[i]],
            )
            for i, sid in enumerate(self.subject_ids)
        ]

    @classmethod
    def from_sheets(cls, sheets: Sequence[ScoreSheet], instrument: str, provenance: str = "") -> "Dataset":
        if not sheets:
            raise ParameterError("cannot build a dataset from zero sheets")
        qids = tuple(sheets[0].answers)
        for s in sheets:
            if set(s.answers) != set(qids):
                raise ParameterError(f"sheet {s.subject_id} does not share the question universe")
        return cls(
            subject_ids=tuple(s.subject_id for s in sheets),
            age_months=[s.age_months for s in sheets],
            gender=tuple(s.gender for s in sheets),
            labels=[LABELS.index(s.label) for s in sheets],
            question_ids=qids,
            answers=[[s.answers[q] for q in qids] for s in sheets],
            instrument=instrument,
            provenance=provenance,
        )

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return Dataset(
            subject_ids=tuple(self.subject_ids[i] for i in rows),
            age_months=self.age_months[rows],
            gender=tuple(self.gender[i] for i in rows),
            labels=self.labels[rows],
            question_ids=self.question_ids,
            answers=self.answers[rows],
            instrument=self.instrument,
            provenance=self.provenance,
            ground_truth=self.ground_truth,
        )

    def select_questions(self, question_ids) -> "Dataset":
        index = {q: j for j, q in enumerate(self.question_ids)}
        cols = [index[str(q)] for q in question_ids]
        return Dataset(self.subject_ids, self.age_months, self.gender, self.labels,
                       tuple(str(q) for q in question_ids), self.answers[:, cols],
                       self.instrument, self.provenance, self.ground_truth)

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        first = parts[0]
        for p in parts[1:]:
            if p.question_ids != first.question_ids or p.instrument != first.instrument:
                raise ParameterError("datasets do not share an instrument/question universe")
        return Dataset(
            subject_ids=sum((p.subject_ids for p in parts), ()),
            age_months=np.concatenate([p.age_months for p in parts]),
            gender=sum((p.gender for p in parts), ()),
            labels=np.concatenate([p.labels for p in parts]),
            question_ids=first.question_ids,
            answers=np.vstack([p.answers for p in parts]),
            instrument=first.instrument,
            provenance=first.provenance,
            ground_truth=first.ground_truth,
        )


# ---------------------------------------------------------------------------
# CSV

def write_csv(data: Dataset, path) -> None:
    header = list(REQUIRED_COLUMNS) + [f"q_{q}" for q in data.question_ids]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, sid in enumerate(data.subject_ids):
            w.writerow([sid, int(data.age_months[i]), data.gender[i], LABELS[data.labels[i]]]
                       + data.answers[i].tolist())


def load_csv(path, instrument: str, spec: EncodingSpec, provenance: str | None = None) -> Dataset:
    """Read and validate a score-sheet CSV.

    Every bad row is reported; nothing is dropped silently. Raises
    :class:`SchemaError` for header problems and :class:`ValidationError`
    listing each (row, field, value) violation otherwise.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)

    header = [h.strip() for h in header]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing required column(s) {missing}")
    qcols = [h for h in header if h not in REQUIRED_COLUMNS]
    bad_cols = [h for h in qcols if not h.startswith("q_")]
    if bad_cols:
        raise SchemaError(f"{path}: unexpected column(s) {bad_cols}; question columns are q_<id>")
    qids = [h[2:] for h in qcols]
    unknown = [q for q in qids if q not in spec]
    if unknown:
        raise SchemaError(f"{path}: question(s) {unknown[:10]} not declared in the encoding spec")
    if not qids:
        raise SchemaError(f"{path}: no question columns")
    col = {h: j for j, h in enumerate(header)}

    issues = []
    ids, ages, genders, labels, answers = [], [], [], [], []

    def issue(rownum, field_, value, message):
        issues.append({"row": rownum, "field": field_, "value": value,
                       "message": f"row {rownum}: {message}"})

    for r, row in enumerate(rows, start=2):  # header is line 1
        if not row:
            continue
        if len(row) != len(header):
            issue(r, None, None, f"expected {len(header)} fields, got {len(row)}")
            continue
        sid = row[col["subject_id"]].strip()
        ids.append(sid)
        try:
            age = int(row[col["age_months"]])
        except ValueError:
            issue(r, "age_months", row[col["age_months"]], "age_months is not an integer")
            age = -1
        else:
            if not AGE_MIN <= age <= AGE_MAX:
                issue(r, "age_months", age, f"age_months={age} outside {AGE_MIN}..{AGE_MAX}")
        ages.append(age)
        g = row[col["gender"]].strip().lower() or "unknown"
        if g not in GENDERS:
            issue(r, "gender", g, f"gender {g!r} not one of {GENDERS}")
        genders.append(g)
        lab = row[col["label"]].strip().lower()
        if lab not in LABELS:
            issue(r, "label", lab, f"label {lab!r} not one of {LABELS}")
        labels.append(LABELS.index(lab) if lab in LABELS else 0)
        codes = []
        for q, h in zip(qids, qcols):
            raw = row[col[h]].strip()
            try:
                code = int(raw)
            except ValueError:
                issue(r, h, raw, f"question {q}: answer {raw!r} is not an integer code")
                code = -1
            else:
                if code not in spec[q].codes:
                    issue(r, h, code, f"question {q}: undeclared answer code {code} "
                                      f"(declared {list(spec[q].codes)})")
            codes.append(code)
        answers.append(codes)

    seen = set()
    for r, sid in enumerate(ids, start=2):
        if sid in seen:
            issue(r, "subject_id", sid, f"duplicate subject_id {sid!r}")
        seen.add(sid)
    if issues:
        raise ValidationError(issues)
    if not ids:
        raise SchemaError(f"{path}: no data rows")
    return Dataset(tuple(ids), ages, tuple(genders), labels, tuple(qids), answers,
                   instrument, provenance if provenance is not None else path.name)


def write_ground_truth(truth: GroundTruth, path) -> None:
    Path(path).write_text(json.dumps(truth.to_dict(), indent=1) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# synthetic generator

@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-signal score-sheet generator.

    ``age_signal_shift`` is the fraction of informative questions whose
    signal is confined to one age group (half to < 48 months, half to
    >= 48). ``noise_rate`` is the probability that an informative answer is
    replaced by a label-independent draw.
    """

    n_questions: int = 155
    n_informative: int = 15
    n_samples: int = 1000
    positive_fraction: float = 0.5
    age_signal_shift: float = 0.0
    noise_rate: float = 0.0
    seed: int = 0
    instrument: str = "adir_like"

    def __post_init__(self):
        if self.n_questions < 1:
            raise ParameterError("n_questions must be >= 1")
        if not 0 <= self.n_informative <= self.n_questions:
            raise ParameterError("n_informative must lie in 0..n_questions")
        if self.n_samples < 2:
            raise ParameterError("n_samples must be >= 2")
        if not 0 < self.positive_fraction < 1:
            raise ParameterError("positive_fraction must lie in (0, 1)")
        if not 0 <= self.age_signal_shift <= 1:
            raise ParameterError("age_signal_shift must lie in [0, 1]")
        if not 0 <= self.noise_rate < 1:
            raise ParameterError("noise_rate must lie in [0, 1)")
        if self.instrument not in INSTRUMENTS:
            raise ParameterError(f"unknown instrument {self.instrument!r}")


# Chain-code distributions for informative questions (codes 0..3); the
# remaining mass goes to the non-chain codes identically for both labels.
_POSITIVE_CHAIN = np.array([0.01, 0.04, 0.45, 0.50])
_NEGATIVE_CHAIN = np.array([0.50, 0.45, 0.04, 0.01])
_OFF_CHAIN_MASS = 0.06


def _question_distributions(enc, rng):
    codes = np.array(enc.codes)
    chain_idx = np.array([list(codes).index(c) for c in enc.chain])
    off_idx = np.array([i for i, c in enumerate(codes) if c not in enc.chain], dtype=int)

    background = np.zeros(len(codes))
    background[chain_idx] = rng.dirichlet(np.full(len(chain_idx), 2.0)) * (1 - _OFF_CHAIN_MASS)
    off = rng.dirichlet(np.full(len(off_idx), 2.0)) * _OFF_CHAIN_MASS if len(off_idx) else []
    background[off_idx] = off

    def informative(chain_probs):
        p = np.zeros(len(codes))
        p[chain_idx] = chain_probs * (1 - _OFF_CHAIN_MASS)
        p[off_idx] = off
        return p / p.sum()

    return codes, background / background.sum(), informative(_NEGATIVE_CHAIN), informative(_POSITIVE_CHAIN)


def _draw(rng, codes, probs, size):
    return codes[rng.choice(len(codes), size=size, p=probs)]


def generate_synthetic(spec: SyntheticSpec, subjects: Dataset | None = None) -> Dataset:
    """Draw a planted-signal dataset.

    Informative questions draw higher severity codes for positives;
    non-informative ones share one label-independent distribution. When
    ``subjects`` is given its ids, ages, genders and labels are reused so
    that a second instrument can be generated for the same children.
    """
    rng = np.random.default_rng(spec.seed)
    qids = tuple(str(i + 1) for i in range(spec.n_questions))
    enc_spec = build_encoding_spec(spec.instrument, qids)

    if subjects is None:
        n = spec.n_samples
        n_pos = int(round(n * spec.positive_fraction))
        labels = np.zeros(n, dtype=np.int8)
        labels[:n_pos] = 1
        labels = rng.permutation(labels)
        ages = rng.integers(AGE_MIN, AGE_MAX + 1, size=n)
        gender = tuple(rng.choice(["male", "female", "unknown"], size=n, p=[0.49, 0.49, 0.02]).tolist())
        width = len(str(n))
        ids = tuple(f"S{i:0{width}d}" for i in range(n))
    else:
        if len(subjects) != spec.n_samples:
            raise ParameterError("n_samples must match the reused subjects")
        n, labels, ages = len(subjects), subjects.labels, subjects.age_months
        gender, ids = subjects.gender, subjects.subject_ids

    order = rng.permutation(spec.n_questions)
    informative = sorted(order[: spec.n_informative].tolist())
    n_age = int(round(spec.age_signal_shift * spec.n_informative))
    age_specific = rng.permutation(informative)[:n_age].tolist() if n_age else []
    young_only = sorted(age_specific[: (n_age + 1) // 2])
    old_only = sorted(age_specific[(n_age + 1) // 2:])

    young = ages < SILO_BOUNDARY
    answers = np.empty((n, spec.n_questions), dtype=np.int16)
    for j, qid in enumerate(qids):
        codes, background, neg, pos = _question_distributions(enc_spec[qid], rng)
        col = _draw(rng, codes, background, n)
        if j in informative:
            active = np.ones(n, bool)
            if j in young_only:
                active = young
            elif j in old_only:
                active = ~young
            signal = active & (rng.random(n) >= spec.noise_rate)
            pos_rows = signal & (labels == 1)
            neg_rows = signal & (labels == 0)
            col[pos_rows] = _draw(rng, codes, pos, int(pos_rows.sum()))
            col[neg_rows] = _draw(rng, codes, neg, int(neg_rows.sum()))
        answers[:, j] = col

    name = lambda idx: tuple(qids[i] for i in idx)  # noqa: E731
    truth = GroundTruth(name(informative), name(young_only), name(old_only))
    return Dataset(ids, ages, gender, labels, qids, answers, spec.instrument,
                   provenance=f"synthetic:seed={spec.seed}", ground_truth=truth)


# ---------------------------------------------------------------------------
# splitting

def stratified_subsample(labels, fraction: float, rng, minimum: int = 1) -> np.ndarray:
    """Indices of a label-stratified subsample without replacement (sorted)."""
    labels = np.asarray(labels)
    picked = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        k = int(round(fraction * len(members)))
        k = min(max(k, minimum), len(members))
        picked.append(rng.permutation(members)[:k])
    return np.sort(np.concatenate(picked))


def split_holdout(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Label-stratified split into (training, holdout)."""
    if not 0 < fraction < 1:
        raise ParameterError("holdout fraction must lie in (0, 1)")
    for c, name in enumerate(LABELS):
        if np.sum(data.labels == c) < 2:
            raise StratificationError(f"class {name!r} has fewer than 2 members; cannot stratify")
    rng = np.random.default_rng(seed)
    held = []
    for c in (0, 1):
        members = np.flatnonzero(data.labels == c)
        k = int(round(fraction * len(members)))
        k = min(max(k, 1), len(members) - 1)
        held.append(rng.permutation(members)[:k])
    mask = np.zeros(len(data), bool)
    mask[np.concatenate(held)] = True
    return data.subset(~mask), data.subset(mask)
