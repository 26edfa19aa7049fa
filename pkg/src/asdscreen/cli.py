"""Command-line front end.

Every command writes into ``--out`` (a run directory) and records a
``manifest.json`` with the resolved configuration and content hashes of
its inputs and outputs. Settings resolve as: flags, then ``--config``
file, then defaults. Errors go to stderr as JSON, with an exit status
per error kind.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (LABELS, REQUIRED_COLUMNS, Dataset, SyntheticSpec, generate_synthetic, load_csv,
                      write_csv, write_ground_truth)
from .encoding import INSTRUMENTS, MODES, EncodingSpec, build_encoding_spec, encode
from .errors import ParameterError, SchemaError, ScreeningError, ValidationError
from .evaluation import balance_weights, binary_metrics, forest_trainer, roc, tune_threshold
from .learners import set_threads
from .pipeline import (LADDER, CombinedScreener, PipelineConfig, ScreenerArtifact, band_metrics,
                       calibrate_band, screen, train_combined, train_variant)
from .pipeline.artifacts import dump_json, read_json
from .pipeline.variants import Recipe, clean_json, select_features, silo_split
from .selection import DEFAULT_FRACTIONS, progressive_sampling

log = logging.getLogger("asdscreen")

IO_EXIT = 12

# flag dest -> path into the resolved config
PIPELINE_FLAGS = {
    "n_trees": ("pipeline", "forest", "n_trees"),
    "max_depth": ("pipeline", "forest", "max_depth"),
    "n_folds": ("pipeline", "cv", "n_folds"),
    "rounds": ("pipeline", "cv", "n_bootstrap_rounds"),
    "n_bootstrap": ("pipeline", "selection", "n_bootstrap"),
    "final_k": ("pipeline", "selection", "final_k"),
    "candidate_pool": ("pipeline", "selection", "candidate_pool"),
    "max_inconclusive_rate": ("pipeline", "max_inconclusive_rate"),
    "target_sensitivity": ("pipeline", "target_sensitivity"),
    "silo_boundary": ("pipeline", "silo", "boundary_months"),
}
GLOBAL_DESTS = {"command", "config", "out", "threads", "verbose"}


# ---------------------------------------------------------------------------
# configuration

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set_path(d: dict, path, value) -> None:
    for key in path[:-1]:
        d = d.setdefault(key, {})
    d[path[-1]] = value


def resolve_config(args, defaults: dict) -> dict:
    """Flags override the config file, which overrides ``defaults``."""
    cfg = copy.deepcopy(defaults)
    if args.config:
        file_cfg = read_json(args.config)
        if not isinstance(file_cfg, dict):
            raise SchemaError(f"{args.config}: config must be a JSON object")
        cfg = _merge(cfg, file_cfg)
    for dest, value in vars(args).items():
        if dest in GLOBAL_DESTS or value is None:
            continue
        if dest in PIPELINE_FLAGS:
            _set_path(cfg, PIPELINE_FLAGS[dest], value)
        else:
            cfg[dest] = value
    return cfg


def pipeline_config(cfg: dict) -> PipelineConfig:
    seed = int(cfg.get("seed", 0))
    seeded = {k: {"seed": seed} for k in ("forest", "selection", "cv", "injection")}
    return PipelineConfig.from_dict(_merge(seeded, cfg.get("pipeline", {})))


# ---------------------------------------------------------------------------
# files

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunDir:
    def __init__(self, path, command: str, config: dict):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.inputs: dict = {}
        self.outputs: list[str] = []

    def input(self, role: str, path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"input file not found: {path}")
        self.inputs[role] = {"file": path.name, "sha256": sha256_file(path)}
        return path

    def file(self, name: str) -> Path:
        if name not in self.outputs:
            self.outputs.append(name)
        return self.path / name

    def json(self, name: str, obj) -> None:
        dump_json(clean_json(obj), self.file(name))

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "package_version": __version__,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": {n: sha256_file(self.path / n) for n in sorted(self.outputs)},
        }
        dump_json(clean_json(manifest), self.path / "manifest.json")


def _encoding_spec(cfg: dict, run: RunDir, instrument: str) -> EncodingSpec:
    if cfg.get("encoding_spec"):
        return EncodingSpec.load(run.input("encoding_spec", cfg["encoding_spec"]))
    return EncodingSpec.for_instrument(instrument)


def _load(cfg: dict, run: RunDir, key: str = "data", instrument_key: str = "instrument") -> Dataset:
    if not cfg.get(key):
        raise ParameterError(f"--{key.replace('_', '-')} is required")
    instrument = cfg.get(instrument_key) or "adir_like"
    path = run.input(key, cfg[key])
    return load_csv(path, instrument, _encoding_spec(cfg, run, instrument))


def _read_subjects(path) -> Dataset:
    """Demographics and labels from any score-sheet CSV, ignoring answers."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or any(c not in rows[0] for c in REQUIRED_COLUMNS):
        raise SchemaError(f"{path}: missing required column(s) {list(REQUIRED_COLUMNS)}")
    return Dataset(
        tuple(r["subject_id"] for r in rows), [int(r["age_months"]) for r in rows],
        tuple(r["gender"] for r in rows), [LABELS.index(r["label"]) for r in rows],
        (), np.zeros((len(rows), 0), dtype=np.int16), "adir_like",
    )


def _write_scores(path, ids, labels, weights, scores) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label", "weight", "score"])
        for sid, y, wt, s in zip(ids, labels, weights, scores):
            w.writerow([sid, LABELS[int(y)], repr(float(wt)), repr(float(s))])


def _read_scores(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "label" not in rows[0] or "score" not in rows[0]:
        raise SchemaError(f"{path}: score files need 'label' and 'score' columns")
    try:
        labels = np.array([LABELS.index(r["label"].strip().lower()) for r in rows])
        scores = np.array([float(r["score"]) for r in rows])
        weights = np.array([float(r.get("weight") or 1.0) for r in rows])
    except ValueError as exc:
        raise SchemaError(f"{path}: bad score row ({exc})") from None
    ids = [r.get("subject_id", str(i)) for i, r in enumerate(rows)]
    return ids, labels, weights, scores


# ---------------------------------------------------------------------------
# commands

def cmd_generate(cfg: dict, run: RunDir) -> None:
    spec = SyntheticSpec(
        n_questions=int(cfg["n_questions"]), n_informative=int(cfg["n_informative"]),
        n_samples=int(cfg["n_samples"]), positive_fraction=float(cfg["positive_fraction"]),
        age_signal_shift=float(cfg["age_signal_shift"]), noise_rate=float(cfg["noise_rate"]),
        seed=int(cfg["seed"]), instrument=cfg["instrument"],
    )
    subjects = None
    if cfg.get("subjects"):
        subjects = _read_subjects(run.input("subjects", cfg["subjects"]))
        spec = replace(spec, n_samples=len(subjects))
    data = generate_synthetic(spec, subjects)
    write_csv(data, run.file("data.csv"))
    write_ground_truth(data.ground_truth, run.file("ground_truth.json"))
    build_encoding_spec(spec.instrument, data.question_ids).save(run.file("encoding_spec.json"))


def cmd_validate(cfg: dict, run: RunDir) -> None:
    try:
        data = _load(cfg, run)
    except ValidationError as exc:
        run.json("validation.json", {"valid": False, "issues": exc.issues})
        run.finish()
        raise
    run.json("validation.json", {
        "valid": True, "n_rows": len(data), "n_questions": len(data.question_ids),
        "class_counts": {LABELS[c]: int(np.sum(data.labels == c)) for c in (0, 1)},
        "issues": [],
    })


def cmd_select(cfg: dict, run: RunDir) -> None:
    data = _load(cfg, run)
    pc = pipeline_config(cfg)
    if cfg["silo"] != "all":
        data = silo_split(data, pc.silo)[cfg["silo"]]
    recipe = Recipe(cfg["encoding"], cfg["method"], False)
    spec = _encoding_spec(cfg, run, data.instrument).subset(data.question_ids)
    matrix = encode(data, spec, recipe.encoding)
    matrix = matrix.with_weights(balance_weights(matrix, pc.age_groups).weights)
    selected, report = select_features(matrix, recipe, pc)
    out = {"method": recipe.selection, "encoding": recipe.encoding, "silo": cfg["silo"],
           "selected": list(selected), "pruned": list(matrix.pruned)}
    if report is not None:
        out.update(report.to_dict())
        with open(run.file("tally.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "count"])
            for name, count in sorted(report.tally.items(), key=lambda kv: (-kv[1], kv[0])):
                w.writerow([name, count])
    run.json("selection.json", out)


def cmd_train(cfg: dict, run: RunDir) -> None:
    data = _load(cfg, run)
    pc = pipeline_config(cfg)
    spec = _encoding_spec(cfg, run, data.instrument).subset(data.question_ids)
    result = train_variant(data, cfg["variant"], pc, spec)
    for silo, art in sorted(result.artifacts.items()):
        art.save(run.file(f"screener_{silo}.json"))
        cv = result.silo_cv[silo]
        _write_scores(run.file(f"oof_{silo}.csv"), _silo_ids(data, pc, silo), cv.labels, cv.weights,
                      cv.mean_oof())
    for silo, report in sorted(result.selections.items()):
        report.save(run.file(f"selection_{silo}.json"))
    run.json("metrics.json", result.summary())


def _silo_ids(data: Dataset, pc: PipelineConfig, silo: str):
    if silo == "all":
        return data.subject_ids
    return silo_split(data, pc.silo)[silo].subject_ids


def cmd_calibrate(cfg: dict, run: RunDir) -> None:
    if not cfg.get("scores"):
        raise ParameterError("--scores is required")
    ids, labels, weights, scores = _read_scores(run.input("scores", cfg["scores"]))
    rate = float(cfg.get("pipeline", {}).get("max_inconclusive_rate", 0.25))
    target = float(cfg.get("pipeline", {}).get("target_sensitivity", 0.8))
    band = calibrate_band(scores, labels, weights, rate, target)
    run.json("band.json", {"band": band.to_dict(), "max_inconclusive_rate": rate,
                           "metrics": band_metrics(band, scores, labels, weights)})
    if cfg.get("artifact"):
        art = ScreenerArtifact.load(run.input("artifact", cfg["artifact"]))
        meta = dict(art.metadata, max_inconclusive_rate=rate,
                    band_metrics=band_metrics(band, scores, labels, weights))
        replace(art, band=band, metadata=clean_json(meta)).save(run.file("screener.json"))


def cmd_evaluate(cfg: dict, run: RunDir) -> None:
    if cfg.get("scores"):
        ids, labels, weights, scores = _read_scores(run.input("scores", cfg["scores"]))
        name, band = Path(cfg["scores"]).stem, None
    elif cfg.get("artifact") and cfg.get("data"):
        art = ScreenerArtifact.load(run.input("artifact", cfg["artifact"]))
        data = _load(cfg, run)
        if art.silo != "all":
            data = silo_split(data, pipeline_config(cfg).silo)[art.silo]
        scores = art.score_dataset(data)
        labels = data.labels
        weights = balance_weights(data, pipeline_config(cfg).age_groups).weights
        ids, name, band = data.subject_ids, f"{art.variant}:{art.silo}", art.band
    else:
        raise ParameterError("evaluate needs --scores, or --artifact with --data")
    target = float(cfg.get("pipeline", {}).get("target_sensitivity", 0.8))
    curve = roc(scores, labels, weights)
    choice = tune_threshold(curve, target)
    curve.to_csv(run.file("roc.csv"))
    row = {"screener": name, "auc": curve.auc, "target_sensitivity": target, **choice.to_dict(),
           "accuracy": binary_metrics(scores, labels, weights, choice.threshold)["accuracy"],
           "n": int(len(scores))}
    with open(run.file("evaluation.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([v if isinstance(v, str) else repr(v) for v in row.values()])
    out = dict(row)
    if band is not None:
        out["band"] = band.to_dict()
        out["band_metrics"] = band_metrics(band, scores, labels, weights)
    run.json("evaluation.json", out)


def cmd_progressive(cfg: dict, run: RunDir) -> None:
    data = _load(cfg, run)
    pc = pipeline_config(cfg)
    spec = _encoding_spec(cfg, run, data.instrument).subset(data.question_ids)
    matrix = encode(data, spec, cfg["encoding"])
    if cfg.get("features"):
        sel = read_json(run.input("features", cfg["features"]))
        matrix = matrix.select(sel["selected"] if isinstance(sel, dict) else sel)
    fractions = [float(f) for f in cfg["fractions"]]
    curve = progressive_sampling(matrix, fractions, pc.cv, forest_trainer(pc.forest),
                                 int(cfg["seed"]), pc.age_groups)
    curve.to_csv(run.file("curve.csv"))
    run.json("curve.json", curve.to_dict())


def cmd_combine(cfg: dict, run: RunDir) -> None:
    data = _load(cfg, run)
    videos = cfg.get("video") or []
    instruments = cfg.get("video_instrument") or []
    if not videos:
        raise ParameterError("--video is required")
    if len(instruments) < len(videos):
        instruments = list(instruments) + ["ados_module1_like"] * (len(videos) - len(instruments))
    vdata = []
    for i, (path, inst) in enumerate(zip(videos, instruments)):
        p = run.input(f"video_{i}", path)
        vdata.append(load_csv(p, inst, EncodingSpec.for_instrument(inst)))
    pc = pipeline_config(cfg)
    spec = _encoding_spec(cfg, run, data.instrument).subset(data.question_ids)
    combined = train_combined(data, vdata, pc, cfg["variant"], q_spec=spec)
    combined.save(run.file("combined.json"))
    run.json("metrics.json", {s: c.metrics for s, c in sorted(combined.silos.items())})


def _responses(path):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if len(rows) != 1:
            raise SchemaError(f"{path}: expected exactly one response row, found {len(rows)}")
        row = rows[0]
        answers = {k[2:]: v for k, v in row.items() if k.startswith("q_") and v != ""}
        out = {"questionnaire": answers}
        if row.get("age_months"):
            out["age_months"] = int(row["age_months"])
        if row.get("gender"):
            out["gender"] = row["gender"]
        return out
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: responses must be a JSON object")
    return obj


def cmd_screen(cfg: dict, run: RunDir) -> None:
    if not cfg.get("screener") or not cfg.get("responses"):
        raise ParameterError("--screener and --responses are required")
    bundle = read_json(run.input("screener", cfg["screener"]))
    req = _responses(run.input("responses", cfg["responses"]))
    if cfg.get("video_responses"):
        req["video"] = _responses(run.input("video_responses", cfg["video_responses"]))["questionnaire"]
    for key in ("age_months", "gender", "verbal"):
        if cfg.get(key) is not None:
            req[key] = cfg[key]
    if "age_months" not in req:
        raise ParameterError("age_months missing from responses (or pass --age-months)")
    answers = req.get("questionnaire")
    if not isinstance(answers, dict):
        raise SchemaError("responses need a 'questionnaire' object of question -> code")
    age, gender = int(req["age_months"]), req.get("gender", "unknown")
    if bundle.get("format", "").startswith("asdscreen.screener"):
        art = ScreenerArtifact.from_dict(bundle)
        score = art.score(answers, age, gender)
        record = {"decision": art.band.decide(score), "score": score, "silo": art.silo,
                  "artifact_version": art.version, "flags": [], "warnings": []}
    else:
        record = screen(answers, CombinedScreener.from_dict(bundle), age, gender,
                        req.get("video"), req.get("verbal"))
    run.json("decision.json", record)


COMMANDS = {
    "generate": (cmd_generate, {
        "seed": 0, "n_questions": 155, "n_informative": 15, "n_samples": 1000,
        "positive_fraction": 0.5, "age_signal_shift": 0.0, "noise_rate": 0.0, "instrument": "adir_like"}),
    "validate": (cmd_validate, {"instrument": "adir_like"}),
    "select": (cmd_select, {"seed": 0, "instrument": "adir_like", "encoding": "severity",
                            "method": "robust", "silo": "all"}),
    "train": (cmd_train, {"seed": 0, "instrument": "adir_like", "variant": "aggregate"}),
    "calibrate": (cmd_calibrate, {"pipeline": {"max_inconclusive_rate": 0.25, "target_sensitivity": 0.8}}),
    "evaluate": (cmd_evaluate, {"instrument": "adir_like", "pipeline": {"target_sensitivity": 0.8}}),
    "progressive": (cmd_progressive, {"seed": 0, "instrument": "adir_like", "encoding": "severity",
                                      "fractions": list(DEFAULT_FRACTIONS)}),
    "combine": (cmd_combine, {"seed": 0, "instrument": "adir_like", "variant": "aggregate"}),
    "screen": (cmd_screen, {}),
}


# ---------------------------------------------------------------------------
# argument parsing

def _add_pipeline_flags(p) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--n-trees", type=int)
    g.add_argument("--max-depth", type=int)
    g.add_argument("--n-folds", type=int)
    g.add_argument("--rounds", type=int, help="bootstrapped CV rounds")
    g.add_argument("--n-bootstrap", type=int, help="robust selection iterations")
    g.add_argument("--final-k", type=int)
    g.add_argument("--candidate-pool", type=int)
    g.add_argument("--max-inconclusive-rate", type=float)
    g.add_argument("--target-sensitivity", type=float)
    g.add_argument("--silo-boundary", type=int)


def _add_data_flags(p) -> None:
    p.add_argument("--data", help="score-sheet CSV")
    p.add_argument("--instrument", choices=INSTRUMENTS)
    p.add_argument("--encoding-spec", help="encoding spec JSON (defaults to the shipped one)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asdscreen", description="Train and run screening pipelines.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = command("generate", "draw a synthetic planted-signal dataset")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-questions", type=int)
    p.add_argument("--n-informative", type=int)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--positive-fraction", type=float)
    p.add_argument("--age-signal-shift", type=float)
    p.add_argument("--noise-rate", type=float)
    p.add_argument("--instrument", choices=INSTRUMENTS)
    p.add_argument("--subjects", help="reuse subjects (ids, ages, labels) from this CSV")

    p = command("validate", "check a score-sheet CSV against its encoding spec")
    _add_data_flags(p)

    p = command("select", "feature selection on a dataset")
    _add_data_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--encoding", choices=MODES)
    p.add_argument("--method", choices=("naive", "robust"))
    p.add_argument("--silo", choices=("all", "young", "old"))
    _add_pipeline_flags(p)

    p = command("train", "train one screener variant")
    _add_data_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=LADDER)
    _add_pipeline_flags(p)

    p = command("calibrate", "fit an inconclusive band on out-of-fold scores")
    p.add_argument("--scores", help="CSV with label, score and optional weight columns")
    p.add_argument("--artifact", help="screener artifact to re-band")
    p.add_argument("--max-inconclusive-rate", type=float)
    p.add_argument("--target-sensitivity", type=float)

    p = command("evaluate", "ROC, AUC and the operating point at a target sensitivity")
    _add_data_flags(p)
    p.add_argument("--scores", help="CSV with label, score and optional weight columns")
    p.add_argument("--artifact", help="screener artifact to score --data with")
    p.add_argument("--target-sensitivity", type=float)
    p.add_argument("--silo-boundary", type=int)

    p = command("progressive", "learning curve over growing training fractions")
    _add_data_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--encoding", choices=MODES)
    p.add_argument("--features", help="selection JSON restricting the feature set")
    p.add_argument("--fractions", type=float, nargs="+")
    _add_pipeline_flags(p)

    p = command("combine", "train questionnaire and video screeners and fuse them")
    _add_data_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=LADDER)
    p.add_argument("--video", action="append", help="video score-sheet CSV (repeatable)")
    p.add_argument("--video-instrument", action="append", choices=INSTRUMENTS,
                   help="instrument of each --video, in order")
    _add_pipeline_flags(p)

    p = command("screen", "screen one subject")
    p.add_argument("--screener", help="combined screener or screener artifact JSON")
    p.add_argument("--responses", help="JSON or one-row CSV of answers")
    p.add_argument("--video-responses", help="one-row CSV of video analyst answers")
    p.add_argument("--age-months", type=int)
    p.add_argument("--gender", choices=("male", "female", "unknown"))
    p.add_argument("--verbal", type=lambda s: s.lower() in ("1", "true", "yes"))
    return parser


def _fail(payload: dict, code: int) -> int:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    set_threads(args.threads)
    fn, defaults = COMMANDS[args.command]
    try:
        cfg = resolve_config(args, defaults)
        run = RunDir(args.out, args.command, cfg)
        fn(cfg, run)
        run.finish()
    except ScreeningError as exc:
        return _fail(exc.to_dict(), exc.exit_code)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail({"error": type(exc).__name__, "message": str(exc)}, IO_EXIT)
    return 0


if __name__ == "__main__":
    sys.exit(main())
