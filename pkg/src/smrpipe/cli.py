"""Command-line entry point: synth, run, inspect, report.

Logging goes to stderr; machine-readable output goes to files only. Exit
codes: 0 success, 1 runtime failure, 2 usage error. The default output
directory comes from the SMRPIPE_OUT environment variable when set.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as epb
from .classifiers import MODEL_KINDS, load_model, model_kind
from .evaluation import (AllSubjectsFailed, PipelineConfig, run_corpus)
from .model import ClassLabel, PipelineError
from .report import IoFailure, emit_report, emit_run_artifacts
from .synth import SyntheticSpec, generate_subject

log = logging.getLogger("smrpipe")

ENV_OUT = "SMRPIPE_OUT"
_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _bool_flag(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _default_out() -> str:
    return os.environ.get(ENV_OUT, "smrpipe-out")


# ---------------------------------------------------------------- config

# PipelineConfig fields that the run config file and flags may set,
# with their coercions from text.
_CONFIG_CASTERS = {
    "model_kind": str,
    "channels": str,              # comma list or "all"
    "reject_outliers": _bool_flag,
    "outlier_mode": str,
    "low_hz": float,
    "high_hz": float,
    "filter_order": int,
    "order_convention": str,
    "window": int,
    "hop": int,
    "zscore": _bool_flag,
    "train_fraction": float,
    "seed": int,
    "qda_regularization": float,
    "fine_k": int,
    "cosine_k": int,
    "nn_hidden": int,
    "nn_learning_rate": float,
    "nn_max_epochs": int,
    "nn_batch_size": int,
    "validation_folds": int,
}


def _parse_config_file(path: Path) -> dict:
    """Flat key=value lines; blank lines and # comments are ignored."""
    values = {}
    for ln, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_CASTERS:
            raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
        values[key] = _CONFIG_CASTERS[key](val.strip())
    return values


def _channels_tuple(text):
    if text is None or text == "all":
        return None
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


def _resolve_run_config(args) -> PipelineConfig:
    """defaults < config file < explicit CLI flags."""
    values = {}
    if args.config is not None:
        values.update(_parse_config_file(Path(args.config)))
    for key in _CONFIG_CASTERS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "channels" in values:
        values["channels"] = _channels_tuple(values["channels"])
    return PipelineConfig(**values)


def _write_resolved_config(path: Path, config: PipelineConfig,
                           extras: dict) -> None:
    values = dataclasses.asdict(config)
    values["channels"] = ("all" if config.channels is None
                          else ",".join(config.channels))
    values.update(extras)
    lines = [f"{k}={values[k]}" for k in sorted(values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- synth

def _cmd_synth(args, parser) -> int:
    try:
        spec = SyntheticSpec(
            n_subjects=args.subjects,
            n_epochs_per_subject=args.epochs,
            n_channels=args.channels,
            n_samples=args.samples,
            sample_rate_hz=args.rate,
            lateralization_strength=args.strength,
            noise_std=args.noise,
            seed=args.seed)
    except ValueError as e:
        parser.error(str(e))  # exits 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(spec.n_subjects):
        dataset = generate_subject(spec, i)
        name = f"s{dataset.subject_id:02d}.epb1"
        epb.write_epoch_file(dataset, out / name)
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        entries.append({"name": name, "subject_id": dataset.subject_id,
                        "n_epochs": dataset.n_epochs, "sha256": digest})
        log.info("wrote %s (%d epochs)", out / name, dataset.n_epochs)
    manifest = {"format": "EPB1", "spec": dataclasses.asdict(spec),
                "files": entries}
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    log.info("manifest: %s", out / "manifest.json")
    return 0


# ---------------------------------------------------------------- run

def _collect_inputs(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            found = sorted(p.glob("*.epb1"))
            if not found:
                raise IoFailure(f"{p}: no .epb1 files")
            files.extend(found)
        elif p.exists():
            files.append(p)
        else:
            raise IoFailure(f"{p}: no such file")
    return files


def _cmd_run(args, parser) -> int:
    try:
        config = _resolve_run_config(args)
    except (ValueError, OSError) as e:
        parser.error(str(e))

    try:
        files = _collect_inputs(args.input)
    except IoFailure as e:
        log.error("%s", e)
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(out / "config_resolved.txt", config, {
        "inputs": ";".join(str(f) for f in files), "jobs": args.jobs})

    sources = [(f.stem, (lambda p=f: epb.read_epoch_file(p))) for f in files]
    try:
        corpus = run_corpus(sources, config, jobs=args.jobs)
    except AllSubjectsFailed as e:
        log.error("%s", e)
        return 1

    for r in corpus.results:
        (out / f"model_s{r.subject_id:02d}.mdl1").write_bytes(r.model_blob)
    emit_run_artifacts(out, list(corpus.results), corpus.failures)
    for f in corpus.failures:
        log.warning("failed %s at %s: %s", f.name, f.stage, f.message)
    s = corpus.summary
    log.info("%d/%d subjects, accuracy %.4f +- %.4f",
             s.n_subjects, len(sources), s.accuracy_mean, s.accuracy_std)
    return 0


# ---------------------------------------------------------------- inspect

def _cmd_inspect(args, parser) -> int:
    path = Path(args.file)
    try:
        with path.open("rb") as fh:
            magic = fh.read(4)
    except OSError as e:
        log.error("%s", e)
        return 1

    if magic == epb.MAGIC:
        dataset = epb.read_epoch_file(path)
        counts = dataset.class_counts()
        sha = hashlib.sha256()
        for e in dataset.epochs:
            sha.update(np.ascontiguousarray(e.data, dtype="<f8").tobytes())
        print("format: EPB1")
        print(f"subject: {dataset.subject_id}")
        print(f"epochs: {dataset.n_epochs}")
        print(f"channels: {dataset.n_channels}")
        print(f"samples: {dataset.n_samples}")
        print(f"rate_hz: {dataset.sample_rate_hz}")
        print("classes: " + " ".join(
            f"{c.name.lower()}={counts[c]}" for c in ClassLabel))
        print("channel_names: " + ",".join(dataset.channel_names))
        print(f"payload_sha256: {sha.hexdigest()}")
        return 0

    model = load_model(path)  # BadMagic for anything unrecognized
    print(f"model: {model_kind(model)}")
    if hasattr(model, "classes"):
        print(f"classes: {len(model.classes)}")
        print(f"dim: {model.dim}")
    else:
        print(f"classes: {np.unique(model.labels).size}")
        print(f"dim: {model.points.shape[1]}")
        print(f"k: {model.k}")
        print(f"points: {model.points.shape[0]}")
    return 0


# ---------------------------------------------------------------- report

def _cmd_report(args, parser) -> int:
    written = emit_report(args.results, args.out)
    for name in written:
        log.info("wrote %s", name)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smrpipe",
        description="Offline motor-imagery EEG classification pipeline")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate synthetic EPB1 subjects")
    p_synth.add_argument("--out", default=_default_out())
    p_synth.add_argument("--subjects", type=_positive_int, default=1)
    p_synth.add_argument("--epochs", type=_positive_int, default=100)
    p_synth.add_argument("--channels", type=_positive_int, default=10)
    p_synth.add_argument("--samples", type=_positive_int, default=1536)
    p_synth.add_argument("--rate", type=float, default=512.0)
    p_synth.add_argument("--strength", type=float, default=4.0)
    p_synth.add_argument("--noise", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)

    p_run = sub.add_parser("run", help="run the pipeline over EPB1 files")
    p_run.add_argument("--input", nargs="+", required=True,
                       help="EPB1 files or directories holding them")
    p_run.add_argument("--out", default=_default_out())
    p_run.add_argument("--config", default=None,
                       help="key=value config file (flags override it)")
    p_run.add_argument("--jobs", type=_positive_int, default=1,
                       help="subject-level parallelism")
    p_run.add_argument("--model", dest="model_kind", choices=MODEL_KINDS)
    p_run.add_argument("--channels", help='comma list of names, or "all"')
    p_run.add_argument("--reject-outliers", dest="reject_outliers",
                       type=_bool_flag)
    p_run.add_argument("--outlier-mode", dest="outlier_mode",
                       choices=("epoch", "channel"))
    p_run.add_argument("--low-hz", dest="low_hz", type=float)
    p_run.add_argument("--high-hz", dest="high_hz", type=float)
    p_run.add_argument("--filter-order", dest="filter_order", type=int)
    p_run.add_argument("--order-convention", dest="order_convention",
                       choices=("prototype", "final"))
    p_run.add_argument("--window", type=int)
    p_run.add_argument("--hop", type=int)
    p_run.add_argument("--zscore", type=_bool_flag)
    p_run.add_argument("--train-fraction", dest="train_fraction", type=float)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--qda-regularization", dest="qda_regularization",
                       type=float)
    p_run.add_argument("--fine-k", dest="fine_k", type=int)
    p_run.add_argument("--cosine-k", dest="cosine_k", type=int)
    p_run.add_argument("--nn-hidden", dest="nn_hidden", type=int)
    p_run.add_argument("--nn-learning-rate", dest="nn_learning_rate",
                       type=float)
    p_run.add_argument("--nn-max-epochs", dest="nn_max_epochs", type=int)
    p_run.add_argument("--nn-batch-size", dest="nn_batch_size", type=int)
    p_run.add_argument("--validation-folds", dest="validation_folds",
                       type=int)

    p_inspect = sub.add_parser("inspect", help="summarize an EPB1/MDL1 file")
    p_inspect.add_argument("file")

    p_report = sub.add_parser("report",
                              help="re-render tables and figures from a run")
    p_report.add_argument("--results", required=True,
                          help="directory holding results.csv")
    p_report.add_argument("--out", default=None,
                          help="output directory (default: same as --results)")

    return parser


_COMMANDS = {"synth": _cmd_synth, "run": _cmd_run,
             "inspect": _cmd_inspect, "report": _cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args, parser)
    except PipelineError as e:
        log.error("%s", e)
        return 1
    except OSError as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
