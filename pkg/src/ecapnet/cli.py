"""Command-line entry point: one binary, subcommand style.

Exit codes: 0 success, 2 usage error, 3 validation error (bad inputs),
4 runtime error. Every command is a pure function of its inputs plus the
seed, so re-running with the same seed reproduces its outputs byte for
byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, EcapNetError, ParseError, ValidationError
from .graph import build_graph
from .hemodynamics import compute_indices, load_wss, save_ecap_csv
from .mesh import compute_attributes, load_mesh
from .model import EcapNet, ModelConfig, load_checkpoint, save_checkpoint
from .synth import build_dataset, load_dataset, manifest_hash
from .train import (TrainConfig, cross_validate, evaluate, prepare, train,
                    write_history_csv, write_metrics_csv, write_summary_json)

RUN_SCHEMA = "run-v1"

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

_DIST_KEYS = {"amp_range", "axis_range", "width_range", "bend_range",
              "n_lobes_range", "subdivisions", "wss_magnitude", "noise"}


def _check_keys(doc: dict, allowed: set, context: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")


def load_run_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if doc.get("schema") != RUN_SCHEMA:
        raise ConfigError(f"config schema must be {RUN_SCHEMA!r}")
    _check_keys(doc, {"schema", "dataset", "model", "train"}, "config")
    ds = doc.get("dataset", {})
    _check_keys(ds, {"n_samples", "seed", "train_fraction", "n_times",
                     "dist"}, "config.dataset")
    _check_keys(ds.get("dist", {}), _DIST_KEYS, "config.dataset.dist")
    _check_keys(doc.get("model", {}), set(ModelConfig.__dataclass_fields__),
                "config.model")
    _check_keys(doc.get("train", {}), set(TrainConfig.__dataclass_fields__),
                "config.train")
    return doc


def _model_config(doc: dict) -> ModelConfig:
    return ModelConfig(**doc.get("model", {}))


def _train_config(doc: dict, seed_override=None) -> TrainConfig:
    kwargs = dict(doc.get("train", {}))
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return TrainConfig(**kwargs)


# -- subcommands -----------------------------------------------------------


def cmd_gen_data(args) -> int:
    doc = load_run_config(args.config)
    ds = dict(doc.get("dataset", {}))
    dist = {k: tuple(v) if isinstance(v, list) else v
            for k, v in ds.pop("dist", {}).items()}
    if args.seed is not None:
        ds["seed"] = args.seed
    manifest = build_dataset(args.out, **ds, **dist)
    print(f"wrote {manifest['n_samples']} samples to {args.out}")
    return 0


def cmd_compute_ecap(args) -> int:
    wss = load_wss(args.wss_file)
    field = compute_indices(wss)
    save_ecap_csv(field, args.out)
    print(f"wrote {field.ecap.size} vertices to {args.out} "
          f"({field.n_floored} floored)")
    return 0


def cmd_train(args) -> int:
    doc = load_run_config(args.config)
    samples, manifest = load_dataset(args.dataset_dir)
    tc = _train_config(doc, args.seed)
    model = EcapNet(_model_config(doc), seed=tc.seed)
    train_ids = manifest["split"]["train"]
    history = train(model, [samples[i] for i in train_ids], tc)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    write_history_csv(history, out.with_suffix(".history.csv"))
    print(f"final training loss {history[-1]:.6g}; checkpoint at {out}")
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.ckpt)
    mesh = load_mesh(args.mesh_file)
    graph = build_graph(mesh, compute_attributes(mesh))
    pred = model.predict(graph)[:, 0]
    with open(args.out, "w") as fh:
        fh.write("vertex,ecap_pred\n")
        for i, v in enumerate(pred):
            fh.write(f"{i},{v:.17g}\n")
    print(f"wrote {pred.size} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.ckpt)
    samples, manifest = load_dataset(args.dataset_dir)
    test_ids = manifest["split"]["test"] or manifest["split"]["train"]
    report = evaluate(model, [samples[i] for i in test_ids])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv([report], out / "metrics.csv")
    write_summary_json(report, out / "summary.json")
    print(f"MAE {report.mae:.6g}, TPR {report.tpr:.6g}")
    return 0


def cmd_cross_validate(args) -> int:
    doc = load_run_config(args.config)
    samples, manifest = load_dataset(args.dataset_dir)
    tc = _train_config(doc, args.seed)
    reports, aggregate = cross_validate(
        samples, tc, model_config=_model_config(doc),
        manifest_hash=manifest_hash(manifest))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(reports, out / "metrics.csv")
    write_summary_json(aggregate, out / "summary.json")
    print(f"aggregate MAE {aggregate.mae:.6g}, TPR {aggregate.tpr:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecapnet",
        description="Predict ECAP fields on triangle meshes with a "
                    "spline-convolution graph network.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="run-v1 JSON config")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, help="override the dataset seed")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes (generation is deterministic "
                        "regardless)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("compute-ecap",
                       help="compute TAWSS/OSI/ECAP from a wss-v1 file")
    p.add_argument("wss_file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_compute_ecap)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("dataset_dir")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict",
                       help="predict per-vertex ECAP for a mesh file")
    p.add_argument("ckpt")
    p.add_argument("mesh_file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate",
                       help="evaluate a checkpoint on a dataset's test split")
    p.add_argument("ckpt")
    p.add_argument("dataset_dir")
    p.add_argument("--out", required=True, help="output report directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cross-validate",
                       help="k-fold cross-validation on a dataset")
    p.add_argument("dataset_dir")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output report directory")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.set_defaults(func=cmd_cross_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, ConfigError) as exc:
        print(f"error[validation]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EcapNetError as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
