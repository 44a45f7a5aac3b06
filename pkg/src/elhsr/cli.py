"""Command-line entry point.

Subcommands: validate, synth, train, score, bon, combine, probe. Every run
emits a RunManifest (resolved config, recomputed input digests, seeds,
toolkit version, wall-clock duration); artifacts reference the manifest by
id. All randomness flows from explicit --seed flags, so identical
invocations on identical inputs reproduce identical artifacts byte for byte
(manifest timing fields aside).

Exit codes: 0 success, 1 validation/data error, 2 usage error. Errors are
printed as a single JSON line on stderr. ELHSR_THREADS is accepted to cap
internal parallelism; the current implementation is sequential, so it has
no effect.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, ElhsrError, FormatError
from .probe import ProbeConfig, crossval_probe
from .reward_model import load_params, path_features, save_params, score_path
from .selection import evaluate_combination, read_scored_candidates
from .trace_store import (
    MANIFEST_FILE,
    META_FILE,
    PAYLOAD_FILE,
    gen_synthetic,
    read_dataset,
    validate_dataset,
    write_trace_dataset,
)
from .training import TrainConfig, train_elhsr

USAGE_EXIT = 2
DATA_EXIT = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "usage", "message": message}), file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dataset_digest(directory: Path) -> str:
    digest = hashlib.sha256()
    for name in (META_FILE, MANIFEST_FILE, PAYLOAD_FILE):
        digest.update(name.encode())
        digest.update(bytes.fromhex(_sha256_file(directory / name)))
    return digest.hexdigest()


def _input_digest(path: Path) -> str:
    return dataset_digest(path) if path.is_dir() else _sha256_file(path)


class RunManifest:
    def __init__(self, subcommand: str, config: dict, inputs: dict[str, Path], seeds: dict):
        self.started = time.monotonic()
        self.record = {
            "subcommand": subcommand,
            "config": config,
            "inputs": {
                name: {"path": str(p), "sha256": _input_digest(p)} for name, p in inputs.items()
            },
            "seeds": seeds,
            "toolkit_version": __version__,
        }
        body = json.dumps(self.record, sort_keys=True).encode()
        self.manifest_id = hashlib.sha256(body).hexdigest()[:16]

    def write(self, path: Path) -> None:
        record = dict(self.record)
        record["manifest_id"] = self.manifest_id
        record["duration_seconds"] = time.monotonic() - self.started
        path.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _parse_k_list(text: str) -> list[int]:
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--k must be a comma-separated integer list: {exc}") from exc
    if not ks or any(k < 1 for k in ks):
        raise ConfigError("--k values must be positive integers")
    return ks


def _parse_layers(text: str) -> list[int] | None:
    if text == "all":
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--layers must be 'all' or a comma-separated list: {exc}") from exc


def _require_exists(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def cmd_validate(args) -> int:
    directory = _require_exists(Path(args.directory), "dataset directory")
    report = validate_dataset(directory)
    manifest = RunManifest("validate", {"directory": str(directory)}, {}, {})
    payload = report.to_dict()
    payload["run_manifest"] = manifest.manifest_id
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        manifest.write(Path(str(args.out) + ".manifest.json"))
    else:
        print(text)
    return 0 if report.ok else DATA_EXIT


def cmd_synth(args) -> int:
    config = {
        "seed": args.seed,
        "questions": args.questions,
        "paths": args.paths,
        "layers": args.layers,
        "dim": args.dim,
        "t_min": args.t_min,
        "t_max": args.t_max,
        "noise": args.noise,
        "out": str(args.out),
    }
    manifest = RunManifest("synth", config, {}, {"seed": args.seed})
    dataset, planted = gen_synthetic(
        seed=args.seed,
        num_questions=args.questions,
        paths_per_question=args.paths,
        T_range=(args.t_min, args.t_max),
        L=args.layers,
        d=args.dim,
        noise=args.noise,
    )
    out = Path(args.out)
    write_trace_dataset(dataset, out)
    save_params(planted, out / "planted_model.json")
    _write_json(
        out / "provenance.json",
        {
            "generator": "synthetic-planted",
            "config": config,
            "run_manifest": manifest.manifest_id,
        },
    )
    manifest.write(out / "manifest.json")
    print(json.dumps({"dataset": str(out), "paths": len(dataset), "run_manifest": manifest.manifest_id}))
    return 0


def cmd_train(args) -> int:
    data_dir = _require_exists(Path(args.data), "dataset directory")
    selected_layers = _parse_layers(args.layers)
    config = TrainConfig(
        loss=args.loss,
        alpha=args.alpha,
        learning_rate=args.lr,
        weight_decay=args.wd,
        batch_size=args.batch,
        val_fraction=args.val_fraction,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
    )
    resolved = dict(
        config.to_dict(), layers=args.layers, gating=not args.no_gating, out=str(args.out)
    )
    manifest = RunManifest("train", resolved, {"data": data_dir}, {"seed": args.seed})
    dataset = read_dataset(data_dir)
    params, stats = train_elhsr(
        dataset, config, selected_layers=selected_layers, gating_enabled=not args.no_gating
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_params(params, out / "model.json")
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for stat in stats:
            fh.write(json.dumps(stat.to_dict()) + "\n")
    _write_json(
        out / "provenance.json",
        {
            "config": resolved,
            "dataset_digest": manifest.record["inputs"]["data"]["sha256"],
            "seeds": {"seed": args.seed},
            "run_manifest": manifest.manifest_id,
        },
    )
    manifest.write(out / "manifest.json")
    best = min(stats, key=lambda s: s.val_loss)
    print(
        json.dumps(
            {
                "model": str(out / "model.json"),
                "epochs": len(stats),
                "best_epoch": best.epoch,
                "best_val_loss": best.val_loss,
                "run_manifest": manifest.manifest_id,
            }
        )
    )
    return 0


def cmd_score(args) -> int:
    model_path = _require_exists(Path(args.model), "model file")
    data_dir = _require_exists(Path(args.data), "dataset directory")
    manifest = RunManifest(
        "score",
        {"model": str(model_path), "data": str(data_dir), "breakdown": args.breakdown},
        {"model": model_path, "data": data_dir},
        {},
    )
    params = load_params(model_path)
    dataset = read_dataset(data_dir)
    from .reward_model import check_compatible

    check_compatible(params, dataset.meta)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for i, rec in enumerate(dataset.records):
            breakdown = score_path(params, path_features(params, dataset, i))
            row = {
                "question_id": rec.question_id,
                "path_id": rec.path_id,
                "label": rec.label,
                "elhsr_reward": breakdown.reward,
            }
            if args.breakdown:
                row["breakdown"] = {
                    "gate_pre": [float(v) for v in breakdown.gate_pre],
                    "gate": [float(v) for v in breakdown.gate],
                    "token_rewards": [float(v) for v in breakdown.token_rewards],
                    "gate_sum": breakdown.gate_sum,
                }
            fh.write(json.dumps(row) + "\n")
    manifest.write(Path(str(out) + ".manifest.json"))
    print(json.dumps({"scores": str(out), "paths": len(dataset), "run_manifest": manifest.manifest_id}))
    return 0


def _bon_like(args, method: str) -> int:
    scores_path = _require_exists(Path(args.scores), "scores file")
    ks = _parse_k_list(args.k)
    manifest = RunManifest(
        method if method in ("rank", "scale") else "bon",
        {"scores": str(scores_path), "method": method, "k": ks},
        {"scores": scores_path},
        {},
    )
    groups = read_scored_candidates(scores_path)
    report = evaluate_combination(groups, method, ks)
    payload = report.to_dict()
    payload["run_manifest"] = manifest.manifest_id
    out = Path(args.out)
    _write_json(out, payload)
    manifest.write(Path(str(out) + ".manifest.json"))
    print(json.dumps({"report": str(out), "accuracy": payload["accuracy"]}))
    return 0


def cmd_bon(args) -> int:
    return _bon_like(args, "elhsr_only")


def cmd_combine(args) -> int:
    return _bon_like(args, args.method)


def cmd_probe(args) -> int:
    data_dir = _require_exists(Path(args.data), "dataset directory")
    config = ProbeConfig(
        components=args.components,
        folds=args.folds,
        seed=args.seed,
        layer="all" if args.layer == "all" else int(args.layer),
    )
    manifest = RunManifest(
        "probe",
        {
            "components": args.components,
            "folds": args.folds,
            "seed": args.seed,
            "layer": args.layer,
        },
        {"data": data_dir},
        {"seed": args.seed},
    )
    dataset = read_dataset(data_dir)
    report = crossval_probe(dataset, config)
    payload = report.to_dict()
    payload["run_manifest"] = manifest.manifest_id
    out = Path(args.out)
    _write_json(out, payload)
    manifest.write(Path(str(out) + ".manifest.json"))
    print(json.dumps({"report": str(out), "layer_mean_accuracy": payload["layer_mean_accuracy"]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="elhsr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="check a dataset directory against the format invariants")
    p.add_argument("directory")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a planted-model synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--questions", type=int, default=50)
    p.add_argument("--paths", type=int, default=8)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--t-min", type=int, default=5)
    p.add_argument("--t-max", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a reward model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--loss", default="bce", choices=("bce", "hinge", "dpo", "infonca", "nca"))
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--wd", type=float, default=1e-5)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--max-epochs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", default="all", help="'all' or a comma-separated layer subset")
    p.add_argument("--no-gating", action="store_true", help="score with unit gates (plain mean)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score every path of a dataset with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--breakdown", action="store_true", help="include per-token detail")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bon", help="best-of-N accuracy from a scored-candidates file")
    p.add_argument("--scores", required=True)
    p.add_argument("--k", default="1,4", help="comma-separated k values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bon)

    p = sub.add_parser("combine", help="combine stored and external rewards for best-of-N")
    p.add_argument("--scores", required=True)
    p.add_argument("--method", required=True, choices=("rank", "scale"))
    p.add_argument("--k", default="1,4", help="comma-separated k values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("probe", help="per-layer cross-validated linear probe")
    p.add_argument("--data", required=True)
    p.add_argument("--components", type=int, default=50)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layer", default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return USAGE_EXIT
    except (FormatError, DataError, ConfigError, ValueError) as exc:
        kind = {
            FormatError: "format",
            DataError: "data",
            ConfigError: "config",
        }.get(type(exc), "value")
        print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
        return DATA_EXIT
    except ElhsrError as exc:
        print(json.dumps({"error": "data", "message": str(exc)}), file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
