"""Command-line entry point: gen, train, eval, rank, predict.

Every command resolves its configuration from flags, runs the matching
library operation, and writes a ``<output>.manifest.json`` recording the
resolved config, master seed, and the SHA-256 of every input and output
file, so reruns can be checked for bit-identical results.

Exit codes: 0 success, 2 usage/config, 3 data or format problem, 4 internal.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import CHECKPOINT_FORMAT_VERSION, load_checkpoint, save_checkpoint
from .dataset import (
    FORMAT_VERSION as DATASET_FORMAT_VERSION,
    config_hash,
    generate_dataset,
    read_dataset,
    sha256_file,
    split_samples,
)
from .errors import (
    ConfigError,
    DataFormatError,
    GenerationError,
    IncompatibleArtifactError,
    SchedPerfError,
)
from .evaluation import evaluate, predict_records, ranking_for_groups
from .synthesis import GeneratorConfig, NoiseConfig, OracleConfig
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

logger = logging.getLogger(__name__)


def _write_manifest(
    out_path: str,
    command: str,
    config: dict,
    seed: int | None,
    inputs: dict[str, str],
    outputs: dict[str, str],
) -> None:
    manifest = {
        "command": command,
        "config": config,
        "master_seed": seed,
        "input_hashes": inputs,
        "output_hashes": outputs,
        "tool_version": __version__,
        "format_versions": {
            "dataset": DATASET_FORMAT_VERSION,
            "checkpoint": CHECKPOINT_FORMAT_VERSION,
        },
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _cmd_gen(args: argparse.Namespace) -> int:
    generator = GeneratorConfig()
    noise = NoiseConfig(sigma=args.noise_sigma)
    oracle = OracleConfig()
    summary = generate_dataset(
        out_path=args.out,
        num_pipelines=args.pipelines,
        schedules_per_pipeline=args.schedules_per,
        seed=args.seed,
        generator=generator,
        oracle=oracle,
        noise=noise,
    )
    config = {
        "pipelines": args.pipelines,
        "schedules_per": args.schedules_per,
        "noise_sigma": args.noise_sigma,
        "generator_config_hash": config_hash(generator, oracle, noise),
    }
    _write_manifest(args.out, "gen", config, args.seed, {}, {args.out: summary.sha256})
    print(
        f"wrote {summary.num_samples} samples ({summary.num_train} train / "
        f"{summary.num_eval} eval) from {summary.num_pipelines} pipelines to {args.out}"
    )
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    header, records = read_dataset(args.data)
    config = TrainConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        xi_literal=args.xi_literal,
        model=args.model,
    )
    result = train(records, config)
    save_checkpoint(args.out, result.params, result.norm_stats, header.generator_config_hash)
    log_path = args.out + ".trainlog.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in result.log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    _write_manifest(
        args.out, "train", dataclasses.asdict(config), args.seed,
        {args.data: sha256_file(args.data)},
        {args.out: sha256_file(args.out), log_path: sha256_file(log_path)},
    )
    final = result.log[-1] if result.log else {}
    print(
        f"trained {config.model} for {config.epochs} epochs "
        f"(best epoch {result.best_epoch}); final {final}; checkpoint {args.out}"
    )
    return EXIT_OK


def _check_compat(ckpt, header, ckpt_path: str, data_path: str) -> None:
    if ckpt.format_version != CHECKPOINT_FORMAT_VERSION or (
        header.format_version != DATASET_FORMAT_VERSION
    ):
        raise IncompatibleArtifactError(
            f"checkpoint {ckpt_path} (format {ckpt.format_version}) vs dataset "
            f"{data_path} (format {header.format_version}): unsupported versions"
        )


def _cmd_eval(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    header, records = read_dataset(args.data)
    _check_compat(ckpt, header, args.ckpt, args.data)
    baseline = load_checkpoint(args.baseline) if args.baseline else None
    report = evaluate(ckpt, records, split=args.split, baseline=baseline)
    text = report.to_json()
    inputs = {args.ckpt: sha256_file(args.ckpt), args.data: sha256_file(args.data)}
    if args.baseline:
        inputs[args.baseline] = sha256_file(args.baseline)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        _write_manifest(
            args.out, "eval",
            {"split": args.split, "baseline": args.baseline}, None,
            inputs, {args.out: sha256_file(args.out)},
        )
    print(text)
    return EXIT_OK


def _cmd_rank(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    header, records = read_dataset(args.data)
    _check_compat(ckpt, header, args.ckpt, args.data)
    selected = split_samples(records, args.split) if args.split != "all" else records
    if not selected:
        raise DataFormatError(f"no records in split {args.split!r}")
    report = ranking_for_groups(selected, predict_records(ckpt, selected))
    payload = {
        "group_by": args.group_by,
        "average_pct_correct": report.average_pct_correct,
        "groups": [dataclasses.asdict(g) for g in report.groups],
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        _write_manifest(
            args.out, "rank", {"split": args.split, "group_by": args.group_by}, None,
            {args.ckpt: sha256_file(args.ckpt), args.data: sha256_file(args.data)},
            {args.out: sha256_file(args.out)},
        )
    print(text)
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    header, records = read_dataset(args.data)
    _check_compat(ckpt, header, args.ckpt, args.data)
    predictions = predict_records(ckpt, records)
    lines = [
        json.dumps({"sample_id": rec.schedule_id, "yhat": float(yhat)}, sort_keys=True)
        for rec, yhat in zip(records, predictions)
    ]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        _write_manifest(
            args.out, "predict", {}, None,
            {args.ckpt: sha256_file(args.ckpt), args.data: sha256_file(args.data)},
            {args.out: sha256_file(args.out)},
        )
    else:
        print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sched-perf",
        description="Predict and rank tensor-pipeline schedule run times.",
    )
    parser.add_argument(
        "--version", action="version",
        version=(
            f"sched-perf {__version__} "
            f"(dataset format {DATASET_FORMAT_VERSION}, "
            f"checkpoint format {CHECKPOINT_FORMAT_VERSION})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--pipelines", type=int, default=200)
    p.add_argument("--schedules-per", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.0075)
    p.add_argument("--weight-decay", type=float, default=0.0001)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--xi-literal", action="store_true",
                   help="use the literal |yhat/ybar| error term instead of |yhat/ybar - 1|")
    p.add_argument("--model", choices=("gcn", "baseline"), default="gcn")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="compute metrics for a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "eval"), default="eval")
    p.add_argument("--baseline", default=None, help="baseline checkpoint for comparison")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("rank", help="pairwise schedule ranking per pipeline")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--group-by", choices=("pipeline",), default="pipeline")
    p.add_argument("--split", choices=("train", "eval", "all"), default="eval")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("predict", help="emit per-sample predicted run times")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_predict)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("SCHEDPERF_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, IncompatibleArtifactError, GenerationError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SchedPerfError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
