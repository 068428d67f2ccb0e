"""Command-line driver: one subcommand per pipeline stage, plus ``reproduce``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import torch

from .errors import ConfigurationError, DatasetError, MissingArtifactError
from .experiment import (
    STAGE_COMMANDS,
    ExperimentConfig,
    cmd_evaluate,
    echo_config,
    load_config_file,
    run_experiment,
)
from .published import TABLES, PublishedRow

log = logging.getLogger("vesselpipe")

# overrides applied by `reproduce --scale smoke`
SMOKE_OVERRIDES = {
    "epochs1": 40,
    "epochs2": 20,
    "input1": 300,
    "base1": 16,
    "base2": 16,
}

FLAG_KEYS = {
    "dataset": "dataset",
    "data_root": "data_root",
    "variant": "variant",
    "seed": "seed",
    "out": "out",
    "support": "support",
    "resistance": "resistance",
    "epochs1": "epochs1",
    "epochs2": "epochs2",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key: value experiment file")
    common.add_argument("--dataset")
    common.add_argument("--data-root", dest="data_root")
    common.add_argument("--variant")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--support", type=int)
    common.add_argument("--resistance", type=int)
    common.add_argument("--epochs1", type=int)
    common.add_argument("--epochs2", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vesselpipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("preprocess", "train1", "infer", "srs", "train2", "predict", "evaluate", "run"):
        sub.add_parser(name, parents=[common])
    rep = sub.add_parser("reproduce", parents=[common])
    rep.add_argument("--table", required=True, choices=sorted(TABLES))
    rep.add_argument("--scale", default="smoke", choices=("smoke", "full"))
    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    flat = load_config_file(args.config) if args.config else {}
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            flat[key] = value
    return ExperimentConfig.from_flat(flat)


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def reproduce(args: argparse.Namespace) -> int:
    flat = load_config_file(args.config) if args.config else {}
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            flat[key] = value
    if "data_root" not in flat:
        raise ConfigurationError("reproduce needs --data-root or data_root in the config")
    if args.scale == "smoke":
        for key, value in SMOKE_OVERRIDES.items():
            flat.setdefault(key, value)
    elif not torch.cuda.is_available():
        log.warning("full-scale reproduction on CPU: expect days per row (250 + 60 epochs per fold)")
    base_out = Path(flat.get("out", "runs")) / args.table
    rows: list[PublishedRow] = list(TABLES[args.table])
    results = []
    for i, row in enumerate(rows):
        row_flat = dict(flat, dataset=row.dataset.value, variant=row.variant, out=str(base_out / f"row{i}"))
        if row.weights.startswith("rand:"):
            row_flat["sampler1"] = row.weights[5:]
        elif row.weights != "class":
            row_flat["fixed_weights"] = row.weights
        if not (Path(row_flat["data_root"]) / row.dataset.value / "images").is_dir():
            log.warning("%s: dataset %s not present, row skipped", row.label, row.dataset.value)
            results.append((row, None))
            continue
        bundle = run_experiment(ExperimentConfig.from_flat(row_flat))
        results.append((row, bundle.report))

    header = f"{'row':<44} {'P':>7} {'R':>7} {'F1':>7} {'Acc':>7} | {'pub P':>7} {'pub R':>7} {'pub F1':>7} {'pub Acc':>7}"
    print(header)
    print("-" * len(header))
    base_out.mkdir(parents=True, exist_ok=True)
    with (base_out / "comparison.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "precision", "recall", "f1", "accuracy",
                    "published_precision", "published_recall", "published_f1", "published_accuracy"])
        for row, rep in results:
            got = (None,) * 4 if rep is None else (rep.mean_precision, rep.mean_recall, rep.f1, rep.mean_accuracy)
            pub = (row.precision, row.recall, row.f1, row.accuracy)
            print(f"{row.label:<44} " + " ".join(f"{_fmt(v):>7}" for v in got) + " | "
                  + " ".join(f"{_fmt(v):>7}" for v in pub))
            w.writerow([row.label, *("" if v is None else f"{v:.4f}" for v in got), *pub])
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "reproduce":
            return reproduce(args)
        cfg = build_config(args)
        echo_config(cfg)
        if args.command == "run":
            bundle = run_experiment(cfg)
        elif args.command == "evaluate":
            bundle = cmd_evaluate(cfg)
        else:
            outcome = STAGE_COMMANDS[args.command](cfg)
            for msg in outcome.warnings:
                print(f"warning: {msg}", file=sys.stderr)
            for msg in outcome.failures:
                print(f"error: {msg}", file=sys.stderr)
            print(f"{args.command}: {outcome.ran} ran, {outcome.skipped} up to date")
            return 1 if outcome.failures else 0
        s = bundle.report.summary()
        print(f"precision {s['precision']:.4f} recall {s['recall']:.4f} "
              f"F1 {s['f1']:.4f} accuracy {s['accuracy']:.4f} over {s['n_images']} images")
        return 0
    except ConfigurationError as exc:
        print(f"vesselpipe: configuration error: {exc}", file=sys.stderr)
        return 2
    except (MissingArtifactError, DatasetError, RuntimeError, ValueError) as exc:
        print(f"vesselpipe: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
