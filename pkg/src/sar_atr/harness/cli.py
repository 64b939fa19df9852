"""Command-line entry point: ``sar-atr <command> [options]``.

Commands::

    gen-data   generate a dataset (manifest + record blobs)
    train      train one scheme on a dataset, or on one fold's training split
    attack     DeepFool robustness of a checkpoint on a dataset or fold
    report     summary table and angle-binned CSVs from run directories
    run-all    gen-data, cross-validation for every scheme, then report

On failure the last line on stderr reads ``error category=<name>: <message>``
and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import robustness
from ..model import ATRModel
from ..rfsim import ConfigError
from ..training import SCHEMES, TrainingDiverged, train, write_metrics
from .config import ExperimentConfig, load_config
from .dataset import DatasetError, generate_dataset, load_dataset
from .experiment import (FoldError, collect_results, report, run_cv, split_folds,
                         train_config)

log = logging.getLogger("sar_atr")

EXIT_CODES = {"config": 2, "data": 3, "training": 4, "io": 5, "internal": 1}


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "folds", None) is not None:
        cfg = dataclasses.replace(cfg, folds=args.folds)
    schemes = getattr(args, "scheme", None)
    if schemes:
        names = tuple(s.strip().upper() for item in schemes for s in item.split(","))
        cfg = dataclasses.replace(cfg, schemes=names)
    return cfg


def _progress(prefix: str):
    def report_row(row):
        log.info("%s epoch %d loss %.4f acc %.3f", prefix, row["epoch"], row["loss"],
                 row["clf_acc"])
    return report_row


def _split(data, cfg: ExperimentConfig, fold: int | None, part: str):
    if fold is None:
        return data
    if not 0 <= fold < cfg.folds:
        raise ConfigError(f"--fold must lie in [0, {cfg.folds})")
    tr, va = split_folds(data, cfg.folds, cfg.data.seed)[fold]
    return data.subset(tr if part == "train" else va)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    manifest = generate_dataset(cfg, args.out, workers=args.workers, overwrite=args.overwrite)
    log.info("wrote %d records to %s", cfg.data.num_targets * cfg.data.images_per_target,
             manifest)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    if len(cfg.schemes) != 1:
        raise ConfigError("train takes exactly one --scheme")
    scheme = cfg.schemes[0]
    data = _split(load_dataset(args.data, with_signals="ADV" in scheme), cfg, args.fold, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(data, train_config(cfg, scheme), progress=_progress(scheme))
    result.model.save(out / "model.ckpt", extra={"scheme": scheme})
    write_metrics(result.metrics, out / "metrics.csv")
    log.info("saved %s", out / "model.ckpt")
    return 0


def cmd_attack(args) -> int:
    cfg = _config(args)
    data = _split(load_dataset(args.data, with_signals=False), cfg, args.fold, "val")
    model = ATRModel.load(args.checkpoint)
    summary, results = robustness.evaluate_rho(data.images, model, cfg.deepfool_max_iter,
                                               cfg.deepfool_overshoot)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    robustness.write_attack_csv(out / "attack.csv", data.record_ids, data.labels, results)
    preds = np.array([r.orig_class for r in results])
    info = {"accuracy": float(np.mean(preds == data.labels)), "rho": summary.rho,
            "n_success": summary.n_success, "n_failed": summary.n_failed}
    (out / "attack_summary.json").write_text(json.dumps(info, sort_keys=True, indent=1) + "\n")
    rho = "undefined" if summary.rho is None else f"{summary.rho:.5f}"
    print(f"accuracy={info['accuracy']:.4f} rho={rho} "
          f"success={summary.n_success} failed={summary.n_failed}")
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    results = collect_results(args.out)
    if not results:
        raise DatasetError(f"no scheme results under {args.out}")
    report(results, args.out, cfg.angle_bins)
    print((Path(args.out) / "report.txt").read_text(), end="")
    return 0


def cmd_run_all(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    data_dir = out / "data"
    generate_dataset(cfg, data_dir, workers=args.workers, overwrite=True)
    needs_signals = any("ADV" in s for s in cfg.schemes)
    data = load_dataset(data_dir, with_signals=needs_signals)
    results = {}
    for scheme in cfg.schemes:
        log.info("scheme %s: %d-fold cross-validation", scheme, cfg.folds)
        results[scheme] = run_cv(data, scheme, cfg, out_dir=out, progress=_progress(scheme))
    report(results, out, cfg.angle_bins)
    print((out / "report.txt").read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sar-atr", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme=False, folds=False):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="overrides data.seed and train.seed")
        if scheme:
            p.add_argument("--scheme", action="append",
                           help=f"one of {', '.join(SCHEMES)}; repeat or comma-separate")
        if folds:
            p.add_argument("--folds", type=int, help="number of cross-validation folds")

    p = sub.add_parser("gen-data", help="generate a dataset")
    common(p)
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one scheme")
    common(p, scheme=True, folds=True)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--fold", type=int, help="train on this fold's training split only")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="DeepFool robustness of a checkpoint")
    common(p, folds=True)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--fold", type=int, help="attack this fold's validation split only")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="summarize finished runs")
    common(p)
    p.add_argument("--out", required=True, help="run directory holding <scheme>/summary.json")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run-all", help="generate, cross-validate every scheme, report")
    common(p, scheme=True, folds=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--workers", type=int, default=1, help="dataset generation processes")
    p.set_defaults(func=cmd_run_all)
    return parser


def _category(exc: BaseException) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, (DatasetError, FoldError, FileNotFoundError, KeyError)):
        return "data"
    if isinstance(exc, (TrainingDiverged, FloatingPointError)):
        return "training"
    if isinstance(exc, OSError):
        return "io"
    return "internal"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to a category
        cat = _category(exc)
        msg = str(exc).replace("\n", " ") or type(exc).__name__
        print(f"error category={cat}: {msg}", file=sys.stderr)
        return EXIT_CODES[cat]


if __name__ == "__main__":
    sys.exit(main())
