"""``qdiff`` command line: thin argparse layer over :mod:`qdiff.harness`."""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .config import PRESETS, load_toml, resolve
from .errors import QdiffError


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML file of RunConfig keys")
    common.add_argument("--preset", choices=sorted(PRESETS), help="named profile (default: paper)")
    common.add_argument("--seed", type=int, help="master seed for episode sampling and QDDM training")
    common.add_argument("--seeds", type=_int_list, help="comma-separated evaluation seeds")
    common.add_argument("--dataset", choices=["digits", "mnist", "fashion"])
    common.add_argument("--algorithm", choices=["lggi", "lgnai", "lgdi"])
    common.add_argument("--steps", type=int, dest="infer_steps", help="inference / generation steps T")
    common.add_argument("--ways", type=int)
    common.add_argument("--shots", type=int)
    common.add_argument("--queries", type=int, dest="queries_per_class")
    common.add_argument("--iterations", type=int)
    common.add_argument("--layers", type=int)
    common.add_argument("--noise-mode", choices=["ddpm", "additive"], dest="noise_mode")
    common.add_argument("--data-dir", dest="data_dir", help="overrides $QDIFF_DATA_DIR")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--workers", type=int)
    common.add_argument("--checkpoint", help="reuse a trained QDDM instead of training one")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qdiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train-qddm", parents=[common], help="train a QDDM on the episode support set")
    sub.add_parser("infer", parents=[common], help="evaluate one algorithm over the evaluation seeds")
    sweep = sub.add_parser("sweep-steps", parents=[common], help="accuracy versus T for each algorithm")
    sweep.add_argument("--values", type=_int_list, default=(1, 5, 10), help="comma-separated T values")
    zs = sub.add_parser("zero-shot", parents=[common], help="train on --dataset, evaluate on --eval-dataset")
    zs.add_argument("--eval-dataset", dest="eval_dataset", choices=["digits", "mnist", "fashion"], required=True)
    sub.add_parser("baselines", parents=[common], help="QMLP, C14, OPTIC and QuantumNAT on the support set")
    gen = sub.add_parser("generate", parents=[common], help="dump generated images as CSV and PGM")
    gen.add_argument("--count", type=int, default=10, help="images per label")
    return parser


_NOT_CONFIG = {"command", "config", "checkpoint", "verbose", "values", "count", "dataset"}


def config_from_args(args):
    file_values = load_toml(args.config) if args.config else {}
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    return resolve(dataset=args.dataset, file_values=file_values, overrides=overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = config_from_args(args)
        if args.command == "train-qddm":
            path, losses = harness.cmd_train_qddm(cfg)
            print(f"checkpoint {path} final loss {losses[-1]:.6f}" if len(losses) else f"checkpoint {path}")
        elif args.command == "infer":
            rows = harness.cmd_infer(cfg, args.checkpoint)
            _print_rows(rows)
        elif args.command == "sweep-steps":
            for r in harness.cmd_sweep_steps(cfg, args.values, checkpoint=args.checkpoint):
                print(f"{r['algorithm']:6s} T={r['steps']:<3d} acc {r['accuracy']:.4f} +- {r['stderr']:.4f}")
        elif args.command == "zero-shot":
            _print_rows(harness.cmd_zero_shot(cfg, args.checkpoint))
        elif args.command == "baselines":
            _print_rows(harness.cmd_baselines(cfg))
        elif args.command == "generate":
            print(harness.cmd_generate(cfg, args.checkpoint, args.count))
    except QdiffError as exc:
        print(f"qdiff: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"qdiff: error: {exc}", file=sys.stderr)
        return 2
    return 0


def _print_rows(rows):
    for r in rows:
        se = f" +- {r.stderr:.4f}" if r.seed == "mean" else ""
        print(f"{r.dataset} {r.task} {r.algorithm:10s} seed {r.seed:>4s} acc {r.accuracy:.4f}{se}")
