"""Command-line entry points: synth, prepare-labels, train, evaluate, predict, sweep."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import synth
from .config import ABLATION_VARIANTS, TrainConfig
from .data import export_patch_labels
from .evaluate import evaluate_checkpoint, predict_to_dir
from .metrics import write_report_json, write_reports_csv
from .train import train


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")
    group = parser.add_argument_group("config overrides")
    group.add_argument("--patch-size", type=int, dest="patch_size", default=None,
                       help="square patch size (sets patch_h and patch_w)")
    group.add_argument("--channels", type=int, default=None)
    group.add_argument("--num-prototypes", type=int, dest="num_prototypes", default=None)
    group.add_argument("--num-blocks", type=int, dest="num_blocks", default=None)
    group.add_argument("--iterations", type=int, dest="max_iterations", default=None)
    group.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    group.add_argument("--base-lr", type=float, dest="base_lr", default=None)
    group.add_argument("--seed", type=int, default=None)
    group.add_argument("--threshold", type=float, default=None)
    group.add_argument("--checkpoint-every", type=int, dest="checkpoint_every", default=None)
    group.add_argument("--log-every", type=int, dest="log_every", default=None)
    for flag in ("no-bab", "no-p2m", "no-mp", "no-ap", "no-pcl", "no-upcl", "direct-sup"):
        group.add_argument(
            f"--{flag}", action="store_const", const=True,
            dest=flag.replace("-", "_"), default=None,
        )


def _build_config(args: argparse.Namespace) -> TrainConfig:
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    overrides = {}
    for field in (
        "channels", "num_prototypes", "num_blocks", "max_iterations", "batch_size",
        "base_lr", "seed", "threshold", "checkpoint_every", "log_every",
        "no_bab", "no_p2m", "no_mp", "no_ap", "no_pcl", "no_upcl", "direct_sup",
    ):
        value = getattr(args, field, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "patch_size", None) is not None:
        overrides["patch_h"] = overrides["patch_w"] = args.patch_size
    return cfg.with_overrides(overrides)


def _cmd_synth(args) -> int:
    counts = synth.synth_dataset(
        args.out, args.num_samples, image_size=args.image_size,
        seed=args.seed, train_fraction=args.train_fraction,
    )
    print(f"wrote {counts['train']} train / {counts['test']} test pairs to {args.out}")
    print(
        f"(textured backgrounds from a {synth.BACKGROUND_CELLS}x{synth.BACKGROUND_CELLS} "
        f"noise grid; shapes {', '.join(synth.SHAPE_KINDS)}; pixel noise sd "
        f"{synth.PIXEL_NOISE_STD}; brightness jitter +-{synth.BRIGHTNESS_JITTER})"
    )
    return 0


def _cmd_prepare_labels(args) -> int:
    root = Path(args.root)
    splits = args.splits or sorted(
        p.name for p in root.iterdir() if (p / "label").is_dir()
    )
    if not splits:
        print(f"no splits with label directories under {root}", file=sys.stderr)
        return 1
    for split in splits:
        out_dirs = export_patch_labels(root, split, args.patch_sizes)
        for size, out_dir in sorted(out_dirs.items()):
            print(f"{split}: exported patch labels at {size}x{size} to {out_dir}")
    return 0


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    result = train(cfg, args.root, args.out, resume_from=args.resume)
    print(f"final checkpoint: {result.checkpoint_path}")
    return 0


def _cmd_evaluate(args) -> int:
    report = evaluate_checkpoint(
        args.checkpoint, args.root, split=args.split,
        threshold=args.threshold, gt_as_prediction=args.gt_as_prediction,
    )
    print(report.to_json())
    if args.json_out:
        write_report_json(report, args.json_out)
    if args.csv_out:
        write_reports_csv([report], args.csv_out)
    return 0


def _cmd_predict(args) -> int:
    paths = predict_to_dir(
        args.checkpoint, args.root, args.split, args.out, threshold=args.threshold
    )
    print(f"wrote {len(paths)} change maps to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    unknown = sorted(set(args.variants) - set(ABLATION_VARIANTS))
    if unknown:
        print(f"unknown variants: {', '.join(unknown)}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table: dict[str, dict[int, dict]] = {}
    for variant in args.variants:
        table[variant] = {}
        for patch in args.patch_sizes:
            run_cfg = cfg.with_overrides(
                {**ABLATION_VARIANTS[variant], "patch_h": patch, "patch_w": patch}
            )
            run_dir = out / f"{variant}_p{patch}"
            result = train(run_cfg, args.root, run_dir, quiet=True)
            report = evaluate_checkpoint(result.checkpoint_path, args.root, split=args.split)
            table[variant][patch] = report.to_dict()
            print(
                f"{variant} @ {patch}x{patch}: "
                f"kappa {report.kappa:.4f} iou {report.iou:.4f} f1 {report.f1:.4f}"
            )

    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["variant"]
        for patch in args.patch_sizes:
            header += [f"kappa_{patch}x{patch}", f"iou_{patch}x{patch}", f"f1_{patch}x{patch}"]
        writer.writerow(header)
        for variant in args.variants:
            row = [variant]
            for patch in args.patch_sizes:
                cell = table[variant][patch]
                row += [f"{cell['kappa']:.4f}", f"{cell['iou']:.4f}", f"{cell['f1']:.4f}"]
            writer.writerow(row)
    (out / "sweep.json").write_text(json.dumps(table, indent=2, sort_keys=True))
    print(f"sweep table written to {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchcd",
        description="Weakly supervised change detection from patch-level annotations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bi-temporal dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--num-samples", type=int, default=200)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("prepare-labels", help="export patch-level label PNGs")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--splits", nargs="*", default=None)
    p.add_argument("--patch-sizes", type=int, nargs="+", required=True)
    p.set_defaults(func=_cmd_prepare_labels)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", type=Path, default=None)
    _add_config_options(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--json-out", type=Path, default=None)
    p.add_argument("--csv-out", type=Path, default=None)
    p.add_argument("--gt-as-prediction", action="store_true",
                   help="debug: score ground truth against itself")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="write binarized change maps as PNGs")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("sweep", help="train/evaluate a patch-size x variant grid")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--patch-sizes", type=int, nargs="+", required=True)
    p.add_argument("--variants", nargs="+", default=["default"],
                   help=f"subset of: {', '.join(ABLATION_VARIANTS)}")
    _add_config_options(p)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
