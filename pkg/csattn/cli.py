"""
csattn/cli.py

Command-line surface:

    train     --config <file>                        train and checkpoint
    infer     --ckpt <file> --in <png> --out <png>   restore one image
    gradcheck [--module all|tensor|nn|block|net]     finite-difference checks
    count     --config <file> --hw H W               params / FLOPs / memory
    ablate    --config <file> --rows a,b,...         component ablation matrix
    evaluate  --ckpt <file> [--pairs D C | --synth N] PSNR / SSIM / MAE
    plot      --csv <files> --column loss --out <svg>
    view      [--run <dir>]                          desktop results viewer

Exit codes: 0 success, 1 runtime failure (or failed gradient check), 2 usage.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from csattn.errors import CSAttnError
from csattn.log import setup_logging

log = logging.getLogger(__name__)


def _train_config(path: Optional[str]):
    from csattn.config import TrainConfig, load_config

    if path is None:
        cfg = TrainConfig()
        cfg.validate()
        return cfg
    return load_config(path)


def _network(args):
    from csattn.checkpoint import load_network

    net_cfg = _train_config(args.config).net if args.config else None
    return load_network(args.ckpt, net_cfg)


# ---------------------------------------------------------------------- Commands

def cmd_train(args) -> int:
    from csattn.trainer import train

    cfg = _train_config(args.config)
    changes = {}
    if args.out:
        changes["out_dir"] = args.out
    if args.steps:
        changes["total_steps"] = args.steps
    if args.seed is not None:
        changes["seed"] = args.seed
    cfg = dataclasses.replace(cfg, **changes)
    result = train(cfg, progress=not args.no_progress)
    m = result.train_metrics
    print(f"final loss {result.final_loss:.6f}  train PSNR {m['psnr']:.2f} dB  SSIM {m['ssim']:.4f}  MAE {m['mae']:.4f}")
    print(f"checkpoint: {result.final_checkpoint}")
    return 0


def cmd_infer(args) -> int:
    from csattn.imageio import read_png, write_png
    from csattn.net import infer_image

    params = _network(args)
    image = read_png(args.input)
    restored = infer_image(params, image)
    write_png(args.output, restored, bits=args.bits)
    log.info("restored %s (%dx%d) -> %s", args.input, image.shape[2], image.shape[1], args.output)
    return 0


def cmd_gradcheck(args) -> int:
    from csattn.gradcheck_suite import run_suite

    reports = run_suite(args.module, seed=args.seed)
    failed = [r for r in reports if not r.passed]
    for r in reports:
        print(r)
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return 1 if failed else 0


def cmd_count(args) -> int:
    from csattn.costs import count_flops
    from csattn.net import build, count_params

    cfg = _train_config(args.config)
    h, w = args.hw if args.hw else (cfg.patch, cfg.patch)
    report = count_flops(cfg.net, h, w)
    print(report.to_text(per_layer=args.per_layer), end="")
    if args.verify:
        built = count_params(build(cfg.net, seed=cfg.seed))
        print(f"built network parameters: {built:,}")
        if built != report.params:
            log.error("analytic parameter count %d differs from built network %d", report.params, built)
            return 1
    if args.csv:
        report.write_csv(args.csv)
        log.info("wrote %s", args.csv)
    return 0


def cmd_ablate(args) -> int:
    from csattn.ablation import parse_rows, run_ablation

    cfg = _train_config(args.config)
    rows = parse_rows(args.rows)
    results = run_ablation(cfg, rows, Path(args.out) if args.out else None, train_rows=not args.no_train, progress=not args.no_progress)
    for r in results:
        loss = "" if r.final_loss is None else f"  final loss {r.final_loss:.6f}"
        print(f"{r.row:<10} {r.label:<26} params {r.cost.params:>10,}  flops {r.cost.flops:>14,}{loss}")
    return 0


def cmd_evaluate(args) -> int:
    from csattn.data import load_pairs, synthetic_dataset
    from csattn.trainer import evaluate

    params = _network(args)
    if args.pairs:
        dataset = load_pairs(*args.pairs)
    else:
        spec = _train_config(args.config).synth
        if args.kind:
            spec = dataclasses.replace(spec, kind=args.kind)
        dataset = synthetic_dataset(spec, args.synth)
    metrics = evaluate(params, dataset, y_channel=args.y_channel)
    mode = "Y" if args.y_channel else "RGB"
    print(f"{len(dataset)} images ({mode}): PSNR {metrics['psnr']:.3f} dB  SSIM {metrics['ssim']:.4f}  MAE {metrics['mae']:.4f}")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["images", "mode", "psnr", "ssim", "mae"])
            writer.writerow([len(dataset), mode, metrics["psnr"], metrics["ssim"], metrics["mae"]])
    return 0


def cmd_plot(args) -> int:
    from csattn.plot import plot_csvs

    out = plot_csvs(args.csv, args.column, args.out, log_y=args.log_y)
    print(out)
    return 0


def cmd_view(args) -> int:
    from PySide6.QtWidgets import QApplication

    from app.main_window import MainWindow

    app = QApplication.instance() or QApplication(sys.argv[:1])
    window = MainWindow(args.run)
    window.show()
    return app.exec()


# ---------------------------------------------------------------------- Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csattn", description="Continuous Scaling Attention restoration toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network")
    p.add_argument("--config", help="TrainConfig JSON (default: desk configuration)")
    p.add_argument("--out", help="override out_dir")
    p.add_argument("--steps", type=int, help="override total_steps")
    p.add_argument("--seed", type=int, help="override seed")
    p.add_argument("--no-progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="restore a PNG image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--config", help="TrainConfig JSON describing the network (default: checkpoint sidecar)")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--module", choices=("all", "tensor", "nn", "block", "net"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("count", help="parameter / FLOPs / activation-memory report")
    p.add_argument("--config")
    p.add_argument("--hw", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--per-layer", action="store_true")
    p.add_argument("--csv", help="write per-layer rows as CSV")
    p.add_argument("--verify", action="store_true", help="also build the network and compare parameter counts")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("ablate", help="run the component ablation matrix")
    p.add_argument("--config")
    p.add_argument("--rows", default="a,b,c,d,e,f,stacked")
    p.add_argument("--out", help="output directory (default: out_dir of the config)")
    p.add_argument("--no-train", action="store_true", help="report costs only")
    p.add_argument("--no-progress", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("evaluate", help="PSNR / SSIM / MAE of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--pairs", nargs=2, metavar=("DEGRADED_DIR", "CLEAN_DIR"))
    source.add_argument("--synth", type=int, default=8, metavar="N", help="N synthetic pairs (default)")
    p.add_argument("--kind", choices=("rain", "haze", "lowlight"))
    p.add_argument("--y-channel", action="store_true", help="compare BT.601 luma instead of RGB")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="SVG line chart of metric CSVs")
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--column", default="loss")
    p.add_argument("--out", required=True)
    p.add_argument("--log-y", action="store_true")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("view", help="desktop results viewer")
    p.add_argument("--run", help="run or ablation directory to open")
    p.set_defaults(func=cmd_view)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logging(-1 if args.quiet else args.verbose)
    try:
        return args.func(args)
    except (CSAttnError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
