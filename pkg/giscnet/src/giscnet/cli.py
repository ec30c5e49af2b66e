"""Command line: train on a bundle, run inference, report parameters."""

from __future__ import annotations

import argparse
import sys

from .data import load_bundle
from .infer import infer_bundle
from .model import build_network, count_params
from .spec import TrainConfig, get_variant
from .train import train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="giscnet")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a variant on an exported bundle")
    p_train.add_argument("bundle", help="bundle directory (with bundle.json)")
    p_train.add_argument("--out", default="runs/net", help="output directory")
    p_train.add_argument("--variant", default="giscnet32")
    p_train.add_argument("--epochs", type=int, default=200)
    p_train.add_argument("--batch-size", type=int, default=8)
    p_train.add_argument("--learning-rate", type=float, default=1e-4)
    p_train.add_argument("--alpha", type=float, default=50.0)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--denoiser", choices=["off", "gaussian"], default="off")
    p_train.add_argument("--stop-psnr-db", type=float, default=None)

    p_infer = sub.add_parser("infer", help="reconstruct bundle slices with a checkpoint")
    p_infer.add_argument("checkpoint")
    p_infer.add_argument("bundle")
    p_infer.add_argument("--out", default="runs/net/estimates")
    p_infer.add_argument("--role", default=None, choices=[None, "train", "val", "test"])

    p_par = sub.add_parser("params", help="print the trainable parameter count")
    p_par.add_argument("--variant", default="giscnet32")
    p_par.add_argument("--bands", type=int, default=15)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        spec = get_variant(args.variant)
        cfg = TrainConfig(
            alpha=args.alpha,
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            batch_size=args.batch_size,
            denoiser=args.denoiser,
            seed=args.seed,
        )
        result = train(
            load_bundle(args.bundle), spec, cfg, args.out, stop_psnr_db=args.stop_psnr_db
        )
        last = result.history[-1]
        print(
            f"trained {len(result.history)} epochs; last val PSNR "
            f"{last.val_psnr_db:.2f} dB; checkpoint at {result.checkpoint_path}"
        )
    elif args.command == "infer":
        written = infer_bundle(args.checkpoint, args.bundle, args.out, role=args.role)
        print(f"wrote {len(written)} cubes under {args.out}")
    elif args.command == "params":
        spec = get_variant(args.variant)
        print(count_params(build_network(spec, bands=args.bands)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
