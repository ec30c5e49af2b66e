"""Command-line entry point.

Subcommands: gen-speckles, slice, measure, reconstruct, export-for-net,
eval, render.  Exit codes: 0 success, 2 configuration error, 3
data-pairing or file-format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import load_config
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateCalibrationError,
    FormatError,
    GiscError,
    InvalidParameterError,
    MemoryEffectError,
    NumericError,
    PairingError,
    ShapeError,
    StepSizeError,
)

EXIT_CONFIG = 2
EXIT_PAIRING = 3
EXIT_NUMERIC = 4


def _exit_code(exc: GiscError) -> int:
    if isinstance(exc, (ConfigError, CapacityError, InvalidParameterError)):
        return EXIT_CONFIG
    if isinstance(exc, (PairingError, FormatError, ShapeError, MemoryEffectError)):
        return EXIT_PAIRING
    if isinstance(exc, (NumericError, StepSizeError, DegenerateCalibrationError)):
        return EXIT_NUMERIC
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="giscsim",
        description="Speckle spectral-camera simulation and reconstruction benchmark",
    )
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--workers", type=int, help="parallel workers (overrides config)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any config field, e.g. optics.corr_len_um=8 (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-speckles", help="write calibration speckle patterns")
    sub.add_parser("slice", help="cut dataset cubes into tiles and split them")
    sub.add_parser("measure", help="simulate one measurement per slice")
    p_rec = sub.add_parser("reconstruct", help="run a solver over all measurements")
    p_rec.add_argument(
        "--algorithm", choices=["gi", "dgi", "cs_fista"], help="override recon.algorithm"
    )
    sub.add_parser("export-for-net", help="bundle training triples for the network")
    sub.add_parser("eval", help="score estimates and write metric tables")
    p_ren = sub.add_parser("render", help="render a cube as a pseudo-color PNG")
    p_ren.add_argument("cube", help="input HSIB file")
    p_ren.add_argument("png", help="output PNG path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"experiment.master_seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"experiment.workers={args.workers}")
    if args.out is not None:
        overrides.append(f'experiment.out_dir="{args.out}"')
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "gen-speckles":
            files = pipeline.cmd_gen_speckles(cfg)
            print(f"wrote {len(files)} calibration patterns under {cfg.out_dir}")
        elif args.command == "slice":
            manifest = pipeline.cmd_slice(cfg)
            n = sum(len(e.slice_indices) for e in manifest.entries)
            print(f"wrote {n} slices under {cfg.out_dir}/slices")
        elif args.command == "measure":
            files = pipeline.cmd_measure(cfg)
            print(f"wrote {len(files)} measurements under {cfg.out_dir}/measurements")
        elif args.command == "reconstruct":
            files = pipeline.cmd_reconstruct(cfg, args.algorithm)
            print(f"wrote {len(files)} estimates under {cfg.out_dir}/estimates")
        elif args.command == "export-for-net":
            files = pipeline.cmd_export_for_net(cfg)
            print(f"wrote {len(files)} bundle files under {cfg.out_dir}/bundle")
        elif args.command == "eval":
            summary = pipeline.cmd_eval(cfg)
            print(f"wrote {summary}")
        elif args.command == "render":
            out = pipeline.cmd_render(args.cube, args.png)
            print(f"wrote {out}")
        return 0
    except GiscError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
