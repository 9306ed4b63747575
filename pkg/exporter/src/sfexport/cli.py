"""Command-line surface: export checkpoints, generate fixtures."""

from __future__ import annotations

import argparse
import sys

from .arch import ARCHITECTURES, FIXTURE_PRESETS
from .export import ExportError, export_checkpoint
from .fixture import FixtureError, make_fixture


def cmd_export(args) -> int:
    cfg = None
    if args.tq is not None or args.tmin is not None or args.tmax is not None:
        if args.tq is None or args.tmin is None or args.tmax is None:
            print("error: --tq, --tmin and --tmax must be given together", file=sys.stderr)
            return 3
        cfg = {"t_q": args.tq, "t_min": args.tmin, "t_max": args.tmax}
    manifest = export_checkpoint(args.ckpt, args.arch, args.out, cfg=cfg)
    print(f"arch={manifest['arch']}")
    print(f"parameters={len(manifest['mapping'])}")
    return 0


def cmd_fixture(args) -> int:
    summary = make_fixture(
        args.seed, args.preset, args.out, cfg=(args.tq, args.tmin, args.tmax), images=args.images
    )
    print(f"preset={summary['preset']}")
    print(f"layers={summary['layers']}")
    print(f"images={summary['images']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikeforge-export",
        description="Export framework checkpoints into network containers and build test fixtures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="export a checkpoint to an ANN container")
    p.add_argument("--arch", required=True, choices=sorted(ARCHITECTURES))
    p.add_argument("--ckpt", required=True, help="checkpoint path (.npz, .pt, .pth)")
    p.add_argument("--out", required=True, help="output container directory")
    p.add_argument("--tq", type=int, default=None, help="embed a quantization window")
    p.add_argument("--tmin", type=int, default=None)
    p.add_argument("--tmax", type=int, default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("fixture", help="generate a deterministic fixture directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--preset", required=True, choices=sorted(FIXTURE_PRESETS))
    p.add_argument("--out", required=True, help="output fixture directory")
    p.add_argument("--tq", type=int, default=10)
    p.add_argument("--tmin", type=int, default=0)
    p.add_argument("--tmax", type=int, default=8)
    p.add_argument("--images", type=int, default=4)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ExportError, FixtureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
