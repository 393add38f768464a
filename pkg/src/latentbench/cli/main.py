"""``latentbench`` command line: synth, bench, export, stats."""

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import dataio
from ..errors import InvalidInput, LatentBenchError
from ..evalstats import cell_observations, compare_groups
from . import export
from .bench import load_cells, run_bench
from .config import SYNTH_KINDS, load_config

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("latentbench")


class UsageError(Exception):
    pass


def cmd_synth(args):
    if args.r < 1 or args.r >= args.genes:
        raise UsageError(f"intrinsic dimension --r {args.r} must satisfy 1 <= r < --genes {args.genes}")
    if args.voxels < 5:
        raise UsageError("--voxels must be >= 5")
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    ds = dataio.synth_dataset(args.kind, args.voxels, args.genes, args.r, args.noise, args.seed, args.resolution)
    targets = dataio.synth_targets(ds.latent, args.targets, args.seed, args.target_noise)
    paths = dataio.save_dataset(args.out, ds, targets)
    manifest = {"kind": args.kind, "voxels": args.voxels, "genes": args.genes, "r": args.r,
                "noise": args.noise, "seed": args.seed, "targets": [t.name for t in targets],
                "files": {k: str(v) for k, v in paths.items()}}
    (Path(args.out) / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps(manifest, indent=2))
    return EXIT_OK


def cmd_bench(args):
    try:
        cfg = load_config(args.config)
    except InvalidInput as exc:
        raise UsageError(str(exc)) from exc
    cells = run_bench(cfg, args.out, workers=args.workers)
    failed = [c for c in cells if c.status.startswith("failed")]
    for c in failed:
        log.error("cell %s %s", c.key, c.status)
    print(json.dumps({"out": str(args.out), "cells": len(cells), "failed": len(failed)}))
    return EXIT_RUNTIME if len(failed) == len(cells) else EXIT_OK


def cmd_export(args):
    out = Path(args.out)
    if args.kind == "histogram":
        if not args.matrix:
            raise UsageError("histogram export needs --matrix")
        export.write_histogram(dataio.load_matrix(args.matrix), out, args.bins)
        return EXIT_OK
    if not args.latent:
        raise UsageError(f"{args.kind} export needs --latent")
    if args.kind == "annotate" and not args.target:
        raise UsageError("annotate export needs --target")
    if args.kind == "volume" and not args.coords:
        raise UsageError("volume export needs --coords")
    latent = dataio.load_matrix(args.latent)
    if args.kind == "density":
        export.write_density(latent, out, args.bins)
    elif args.kind == "annotate":
        export.write_annotate(latent, dataio.load_target_map(args.target).values, out)
    else:
        export.write_volumes(latent, dataio.load_coords(args.coords), out, args.component)
    return EXIT_OK


def cmd_stats(args):
    cells = load_cells(args.cells)
    groups = cell_observations(cells, args.metric, args.grouping)
    if len(groups) < 2:
        raise InvalidInput(f"need >= 2 groups with {args.metric} values, found {len(groups)}: {sorted(groups)}")
    report = compare_groups(groups, args.metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.json").write_text(report.to_json() + "\n")
    (out / "stats.csv").write_text(report.to_csv())
    print(report.to_json())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="latentbench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--kind", choices=SYNTH_KINDS, required=True)
    s.add_argument("--voxels", type=int, default=512)
    s.add_argument("--genes", type=int, default=200)
    s.add_argument("--r", type=int, default=2, help="intrinsic dimension")
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--targets", type=int, default=0, help="number of synthetic target maps")
    s.add_argument("--target-noise", type=float, default=0.0)
    s.add_argument("--resolution", default="synthetic")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("bench", help="run a benchmark from an INI config")
    b.add_argument("config")
    b.add_argument("--out", required=True)
    b.add_argument("--workers", type=int, default=None, help="worker processes (default: config or cores)")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export", help="write plot-ready data files")
    e.add_argument("kind", choices=("density", "annotate", "volume", "histogram"))
    e.add_argument("--latent", help="latent matrix (lbm or csv)")
    e.add_argument("--target", help="target map csv (annotate)")
    e.add_argument("--coords", help="voxel coordinates csv (volume)")
    e.add_argument("--matrix", help="data matrix (histogram)")
    e.add_argument("--component", type=int, action="append", help="1-based component (volume; repeatable)")
    e.add_argument("--bins", type=int, default=50)
    e.add_argument("--out", required=True, help="output file, or directory for volume")
    e.set_defaults(func=cmd_export)

    t = sub.add_parser("stats", help="ANOVA and Tukey-Kramer over bench cells")
    t.add_argument("--cells", required=True, help="directory of cell JSON records")
    t.add_argument("--metric", choices=("rmse", "r2"), default="rmse")
    t.add_argument("--grouping", choices=("method",), default="method")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_stats)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"latentbench {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LatentBenchError, OSError, ValueError, ArithmeticError) as exc:
        print(f"latentbench {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
