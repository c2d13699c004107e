"""Command-line front end: Monte-Carlo sweeps and self-check batteries."""

from __future__ import annotations

import argparse
import sys
import time

from . import checks, harness
from .model import config_from_json


def _parse_deltas(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected lo:hi:step")
    lo, hi, step = (float(t) for t in parts)
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("need step > 0 and hi >= lo")
    grid = []
    v = lo
    while v <= hi + 1e-9 * step:
        grid.append(round(v, 12))
        v += step
    return tuple(grid)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="irs-rra", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a seeded sweep and emit CSV datasets")
    sim.add_argument("--config", required=True, help="NetworkConfig JSON file")
    sim.add_argument("--deltas", required=True, type=_parse_deltas, metavar="LO:HI:STEP")
    sim.add_argument("--realizations", type=int, default=200)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--schemes", default="proposed,mrs,no_irs",
                     help="comma-separated subset of proposed,mrs,no_irs")
    sim.add_argument("--out", required=True, help="output directory for CSV files")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--gamma-tol", type=float, default=1e-3)
    sim.add_argument("--quiet", action="store_true")

    chk = sub.add_parser("check", help="run the invariant or oracle battery")
    chk.add_argument("--suite", required=True, choices=["invariants", "oracle"])
    chk.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        spec = harness.ExperimentSpec(
            config=config_from_json(args.config),
            delta_grid=args.deltas,
            n_realizations=args.realizations,
            master_seed=args.seed,
            schemes=tuple(s.strip() for s in args.schemes.split(",") if s.strip()),
            output_dir=args.out,
            gamma_tol=args.gamma_tol,
        )
        t0 = time.time()
        progress = None
        if not args.quiet:
            def progress(done, total):
                print(f"\rrealization {done}/{total} ({time.time() - t0:.0f}s)", end="", file=sys.stderr)
        records, failures = harness.run_sweep(spec, n_workers=args.workers, progress=progress)
        if not args.quiet:
            print(file=sys.stderr)
        print(f"wrote {len(records)} records to {args.out} "
              f"({len(failures)} failures) in {time.time() - t0:.1f}s")
        return 0
    if args.command == "check":
        results = checks.run_suite(args.suite, seed=args.seed)
        width = max(len(name) for name, _, _ in results)
        ok_all = True
        for name, ok, detail in results:
            ok_all &= ok
            print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
        return 0 if ok_all else 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
