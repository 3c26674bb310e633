"""Command-line front end.

One entry point with a --command switch: forward simulation, reconstruction
from a stored datum, the analytic parameter sweeps, the two-inclusion
phantom, and the selftest. Flags override values from an optional JSON
config (which may be a previously written meta.json). Exit codes: 0 on
success, 1 on numerical failure, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .mesh import MeshError
from .pipelines import COMMANDS, RunDescriptor, UsageError, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eitseries",
        description="Series-reversion reconstruction of conductivity "
                    "perturbations from boundary measurements")
    p.add_argument("--command", choices=COMMANDS, help="what to run")
    p.add_argument("--config", help="JSON descriptor (or a meta.json) to start from")
    p.add_argument("--out", help="output directory")
    p.add_argument("--backend", choices=("cm", "scem", "analytic"))
    p.add_argument("--scenario", help="forward/reconstruct scenario "
                                      "(concentric, phantom, pixels, zero)")
    p.add_argument("--mesh-h", type=float, dest="mesh_h", help="target mesh size")
    p.add_argument("--degree", type=int, choices=(1, 2), help="FE degree")
    p.add_argument("--J", type=int, help="number of boundary basis functions")
    p.add_argument("--K", type=int, help="reversion order")
    p.add_argument("--alpha", type=float, help="SVD truncation threshold")
    p.add_argument("--beta", type=float, help="pixel contrast cut-off")
    p.add_argument("--rho", type=float, help="inner-circle radius")
    p.add_argument("--span", help="comma-separated measurement frequencies, e.g. 1,2")
    p.add_argument("--kappa", help="comma-separated annulus,disk perturbation values")
    p.add_argument("--datum", help="measurement matrix CSV for reconstruct")
    p.add_argument("--base-datum", dest="base_datum",
                   help="background matrix CSV for relative data")
    p.add_argument("--phantom-mode", dest="phantom_mode",
                   choices=("aligned", "freeform"))
    p.add_argument("--target-pixels", type=int, dest="target_pixels")
    p.add_argument("--seed", type=int, help="seed for randomised selftest checks")
    p.add_argument("--selftest-fault", action="store_true", default=None,
                   help="inject a sign fault to exercise the selftest's "
                        "negative control")
    return p


def descriptor_from_args(args: argparse.Namespace) -> RunDescriptor:
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        desc = RunDescriptor.from_mapping(json.loads(path.read_text()))
    else:
        desc = RunDescriptor()
    for name in ("command", "out", "backend", "scenario", "mesh_h", "degree",
                 "J", "K", "alpha", "beta", "rho", "datum", "base_datum",
                 "phantom_mode", "target_pixels", "seed", "selftest_fault"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(desc, name, value)
    if args.span is not None:
        try:
            desc.span = tuple(int(s) for s in args.span.split(","))
        except ValueError as exc:
            raise UsageError(f"cannot parse span {args.span!r}") from exc
    if args.kappa is not None:
        try:
            values = tuple(float(s) for s in args.kappa.split(","))
        except ValueError as exc:
            raise UsageError(f"cannot parse kappa {args.kappa!r}") from exc
        if len(values) != 2:
            raise UsageError("kappa takes exactly two values: annulus,disk")
        desc.kappa = values
    return desc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        desc = descriptor_from_args(args)
        desc.validate()
    except (UsageError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        outcome = run(desc)
    except (UsageError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    if desc.command == "selftest" and not outcome["ok"]:
        return 1
    print(f"wrote {outcome['outdir']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
