"""Command-line entry points: run, project, calibrate."""

from __future__ import annotations

import argparse
import os
import sys

# honor the thread cap before numpy initializes its thread pools
_threads = os.environ.get("VISCOFRAC_THREADS")
if _threads:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, _threads)

from .errors import ViscofracError  # noqa: E402


def _cmd_run(args) -> int:
    from . import sim
    from .config import parse_config

    cfg = parse_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.snapshot_every is not None:
        cfg.snapshot_every = args.snapshot_every
    result = sim.run(cfg, quiet=args.quiet)
    if not args.quiet:
        print(f"wrote {result['history_csv']} ({len(result['rows'])} steps)")
    return 0


def _cmd_project(args) -> int:
    import numpy as np

    from .damage_lf import lipschitz_project
    from .mesh import build_lip_mesh, load_msh

    mesh = load_msh(args.mesh)
    lip = build_lip_mesh(mesh)
    field = np.zeros(mesh.n_elements)
    with open(args.field, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    for ln in lines:
        idx, _, val = ln.partition(",")
        try:
            field[int(idx)] = float(val)
        except ValueError:
            continue  # header line

    projected = lipschitz_project(lip, field, args.l2, weights=mesh.element_area)
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("element,d\n")
        for i, v in enumerate(projected):
            fh.write(f"{i},{v:.9g}\n")
    if not args.quiet:
        print(f"wrote {args.output}")
    return 0


def _cmd_calibrate(args) -> int:
    from .material import calibrate

    yc, l2 = calibrate(args.gc, args.l1)
    print(f"Yc={yc:.5g} J/m3 l2={l2:.5g} mm")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="viscofrac",
        description="Quasi-static fracture of viscoelastic solids (phase-field / lip-field)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured simulation")
    p_run.add_argument("config", help="path to the run configuration file")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--snapshot-every", type=int, default=None, metavar="N")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_proj = sub.add_parser("project", help="Lipschitz-project a per-element field")
    p_proj.add_argument("--mesh", required=True, help="MSH 2.2 mesh file")
    p_proj.add_argument("--field", required=True, help="CSV with per-element values")
    p_proj.add_argument("--l2", type=float, required=True, help="regularizing length (mm)")
    p_proj.add_argument("--output", required=True, help="output CSV path")
    p_proj.add_argument("--quiet", action="store_true")
    p_proj.set_defaults(func=_cmd_project)

    p_cal = sub.add_parser("calibrate", help="lip-field parameters from (Gc, l1)")
    p_cal.add_argument("gc", type=float, help="fracture toughness (J/m^2)")
    p_cal.add_argument("l1", type=float, help="phase-field length (mm)")
    p_cal.set_defaults(func=_cmd_calibrate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ViscofracError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
