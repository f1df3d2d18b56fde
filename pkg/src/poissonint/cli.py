"""Command-line front door: batch solves, density output, oracle comparison
tables, convergence ladders, and the HTTP service launcher.

Exit codes: 0 success, 1 user error (bad flags, unparsable expressions,
out-of-domain values), 2 numerical failure (stability violation, mass leak,
quadrature or segmentation breakdown).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .density import central_difference_density, smooth_density
from .diagnostics import ConvergenceProblem, convergence_study
from .expr import ExpressionError, parse
from .model import (
    ControlDensity,
    Mesh,
    SegmentClass,
    SegmentationFailure,
    TimeGrid,
    grid_to_csv,
    grid_to_json_dict,
    segment_kernel,
)
from .oracles import (
    CfSpec,
    QuadratureFailure,
    cf_inversion_cdf,
    irwin_hall_cdf,
    mc_sample,
)
from .solver import MassLeakWarning, SolveConfig, StabilityViolation, stability_check
from .transforms import compose_piecewise


def _positive(name: str, value: float) -> float:
    if not value > 0.0:
        raise ValueError(f"--{name} must be positive, got {value:g}")
    return value


def _choose_mesh(segments, delta: float, x_max: float) -> Mesh:
    """Mesh sign from the kernel's segment classes.

    Kernels taking both signs get a symmetric window; purely negative ones
    live on [-x_max, 0].  Flat levels count toward whichever sign they carry.
    """
    pos = neg = False
    for seg in segments:
        if seg.klass is SegmentClass.FLAT:
            level = seg.flat_level or 0.0
            pos |= level > 1e-12
            neg |= level < -1e-12
        elif seg.klass in (SegmentClass.INCREASING_POSITIVE, SegmentClass.DECREASING_POSITIVE):
            pos = True
        else:
            neg = True
    if neg and pos:
        return Mesh(delta, -x_max, x_max)
    if neg:
        return Mesh(delta, -x_max, 0.0)
    return Mesh(delta, 0.0, x_max)


def _solve_from_args(args):
    parse(args.g)  # surface syntax errors with offsets before anything runs
    for name in ("T", "delta", "h", "xmax"):
        _positive(name, getattr(args, name))
    n = ControlDensity(args.n, t_hi=args.T)
    # gate on stability before the time grid is even built, so h > T still
    # reports the violation rather than a step-count complaint
    if stability_check(args.h, n.n_star) <= 0.0:
        raise StabilityViolation(
            f"h * sup(n) = {args.h * n.n_star:.6g} >= 1; reduce h below "
            f"{1.0 / n.n_star:.6g}"
        )
    segments = segment_kernel(args.g, args.T)
    mesh = _choose_mesh(segments, args.delta, args.xmax)
    cfg = SolveConfig(
        mesh,
        TimeGrid(args.h, args.T),
        atom_pinning=getattr(args, "pin_atom", False),
    )
    started = time.perf_counter()
    grid = compose_piecewise(args.g, n, args.T, cfg, breakpoints=None)
    meta = {
        "g": args.g,
        "n": args.n,
        "T": args.T,
        "delta": args.delta,
        "h": args.h,
        "x_max": args.xmax,
        "mass_captured": grid.mass_captured,
        "wall_time": time.perf_counter() - started,
    }
    return grid, meta


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_solve(args) -> int:
    grid, meta = _solve_from_args(args)
    if args.format == "csv":
        _emit(grid_to_csv(grid), args.out)
    else:
        _emit(json.dumps(grid_to_json_dict(grid, meta=meta), indent=2) + "\n", args.out)
    return 0


def _density_csv(density) -> str:
    lines = ["x,f"]
    for x, v in zip(density.mesh.nodes.tolist(), density.values.tolist()):
        lines.append(f"{x!r},{v!r}")
    for loc, mass in density.atoms:
        lines.append(f"# atom,{loc!r},{mass!r}")
    lines.append(f"# clamped_mass,{density.clamped_mass!r}")
    return "\n".join(lines) + "\n"


def _density_json_dict(density) -> dict:
    return {
        "mesh": {
            "delta": density.mesh.delta,
            "x_min": density.mesh.x_min,
            "x_max": density.mesh.x_max,
        },
        "values": density.values.tolist(),
        "atoms": [{"x": loc, "mass": mass} for loc, mass in density.atoms],
        "delta1": density.delta1,
        "clamped_mass": density.clamped_mass,
    }


def cmd_density(args) -> int:
    grid, _ = _solve_from_args(args)
    density = central_difference_density(grid, args.delta1)
    if args.smooth_window is not None:
        density = smooth_density(density, args.smooth_window)
    if args.format == "csv":
        _emit(_density_csv(density), args.out)
    else:
        _emit(json.dumps(_density_json_dict(density), indent=2) + "\n", args.out)
    return 0


def cmd_oracle(args) -> int:
    grid, _ = _solve_from_args(args)
    nodes = grid.mesh.nodes
    idx = np.unique(np.linspace(0, nodes.shape[0] - 1, args.points).round().astype(int))
    xs = nodes[idx]
    fd = grid.values[idx]

    if args.against == "series":
        ref = irwin_hall_cdf(xs)
    elif args.against == "mc":
        n = ControlDensity(args.n, t_hi=args.T)
        samples = mc_sample(
            args.g, n, args.T, count=args.samples, seed=args.seed, workers=args.workers
        )
        ref = np.searchsorted(samples, xs, side="right") / samples.shape[0]
    else:
        n = ControlDensity(args.n, t_hi=args.T)
        spec = CfSpec(args.g, n, args.T, truncation=args.truncation, eta=args.eta)
        ref = np.array([cf_inversion_cdf(spec, x) if x > 0 else np.nan for x in xs])

    print(f"{'x':>12} {'fd':>20} {'ref':>20} {'abs_err':>12} {'rel_err':>12}")
    max_abs = max_rel = 0.0
    for x, a, b in zip(xs, fd, ref):
        if np.isnan(b):
            print(f"{x:>12.6g} {a:>20.12g} {'-':>20} {'-':>12} {'-':>12}")
            continue
        abs_err = abs(a - b)
        max_abs = max(max_abs, abs_err)
        if abs(b) > 1e-300:
            rel = abs_err / abs(b)
            max_rel = max(max_rel, rel)
            print(f"{x:>12.6g} {a:>20.12g} {b:>20.12g} {abs_err:>12.4g} {rel:>12.4g}")
        else:
            print(f"{x:>12.6g} {a:>20.12g} {b:>20.12g} {abs_err:>12.4g} {'-':>12}")
    print(f"max_abs_err {max_abs:.6g}")
    print(f"max_rel_err {max_rel:.6g}")
    return 0


def cmd_converge(args) -> int:
    deltas = [float(tok) for tok in args.resolutions.split(",") if tok.strip()]
    if not deltas:
        raise ValueError("--resolutions needs at least one value")
    for d in deltas:
        _positive("resolutions", d)
    if args.against == "series":
        oracle = irwin_hall_cdf
    else:
        n = ControlDensity(args.n, t_hi=args.T)
        spec = CfSpec(args.g, n, args.T, truncation=args.truncation, eta=args.eta)

        def oracle(xs):
            return np.array([cf_inversion_cdf(spec, x) if x > 0 else 0.0 for x in xs])

    problem = ConvergenceProblem(
        g=args.g, n=args.n, T=args.T, x_max=args.xmax, oracle=oracle
    )
    table = convergence_study(problem, [(d, d) for d in deltas])
    print(f"{'delta':>10} {'h':>10} {'l1_error':>14}")
    for row in table.rows:
        print(f"{row.delta:>10.4g} {row.h:>10.4g} {row.l1_error:>14.6g}")
    print(f"fitted_order {table.fitted_order:.4f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


def _add_solve_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--g", required=True, help="kernel expression in s, e.g. 'sin(2*pi*s)'")
    p.add_argument("--n", required=True, help="control density expression in s")
    p.add_argument("--T", required=True, type=float, help="time horizon")
    p.add_argument("--delta", required=True, type=float, help="spatial mesh step")
    p.add_argument("--h", required=True, type=float, help="time step")
    p.add_argument("--xmax", required=True, type=float, help="spatial window extent")
    p.add_argument(
        "--pin-atom",
        action="store_true",
        help="overwrite the zero node with the exact atom mass each step",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poissonint",
        description="CDFs of one-dimensional Poisson integrals via a "
        "differential-difference scheme",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve and write the CDF grid")
    _add_solve_flags(p)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("density", help="solve, then write a smoothed density")
    _add_solve_flags(p)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--delta1", type=float, help="difference width (default 10*delta)")
    p.add_argument("--smooth-window", type=float, help="box smoothing width")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("oracle", help="compare the grid against a reference")
    _add_solve_flags(p)
    p.add_argument(
        "--against",
        choices=("series", "mc", "cf"),
        required=True,
        help="series: closed-form mixture for g=s, n=1, T=1; "
        "mc: empirical CDF; cf: characteristic-function inversion",
    )
    p.add_argument("--points", type=int, default=11, help="table rows")
    p.add_argument("--samples", type=int, default=1_000_000, help="mc replicates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, help="mc worker threads")
    p.add_argument("--truncation", type=float, default=100.0, help="cf integral cap")
    p.add_argument("--eta", type=float, default=0.01, help="cf node spacing")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("converge", help="error ladder over mesh resolutions")
    p.add_argument("--g", required=True)
    p.add_argument("--n", required=True)
    p.add_argument("--T", required=True, type=float)
    p.add_argument("--xmax", required=True, type=float)
    p.add_argument(
        "--resolutions",
        default="4e-3,2e-3,1e-3",
        help="comma-separated delta values; h = delta for each",
    )
    p.add_argument("--against", choices=("series", "cf"), default="series")
    p.add_argument("--truncation", type=float, default=100.0)
    p.add_argument("--eta", type=float, default=0.01)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that is a user error here, and 2
        # is reserved for numerical failures
        return 0 if exc.code == 0 else 1
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", MassLeakWarning)
            return args.func(args)
    except (StabilityViolation, MassLeakWarning, QuadratureFailure, SegmentationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ExpressionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
