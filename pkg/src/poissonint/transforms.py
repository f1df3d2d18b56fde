"""Kernel reductions and CDF combination.

The solver handles one shape: non-negative, non-decreasing kernels.  Everything
else reduces to it.  A decreasing segment is solved after reversing time (the
integral's law is invariant under reversing both kernel and intensity across
the segment).  A negative segment is solved for -g and the CDF reflected via
F(u) = 1 - F_neg((-u)^-).  A flat segment contributes an exact lattice of
Poisson atoms at multiples of the level.  Independent segment contributions
combine by Stieltjes convolution; consecutive same-sign segments instead chain
through the solver's initial condition, which avoids quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .expr import BinOp, Expression, Neg, Num, Var, parse, substitute
from .model import (
    CdfGrid,
    ControlDensity,
    KernelSegment,
    Mesh,
    SegmentClass,
    TimeGrid,
    integrate_control,
    segment_kernel,
)
from .solver import ATOM_PRUNE_TOL, PointMassAtZero, SolveConfig, solve_segment


class MeshMismatch(ValueError):
    """Convolution operands must share delta."""


class MeshTooShort(ValueError):
    """The requested mesh cannot hold the atom lattice."""


class Reduction(Enum):
    DIRECT = "Direct"
    TIME_REVERSAL = "TimeReversal"
    REFLECTION = "Reflection"
    REFLECTION_AND_TIME_REVERSAL = "ReflectionAndTimeReversal"
    EXACT_POISSON = "ExactPoisson"


_REDUCTION_FOR = {
    SegmentClass.INCREASING_POSITIVE: Reduction.DIRECT,
    SegmentClass.DECREASING_POSITIVE: Reduction.TIME_REVERSAL,
    SegmentClass.DECREASING_NEGATIVE: Reduction.REFLECTION,
    SegmentClass.INCREASING_NEGATIVE: Reduction.REFLECTION_AND_TIME_REVERSAL,
    SegmentClass.FLAT: Reduction.EXACT_POISSON,
}


@dataclass(frozen=True)
class SegmentPlan:
    steps: tuple[tuple[KernelSegment, Reduction], ...]


def plan_segments(segments: list[KernelSegment]) -> SegmentPlan:
    return SegmentPlan(tuple((seg, _REDUCTION_FOR[seg.klass]) for seg in segments))


def reverse_time(
    g: Expression, n: ControlDensity, a: float, b: float
) -> tuple[Expression, ControlDensity]:
    """Reverse kernel and intensity across [a, b]: s -> a + b - s.

    Composing twice gives functions pointwise equal to the originals.
    """
    mirror = BinOp("-", Num(a + b), Var())
    g_rev = substitute(g, mirror)
    n_rev = ControlDensity(substitute(n.expression, mirror), t_hi=b, t_lo=a)
    return g_rev, n_rev


def poisson_k_max(lam: float, tail: float = 1e-12) -> int:
    """Smallest k with P(Poisson(lam) > k) < tail."""
    if lam < 0.0:
        raise ValueError(f"rate must be non-negative, got {lam}")
    if lam == 0.0:
        return 0
    pmf = math.exp(-lam)
    cum = pmf
    k = 0
    while 1.0 - cum >= tail:
        k += 1
        pmf *= lam / k
        cum += pmf
        if k > 10_000_000:
            raise ValueError(f"rate {lam} is too large for an atom lattice")
    return k


def flat_segment_cdf(level: float, lam_total: float, mesh: Mesh, k_max: int) -> CdfGrid:
    """Exact CDF of level * Poisson(lam_total) as atoms on the given mesh."""
    if level == 0.0:
        raise ValueError("flat level must be non-zero; a zero segment contributes nothing")
    lo = min(0.0, level * k_max)
    hi = max(0.0, level * k_max)
    if lo < mesh.x_min - 1e-12 or hi > mesh.x_max + 1e-12:
        raise MeshTooShort(
            f"atom lattice spans [{lo}, {hi}] but the mesh is [{mesh.x_min}, {mesh.x_max}]"
        )
    ks = np.arange(k_max + 1)
    if lam_total == 0.0:
        masses = np.zeros(k_max + 1)
        masses[0] = 1.0
    else:
        log_masses = -lam_total + ks * math.log(lam_total) - np.cumsum(
            np.concatenate([[0.0], np.log(np.maximum(ks[1:], 1))])
        )
        masses = np.exp(log_masses)
    locs = level * ks
    order = np.argsort(locs)
    locs, masses = locs[order], masses[order]
    values = np.cumsum(
        np.bincount(
            np.searchsorted(mesh.nodes + 0.5 * mesh.delta, locs), weights=masses, minlength=mesh.M
        )
    )[: mesh.M]
    atoms = tuple((float(l), float(m)) for l, m in zip(locs, masses) if m > ATOM_PRUNE_TOL)
    return CdfGrid(mesh, values, atoms)


def reflect(F: CdfGrid) -> CdfGrid:
    """CDF of the negated variable: G(u) = 1 - F((-u)^-) on the mirrored mesh.

    At a node carrying an atom the left limit drops the atom's mass; elsewhere
    the grid value stands in for the left limit.  Applying reflect twice
    returns the original grid exactly.
    """
    mesh = Mesh(F.mesh.delta, -F.mesh.x_max, -F.mesh.x_min)
    flipped = F.values[::-1].copy()
    for loc, mass in F.atoms:
        flipped[F.mesh.M - 1 - F.mesh.index_of(loc)] -= mass
    values = 1.0 - flipped
    atoms = tuple(sorted((-loc, mass) for loc, mass in F.atoms))
    return CdfGrid(mesh, np.clip(values, 0.0, 1.0), atoms)


def convolve(A: CdfGrid, B: CdfGrid) -> CdfGrid:
    """Stieltjes convolution of two CDF grids sharing a common delta.

    Each grid is read as a lattice measure: the value increment across a cell
    sits at the cell's right endpoint (atoms, being value jumps at their own
    nodes, stay exactly in place).  Convolving the mass vectors and summing
    reproduces, node for node,

        F(u) = sum_atoms(B) m * A(u - loc) + sum_j A(u - x_{j+1}) * dB_j

    and is symmetric in A and B.  Output atoms are the pairwise products of
    the operands' atoms, merged by location and pruned below 1e-15.
    """
    da, db = A.mesh.delta, B.mesh.delta
    if abs(da - db) > 1e-15 * max(da, db):
        raise MeshMismatch(f"delta mismatch: {da} vs {db}")
    delta = da
    mesh = Mesh(delta, A.mesh.x_min + B.mesh.x_min, A.mesh.x_max + B.mesh.x_max)

    mass_a = np.diff(A.values, prepend=0.0)
    mass_a[0] = A.values[0]
    mass_b = np.diff(B.values, prepend=0.0)
    mass_b[0] = B.values[0]
    values = np.cumsum(np.convolve(mass_a, mass_b))
    values = np.minimum(np.maximum(values, 0.0), 1.0)
    np.maximum.accumulate(values, out=values)

    merged: dict[int, tuple[float, float]] = {}
    for la, ma in A.atoms:
        for lb, mb in B.atoms:
            loc = la + lb
            key = round((loc - mesh.x_min) / delta)
            if key in merged:
                prev_loc, prev_mass = merged[key]
                merged[key] = (prev_loc, prev_mass + ma * mb)
            else:
                merged[key] = (loc, ma * mb)
    atoms = tuple(
        (loc, mass) for loc, mass in sorted(merged.values()) if mass > ATOM_PRUNE_TOL
    )
    return CdfGrid(mesh, values, atoms)


def _estimate_span(g: Expression, n: ControlDensity, a: float, b: float, delta: float) -> float:
    """Mesh span for one segment: |mean| + 10 * stddev of its contribution.

    The contribution's mean is the integral of g*n and its variance the
    integral of g^2*n over the segment.
    """
    gn = BinOp("*", g, n.expression)
    ggn = BinOp("*", BinOp("*", g, g), n.expression)
    mean = _simpson(gn, a, b)
    var = max(_simpson(ggn, a, b), 0.0)
    span = abs(mean) + 10.0 * math.sqrt(var)
    return max(span, 10.0 * delta)


def _simpson(expression: Expression, a: float, b: float, panels: int = 2048) -> float:
    from .expr import evaluate

    xs = np.linspace(a, b, panels + 1)
    v = np.asarray(evaluate(expression, xs), dtype=float)
    w = (b - a) / panels
    return float((w / 3.0) * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum() + 2.0 * v[2:-1:2].sum()))


def _ceil_to_lattice(x: float, delta: float) -> float:
    return math.ceil(x / delta - 1e-9) * delta


def _extend_grid(F: CdfGrid, x_max: float) -> CdfGrid:
    """Pad a grid on the right with its final value (nothing to do if covered)."""
    if x_max <= F.mesh.x_max + 1e-12:
        return F
    mesh = Mesh(F.mesh.delta, F.mesh.x_min, _ceil_to_lattice(x_max - F.mesh.x_min, F.mesh.delta) + F.mesh.x_min)
    values = np.empty(mesh.M)
    values[: F.mesh.M] = F.values
    values[F.mesh.M :] = F.values[-1]
    return CdfGrid(mesh, values, F.atoms)


def _solve_positive_run(
    g: Expression,
    n: ControlDensity,
    segments: list[KernelSegment],
    negated: bool,
    init: CdfGrid | None,
    delta: float,
    h: float,
    min_span: float,
) -> CdfGrid:
    """Chain the solver across consecutive same-sign segments.

    ``negated`` means the originals are negative and we solve for -g.  ``init``
    must be a non-negative-support grid (or None for a point mass at zero).
    """
    current: CdfGrid | None = init
    work_g = Neg(g) if negated else g
    for seg in segments:
        a, b = seg.t_start, seg.t_end
        seg_n = ControlDensity(n.expression, t_hi=b, t_lo=a)
        increasing = seg.klass in (
            SegmentClass.INCREASING_POSITIVE,
            SegmentClass.DECREASING_NEGATIVE,  # -g increases
        )
        if increasing:
            run_g, run_n = work_g, seg_n
        else:
            run_g, run_n = reverse_time(work_g, seg_n, a, b)
        span = _estimate_span(run_g, run_n, a, b, delta)
        base = 0.0 if current is None else current.mesh.x_max
        x_max = _ceil_to_lattice(max(base + span, min_span), delta)
        steps = max(1, round((b - a) / h))
        cfg = SolveConfig(Mesh(delta, 0.0, x_max), TimeGrid((b - a) / steps, b - a))
        start = PointMassAtZero() if current is None else _extend_grid(current, x_max)
        current = solve_segment(run_g, run_n, start, cfg, t_start=a)
    return current


def compose_piecewise(
    g: Expression | str,
    n: ControlDensity,
    T: float,
    cfg: SolveConfig,
    breakpoints: list[float] | None = None,
) -> CdfGrid:
    """CDF of the full integral over [0, T] for a piecewise-monotone kernel.

    Segments are solved in order.  Runs of same-sign segments chain through the
    solver's initial condition; sign changes and flat segments combine by
    convolution.  Solve meshes are sized from each segment's mean and standard
    deviation, then the result is cropped (or padded) onto cfg.mesh.
    """
    if isinstance(g, str):
        g = parse(g)
    delta, h = cfg.mesh.delta, cfg.time.h
    segments = segment_kernel(g, T, breakpoints=breakpoints)
    min_span = max(cfg.mesh.x_max, -cfg.mesh.x_min, 10.0 * delta)

    running: CdfGrid | None = None  # None means a point mass at zero
    idx = 0
    while idx < len(segments):
        seg = segments[idx]
        if seg.klass is SegmentClass.FLAT:
            idx += 1
            level = seg.flat_level
            lam = integrate_control(n, seg.t_start, seg.t_end)
            if abs(level) < 1e-12 or lam == 0.0:
                continue
            k_max = poisson_k_max(lam)
            lo = min(0.0, level * k_max)
            hi = max(0.0, level * k_max)
            flat_mesh = Mesh(
                delta, -_ceil_to_lattice(-lo, delta) if lo < 0 else 0.0,
                _ceil_to_lattice(hi, delta) if hi > 0 else 0.0,
            )
            if flat_mesh.x_max == flat_mesh.x_min:
                flat_mesh = Mesh(delta, flat_mesh.x_min, flat_mesh.x_min + delta)
            piece = flat_segment_cdf(level, lam, flat_mesh, k_max)
            running = piece if running is None else convolve(running, piece)
            continue

        negative = seg.klass in (
            SegmentClass.INCREASING_NEGATIVE,
            SegmentClass.DECREASING_NEGATIVE,
        )
        run: list[KernelSegment] = []
        while idx < len(segments) and segments[idx].klass is not SegmentClass.FLAT and (
            segments[idx].klass
            in (
                (SegmentClass.INCREASING_NEGATIVE, SegmentClass.DECREASING_NEGATIVE)
                if negative
                else (SegmentClass.INCREASING_POSITIVE, SegmentClass.DECREASING_POSITIVE)
            )
        ):
            run.append(segments[idx])
            idx += 1

        if not negative:
            if running is not None and running.mesh.x_min >= 0.0:
                running = _solve_positive_run(g, n, run, False, running, delta, h, min_span)
            else:
                piece = _solve_positive_run(g, n, run, False, None, delta, h, min_span)
                running = piece if running is None else convolve(running, piece)
        else:
            if running is not None and running.mesh.x_max <= 0.0:
                mirrored = _solve_positive_run(
                    g, n, run, True, reflect(running), delta, h, min_span
                )
                running = reflect(mirrored)
            else:
                piece = reflect(_solve_positive_run(g, n, run, True, None, delta, h, min_span))
                running = piece if running is None else convolve(running, piece)

    if running is None:
        # Kernel contributes nothing: the integral is identically zero.
        values = np.ones(cfg.mesh.M) if cfg.mesh.x_max >= 0.0 else np.zeros(cfg.mesh.M)
        if cfg.mesh.x_min <= 0.0 <= cfg.mesh.x_max:
            values = (cfg.mesh.nodes >= -0.5 * delta).astype(float)
        atoms = ((0.0, 1.0),) if cfg.mesh.x_min <= 0.0 <= cfg.mesh.x_max else ()
        return CdfGrid(cfg.mesh, values, atoms)

    return _crop_to_mesh(running, cfg.mesh)


def _crop_to_mesh(F: CdfGrid, target: Mesh) -> CdfGrid:
    """Resample onto the requested output window (same delta, aligned lattices)."""
    delta = target.delta
    if abs(F.mesh.delta - delta) > 1e-15 * delta:
        raise MeshMismatch(f"delta mismatch: {F.mesh.delta} vs {delta}")
    offset = (target.x_min - F.mesh.x_min) / delta
    if abs(offset - round(offset)) > 1e-6:
        raise MeshMismatch("output mesh is not aligned with the computed lattice")
    offset = round(offset)
    src = offset + np.arange(target.M)
    values = F.values[np.clip(src, 0, F.mesh.M - 1)]
    values = np.where(src < 0, 0.0, values)
    atoms = tuple(
        (loc, mass)
        for loc, mass in F.atoms
        if target.x_min - 0.5 * delta <= loc <= target.x_max + 0.5 * delta
    )
    return CdfGrid(target, values, atoms)
