"""Forward finite-difference solver for the CDF evolution equation.

Over a segment [a, b] on which the kernel g is non-negative and non-decreasing,
the CDF F(x, t) of the accumulated integral satisfies a transport-type
evolution: probability flows from F(x, t) to F(x - g(t), t) at rate n(t).  One
explicit step of size h reads

    F[j] <- (1 - h*n_i) * F[j] + h*n_i * ((1 - lam_i)*F[j - k_i] + lam_i*F[j - k_i + 1])

with k_i = floor(g(t_i)/delta) + 1 and lam_i = (k_i*delta - g(t_i))/delta, so
the pair (k_i, lam_i) linearly interpolates F at x_j - g(t_i).  Reads below the
mesh contribute 0.  The update is a convex combination whenever h*n_i < 1,
which preserves monotonicity and the [0, 1] range; h*n* >= 1 is rejected
before any step runs.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .expr import Expression, evaluate
from .model import CdfGrid, ControlDensity, Mesh, TimeGrid, integrate_control

#: Final value below which a solve warns that mass escaped past x_max.
MASS_LEAK_THRESHOLD = 0.999
#: Atoms lighter than this are dropped.
ATOM_PRUNE_TOL = 1e-15


class StabilityViolation(RuntimeError):
    """h * sup(n) >= 1: the explicit update would not be a convex combination."""


class MassLeakWarning(UserWarning):
    """The mesh was too short; visible probability mass ran off the right edge."""


@dataclass(frozen=True)
class StepStencil:
    """Coefficients of one explicit step, frozen at the left endpoint t_i."""

    i: int
    k: int
    lam: float
    n: float


@dataclass(frozen=True)
class PointMassAtZero:
    """Initial condition delta_0: F(x, a) = 1 for x >= 0."""


InitialCondition = PointMassAtZero | CdfGrid


@dataclass(frozen=True)
class SolveConfig:
    mesh: Mesh
    time: TimeGrid
    atom_pinning: bool = False
    record_trajectory: bool = False


@dataclass
class SolveReport:
    grid: CdfGrid
    stability_margin: float
    wall_time: float
    trajectory: list[tuple[float, np.ndarray]] = field(default_factory=list)


def stability_check(h: float, n_star: float) -> float:
    """Stability margin 1 - h*n_star; the scheme requires it to be positive."""
    return 1.0 - h * n_star


def make_stencil(i: int, g_value: float, n_value: float, delta: float) -> StepStencil:
    """Stencil for one step: g_value = g(t_i) >= 0, n_value = n(t_i)."""
    if g_value < 0.0:
        raise ValueError(f"kernel must be non-negative on the segment, got {g_value}")
    k = int(g_value / delta) + 1
    lam = (k * delta - g_value) / delta
    return StepStencil(i, k, min(max(lam, 0.0), 1.0), n_value)


def step(F: np.ndarray, stencil: StepStencil, h: float, out: np.ndarray | None = None) -> np.ndarray:
    """Apply one explicit step; reads below index 0 contribute 0."""
    M = F.shape[0]
    if out is None:
        out = np.empty_like(F)
    hn = h * stencil.n
    np.multiply(F, 1.0 - hn, out=out)
    k = stencil.k
    if k < M:
        out[k:] += (hn * (1.0 - stencil.lam)) * F[: M - k]
    if k - 1 < M:
        if k == 1:
            out += (hn * stencil.lam) * F
        else:
            out[k - 1 :] += (hn * stencil.lam) * F[: M - (k - 1)]
    # Convex-combination bookkeeping: the three weights must sum to one.
    assert abs((1.0 - hn) + hn * stencil.lam + hn * (1.0 - stencil.lam) - 1.0) < 1e-12
    return out


def _initial_values(init: InitialCondition, mesh: Mesh) -> np.ndarray:
    if isinstance(init, PointMassAtZero):
        return np.ones(mesh.M)
    if init.mesh.delta != mesh.delta or init.mesh.x_min != mesh.x_min:
        raise ValueError("initial grid must share delta and x_min with the solve mesh")
    if init.mesh.M > mesh.M:
        raise ValueError("initial grid extends beyond the solve mesh")
    out = np.empty(mesh.M)
    out[: init.mesh.M] = init.values
    out[init.mesh.M :] = init.values[-1]
    return out


def _step_integrals(n: ControlDensity, a: float, h: float, N: int) -> np.ndarray:
    """Cumulative integral of n from a to each step boundary (4-panel Simpson)."""
    offsets = np.array([0.0, 0.25, 0.5, 0.75, 1.0]) * h
    t = a + h * np.arange(N)[:, None] + offsets[None, :]
    v = n(t.ravel()).reshape(N, 5)
    per_step = (h / 12.0) * (v[:, 0] + 4.0 * v[:, 1] + 2.0 * v[:, 2] + 4.0 * v[:, 3] + v[:, 4])
    return np.cumsum(per_step)


def solve_segment(
    g: Expression,
    n: ControlDensity,
    init: InitialCondition,
    cfg: SolveConfig,
    t_start: float = 0.0,
) -> CdfGrid:
    """Run the scheme over [t_start, t_start + cfg.time.T] and return the CDF.

    g must be non-negative and non-decreasing there; the caller reduces other
    segment shapes to this one.  Atoms of the initial condition survive with
    probability exp(-integral of n), and are carried over rescaled.
    """
    return _solve(g, n, init, cfg, t_start).grid


def solve_segment_report(
    g: Expression,
    n: ControlDensity,
    init: InitialCondition,
    cfg: SolveConfig,
    t_start: float = 0.0,
) -> SolveReport:
    return _solve(g, n, init, cfg, t_start)


def _solve(g, n, init, cfg, t_start) -> SolveReport:
    began = time.perf_counter()
    mesh, grid_t = cfg.mesh, cfg.time
    if mesh.x_min != 0.0:
        raise ValueError("solve meshes start at x_min = 0")
    a, b = t_start, t_start + grid_t.T
    margin = stability_check(grid_t.h, n.n_star)
    if margin <= 0.0:
        raise StabilityViolation(
            f"h * sup(n) = {grid_t.h * n.n_star:.6g} >= 1 (margin {margin:.6g}); "
            "reduce h"
        )

    N, h, delta = grid_t.N, grid_t.h, mesh.delta
    t_i = a + h * np.arange(N)
    g_vals = np.atleast_1d(np.asarray(evaluate(g, t_i), dtype=float))
    # Segment endpoints come from bisection, so the kernel may dip a hair
    # below zero right at a detected boundary.  Clamping is exact there:
    # g = 0 yields k = 1, lambda = 1, which is the identity step.
    tol = 1e-8 * max(1.0, float(np.abs(g_vals).max(initial=0.0)))
    if g_vals.min(initial=0.0) < -tol:
        raise ValueError("kernel is negative on the segment; reduce it first")
    g_vals = np.maximum(g_vals, 0.0)
    n_vals = n(t_i)

    k_all = (g_vals / delta).astype(int) + 1
    lam_all = np.clip((k_all * delta - g_vals) / delta, 0.0, 1.0)

    pin = cfg.atom_pinning and isinstance(init, PointMassAtZero)
    cum = _step_integrals(n, a, h, N) if pin else None

    F = _initial_values(init, mesh)
    buf = np.empty_like(F)
    trajectory: list[tuple[float, np.ndarray]] = []
    snap_every = max(1, N // 100) if cfg.record_trajectory else 0
    for i in range(N):
        stencil = StepStencil(i, int(k_all[i]), float(lam_all[i]), float(n_vals[i]))
        step(F, stencil, h, out=buf)
        F, buf = buf, F
        if pin:
            F[0] = np.exp(-cum[i])
        assert np.diff(F).min(initial=0.0) > -1e-12
        assert -1e-12 < F[0] and F[-1] < 1.0 + 1e-12
        if snap_every and (i + 1) % snap_every == 0:
            trajectory.append((a + (i + 1) * h, F.copy()))

    survival = np.exp(-integrate_control(n, a, b))
    if isinstance(init, PointMassAtZero):
        atoms = [(0.0, survival)]
    else:
        atoms = [(loc, m * survival) for loc, m in init.atoms]
    atoms = [(loc, m) for loc, m in atoms if m > ATOM_PRUNE_TOL]

    if F[-1] < MASS_LEAK_THRESHOLD:
        warnings.warn(
            f"mass captured {F[-1]:.6f} < {MASS_LEAK_THRESHOLD}; "
            f"extend x_max beyond {mesh.x_max}",
            MassLeakWarning,
            stacklevel=2,
        )
    grid = CdfGrid(mesh, np.clip(F, 0.0, 1.0), tuple(atoms))
    return SolveReport(grid, margin, time.perf_counter() - began, trajectory)
