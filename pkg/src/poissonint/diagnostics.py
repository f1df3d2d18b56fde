"""Smoothness and convergence diagnostics.

``holder_estimate`` scans difference quotients |F(x) - F(y)| / |x - y|^gamma
over node pairs, the empirical counterpart of a Hoelder seminorm.  When the
caller supplies the seminorm of the kernel's inverse analytically, the theory
bounds the CDF's seminorm by

    C(n, t) * [g^{-1}]_gamma,   C(n, t) = sup(n) * (1 - e^{-I}) / I,

with I the integrated intensity up to t.  ``convergence_study`` reruns a
problem at several resolutions against an oracle and fits the L1 error order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import CdfGrid, ControlDensity, Mesh, TimeGrid, integrate_control
from .solver import SolveConfig
from .transforms import compose_piecewise


@dataclass(frozen=True)
class HolderReport:
    gamma: float
    seminorm_estimate: float
    bound: float | None
    pairs_examined: int


@dataclass(frozen=True)
class ConvergenceRow:
    delta: float
    h: float
    l1_error: float


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[ConvergenceRow, ...]
    fitted_order: float


def holder_constant(n: ControlDensity, t: float) -> float:
    """C(n, t) relating kernel-inverse smoothness to CDF smoothness."""
    total = integrate_control(n, 0.0, t)
    if total == 0.0:
        return 0.0
    return n.n_star * (1.0 - math.exp(-total)) / total


def holder_estimate(
    F: CdfGrid,
    gamma: float,
    pairs: int = 10_000,
    inverse_seminorm: float | None = None,
    n: ControlDensity | None = None,
    t: float | None = None,
    seed: int = 0,
) -> HolderReport:
    """Empirical Hoelder-gamma seminorm of F over x > 0, atoms excluded.

    Examines all adjacent node pairs plus ``pairs`` random pairs, restricted to
    separations |x - y| <= 1.  With ``inverse_seminorm`` (and n, t) given, the
    analytic bound C(n, t) * inverse_seminorm is attached for comparison.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    nodes = F.mesh.nodes
    atom_idx = {F.mesh.index_of(loc) for loc, _ in F.atoms}
    keep = np.array(
        [j for j in range(F.mesh.M) if nodes[j] > 0.0 and j not in atom_idx], dtype=int
    )
    if keep.size < 2:
        raise ValueError("not enough non-atom nodes with x > 0")
    xs = nodes[keep]
    vs = F.values[keep]

    def ratios(i: np.ndarray, j: np.ndarray) -> np.ndarray:
        dx = np.abs(xs[i] - xs[j])
        ok = (dx > 0.0) & (dx <= 1.0)
        i, j, dx = i[ok], j[ok], dx[ok]
        return np.abs(vs[i] - vs[j]) / dx**gamma

    adjacent = ratios(np.arange(keep.size - 1), np.arange(1, keep.size))
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    ri = rng.integers(0, keep.size, size=pairs)
    rj = rng.integers(0, keep.size, size=pairs)
    sampled = ratios(ri, rj)
    examined = adjacent.size + sampled.size
    estimate = float(max(adjacent.max(initial=0.0), sampled.max(initial=0.0)))
    bound = None
    if inverse_seminorm is not None:
        if n is None or t is None:
            raise ValueError("the analytic bound needs n and t alongside inverse_seminorm")
        bound = holder_constant(n, t) * inverse_seminorm
    return HolderReport(gamma, estimate, bound, examined)


def l1_distance(A: CdfGrid, B: CdfGrid) -> float:
    """Discrete L1 metric delta * sum |A - B| on a shared mesh."""
    if A.mesh != B.mesh:
        raise ValueError("grids must share a mesh")
    return float(A.mesh.delta * np.abs(A.values - B.values).sum())


@dataclass(frozen=True)
class ConvergenceProblem:
    """A solvable configuration paired with a pointwise oracle."""

    g: str
    n: str | ControlDensity
    T: float
    x_max: float
    oracle: Callable[[np.ndarray], np.ndarray]


def convergence_study(
    problem: ConvergenceProblem, resolutions: Sequence[tuple[float, float]]
) -> ConvergenceTable:
    """Solve at each (delta, h), measure L1 error against the oracle, fit order.

    The oracle is evaluated on each run's own mesh.  The fitted order is the
    least-squares slope of log(error) against log(delta); rows with zero error
    are excluded from the fit (all-zero tables report NaN).
    """
    if isinstance(problem.n, ControlDensity):
        n = problem.n
    else:
        n = ControlDensity(problem.n, t_hi=problem.T)
    rows = []
    for delta, h in resolutions:
        cfg = SolveConfig(Mesh(delta, 0.0, problem.x_max), TimeGrid(h, problem.T))
        grid = compose_piecewise(problem.g, n, problem.T, cfg)
        exact = np.asarray(problem.oracle(grid.mesh.nodes), dtype=float)
        err = float(delta * np.abs(grid.values - exact).sum())
        rows.append(ConvergenceRow(delta, h, err))
    pts = [(math.log(r.delta), math.log(r.l1_error)) for r in rows if r.l1_error > 0.0]
    if len(pts) >= 2:
        lx, ly = zip(*pts)
        order = float(np.polyfit(lx, ly, 1)[0])
    else:
        order = float("nan")
    return ConvergenceTable(tuple(rows), order)
