"""Density recovery from a CDF grid.

The CDF may be merely Hoelder continuous, so differencing at the mesh scale
amplifies noise.  The estimator removes atoms, applies a centered difference
over a widened offset delta1 > delta, clamps the odd negative excursion, and
optionally smooths with a mass-preserving moving average.  Atoms are reported
alongside as (location, mass) pairs rather than folded into the values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CdfGrid, Mesh


class Delta1TooSmall(ValueError):
    """The differencing offset must be at least twice the mesh width."""


@dataclass(frozen=True)
class DensityGrid:
    mesh: Mesh
    values: np.ndarray
    atoms: tuple[tuple[float, float], ...]
    delta1: float
    clamped_mass: float = 0.0

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.mesh.M,):
            raise ValueError("density values do not match the mesh")
        if not np.all(np.isfinite(vals)) or vals.min(initial=0.0) < 0.0:
            raise ValueError("density values must be finite and non-negative")


def central_difference_density(F: CdfGrid, delta1: float | None = None) -> DensityGrid:
    """Differenced continuous part of F.

    delta1 defaults to 10*delta and is snapped to a whole number of cells; it
    must be at least 2*delta.  The two boundary bands fall back to one-sided
    differences.  Negative excursions are clamped to zero and their integral
    reported as ``clamped_mass``.
    """
    delta = F.mesh.delta
    if delta1 is None:
        delta1 = 10.0 * delta
    if delta1 < 2.0 * delta * (1.0 - 1e-12):
        raise Delta1TooSmall(f"delta1 = {delta1} is below 2*delta = {2 * delta}")
    r = max(2, round(delta1 / delta))
    delta1 = r * delta

    cont = F.values.copy()
    for loc, mass in F.atoms:
        cont[F.mesh.nodes >= loc - 0.5 * delta] -= mass
    cont = np.maximum(cont, 0.0)

    M = F.mesh.M
    out = np.empty(M)
    if M > 2 * r:
        out[r : M - r] = (cont[2 * r :] - cont[: M - 2 * r]) / (2.0 * delta1)
    width = min(r, M - 1)
    out[:width] = (cont[width : 2 * width] - cont[:width]) / (width * delta) if width else 0.0
    out[M - width :] = (cont[M - width :] - cont[M - 2 * width : M - width]) / (width * delta)
    if M <= 2 * r:
        mid = slice(width, M - width)
        out[mid] = 0.0

    clamped = float(np.sum(np.abs(out[out < 0.0])) * delta)
    return DensityGrid(F.mesh, np.maximum(out, 0.0), F.atoms, delta1, clamped)


def smooth_density(D: DensityGrid, window: float) -> DensityGrid:
    """Moving average of width ``window`` (in x units, at least one cell).

    Total mass is preserved to 1e-6 relative by renormalizing after the edge
    effects of the window are corrected for.
    """
    delta = D.mesh.delta
    if window < delta * (1.0 - 1e-12):
        raise ValueError(f"window = {window} is below delta = {delta}")
    n_w = max(1, round(window / delta))
    if n_w % 2 == 0:
        n_w += 1
    if n_w == 1:
        return DensityGrid(D.mesh, D.values, D.atoms, D.delta1, D.clamped_mass)
    kernel = np.ones(n_w)
    smoothed = np.convolve(D.values, kernel, mode="same")
    coverage = np.convolve(np.ones(D.mesh.M), kernel, mode="same")
    smoothed /= coverage
    total = float(D.values.sum())
    new_total = float(smoothed.sum())
    if total > 0.0 and new_total > 0.0:
        smoothed *= total / new_total
    return DensityGrid(D.mesh, smoothed, D.atoms, D.delta1, D.clamped_mass)
