"""Shared geometry and measure types.

A :class:`CdfGrid` holds right-continuous CDF samples on a uniform mesh plus an
explicit list of atoms (locations must sit on mesh nodes).  A
:class:`ControlDensity` wraps the intensity expression n(s) together with its
cached supremum and cumulative integral table.  ``segment_kernel`` splits a
kernel g into maximal intervals of constant sign and monotonicity, which the
transform layer maps onto solver runs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .expr import EvalDomainError, Expression, evaluate, format_expression, parse

#: Tolerance for (span / delta) being an integer, relative to delta.
MESH_ALIGNMENT_TOL = 1e-9
#: Allowed decrease between adjacent CDF values.
MONOTONE_TOL = 1e-12
#: Below this spread a kernel segment counts as flat.
FLAT_TOL = 1e-10
#: Segment boundaries are refined by bisection to this width.
BOUNDARY_TOL = 1e-10


class NonFiniteDensity(ValueError):
    """The control density produced a non-finite or negative sample."""


class SegmentationFailure(ValueError):
    """The kernel oscillates too fast for the probe grid."""


@dataclass(frozen=True)
class Mesh:
    """Uniform spatial grid x_j = x_min + j*delta, j = 0..M-1."""

    delta: float
    x_min: float
    x_max: float

    def __post_init__(self):
        if not (self.delta > 0.0 and np.isfinite(self.delta)):
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.x_max > self.x_min:
            raise ValueError(f"need x_max > x_min, got [{self.x_min}, {self.x_max}]")
        ratio = (self.x_max - self.x_min) / self.delta
        if abs(ratio - round(ratio)) > MESH_ALIGNMENT_TOL:
            raise ValueError(
                f"(x_max - x_min)/delta = {ratio} is not an integer within tolerance"
            )

    @property
    def M(self) -> int:
        return round((self.x_max - self.x_min) / self.delta) + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        out = self.x_min + self.delta * np.arange(self.M)
        out.flags.writeable = False
        return out

    def index_of(self, x: float, tol: float = 0.5) -> int:
        """Index of the node nearest x; x must lie within tol*delta of it."""
        j = round((x - self.x_min) / self.delta)
        if j < 0 or j >= self.M or abs(x - (self.x_min + j * self.delta)) > tol * self.delta:
            raise ValueError(f"x={x} does not sit on the mesh")
        return j


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with N = T/h steps over a segment of length T."""

    h: float
    T: float

    def __post_init__(self):
        if not (self.h > 0.0 and np.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.T > 0.0:
            raise ValueError(f"T must be positive, got {self.T}")
        ratio = self.T / self.h
        if abs(ratio - round(ratio)) > MESH_ALIGNMENT_TOL * max(1.0, ratio):
            raise ValueError(f"T/h = {ratio} is not an integer within tolerance")

    @property
    def N(self) -> int:
        return round(self.T / self.h)


def validate_cdf_grid(mesh: Mesh, values: np.ndarray, atoms) -> None:
    """Invariant check shared by every CdfGrid construction site."""
    if values.shape != (mesh.M,):
        raise ValueError(f"values shape {values.shape} does not match mesh M={mesh.M}")
    if not np.all(np.isfinite(values)):
        raise ValueError("CDF values must be finite")
    if values.min(initial=0.0) < -MONOTONE_TOL or values.max(initial=0.0) > 1.0 + MONOTONE_TOL:
        raise ValueError("CDF values must lie in [0, 1]")
    if values.size > 1 and np.diff(values).min() < -MONOTONE_TOL:
        raise ValueError("CDF values must be non-decreasing")
    total = 0.0
    for loc, mass in atoms:
        if not mass > 0.0:
            raise ValueError(f"atom at {loc} has non-positive mass {mass}")
        total += mass
        j = round((loc - mesh.x_min) / mesh.delta)
        if j < 0 or j >= mesh.M or abs(loc - (mesh.x_min + j * mesh.delta)) > 0.5 * mesh.delta:
            raise ValueError(f"atom location {loc} is not on a mesh node")
    if total > 1.0 + MONOTONE_TOL:
        raise ValueError(f"atom masses sum to {total} > 1")


@dataclass(frozen=True)
class CdfGrid:
    """Right-continuous CDF samples on a mesh, with explicit atoms."""

    mesh: Mesh
    values: np.ndarray
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(
            self, "atoms", tuple(sorted((float(x), float(m)) for x, m in self.atoms))
        )
        validate_cdf_grid(self.mesh, self.values, self.atoms)

    @property
    def mass_captured(self) -> float:
        return float(self.values[-1])

    def atom_mass_at(self, x: float) -> float:
        half = 0.5 * self.mesh.delta
        return sum(m for loc, m in self.atoms if abs(loc - x) <= half)

    def value_at(self, x) -> float | np.ndarray:
        """Linear interpolation; 0 below the mesh, mass captured above it."""
        out = np.interp(x, self.mesh.nodes, self.values, left=0.0, right=self.values[-1])
        return float(out) if np.ndim(x) == 0 else out

    def quantile(self, p: float) -> float:
        """Smallest mesh node x with F(x) >= p (x_max when p exceeds the grid)."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        j = int(np.searchsorted(self.values, p, side="left"))
        if j >= self.mesh.M:
            return float(self.mesh.nodes[-1])
        return float(self.mesh.nodes[j])


class SegmentClass(Enum):
    INCREASING_POSITIVE = "IncreasingPositive"
    DECREASING_POSITIVE = "DecreasingPositive"
    INCREASING_NEGATIVE = "IncreasingNegative"
    DECREASING_NEGATIVE = "DecreasingNegative"
    FLAT = "Flat"


@dataclass(frozen=True)
class KernelSegment:
    t_start: float
    t_end: float
    expression: Expression
    klass: SegmentClass
    flat_level: float | None = None  # set iff klass is FLAT

    @property
    def length(self) -> float:
        return self.t_end - self.t_start


def _sup_on_grid(expression: Expression, lo: float, hi: float, points: int = 4096) -> float:
    s = np.linspace(lo, hi, points + 1)
    v = evaluate(expression, s)
    return float(v.max()) * (1.0 + 1e-6)


def sup_control(n: "ControlDensity", T: float) -> float:
    """Upper bound for n on [0, T]: grid max over >= 4096 points, inflated."""
    return _sup_on_grid(n.expression, 0.0, T)


@dataclass(frozen=True)
class ControlDensity:
    """Intensity n(s) on [t_lo, t_hi] with cached sup and integral table."""

    expression: Expression
    t_hi: float
    t_lo: float = 0.0
    n_star: float = field(init=False)
    _table_s: np.ndarray = field(init=False, repr=False)
    _table_cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.expression, str):
            object.__setattr__(self, "expression", parse(self.expression))
        if not self.t_hi > self.t_lo:
            raise ValueError(f"need t_hi > t_lo, got [{self.t_lo}, {self.t_hi}]")
        panels = 4096
        fine = np.linspace(self.t_lo, self.t_hi, 2 * panels + 1)
        v = self._samples(fine)
        w = (self.t_hi - self.t_lo) / panels
        per_panel = (w / 6.0) * (v[0:-1:2] + 4.0 * v[1::2] + v[2::2])
        cum = np.concatenate([[0.0], np.cumsum(per_panel)])
        object.__setattr__(self, "n_star", float(v.max()) * (1.0 + 1e-6))
        object.__setattr__(self, "_table_s", fine[::2])
        object.__setattr__(self, "_table_cum", cum)

    def _samples(self, s: np.ndarray) -> np.ndarray:
        try:
            v = evaluate(self.expression, s)
        except EvalDomainError as exc:
            raise NonFiniteDensity(str(exc)) from exc
        if not np.all(np.isfinite(v)):
            raise NonFiniteDensity(
                f"control density '{format_expression(self.expression)}' is not finite"
            )
        if v.min() < -1e-12:
            bad = float(s[np.argmin(v)])
            raise NonFiniteDensity(
                f"control density '{format_expression(self.expression)}' is negative "
                f"near s={bad}"
            )
        return np.maximum(v, 0.0)

    def __call__(self, s):
        out = self._samples(np.atleast_1d(np.asarray(s, dtype=float)))
        return float(out[0]) if np.ndim(s) == 0 else out

    def cumulative(self, t) -> float | np.ndarray:
        """Table lookup for the integral of n from t_lo to t."""
        out = np.interp(t, self._table_s, self._table_cum)
        return float(out) if np.ndim(t) == 0 else out


def integrate_control(n: ControlDensity, a: float, b: float) -> float:
    """Integral of n over [a, b] by composite Simpson with a half-grid check.

    Starts at 1024 panels and doubles until the Richardson comparison meets a
    1e-8 relative target (capped; smooth densities converge immediately).
    """
    span_tol = MESH_ALIGNMENT_TOL * max(1.0, abs(n.t_hi - n.t_lo))
    if a > b:
        raise ValueError(f"need a <= b, got [{a}, {b}]")
    if a < n.t_lo - span_tol or b > n.t_hi + span_tol:
        raise ValueError(f"[{a}, {b}] is outside the density domain [{n.t_lo}, {n.t_hi}]")
    if a == b:
        return 0.0
    panels = 1024
    while True:
        xs = np.linspace(a, b, panels + 1)
        v = n._samples(xs)
        w = (b - a) / panels
        s_full = (w / 3.0) * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum() + 2.0 * v[2:-1:2].sum())
        vh = v[::2]
        wh = (b - a) / (panels // 2)
        s_half = (wh / 3.0) * (vh[0] + vh[-1] + 4.0 * vh[1:-1:2].sum() + 2.0 * vh[2:-1:2].sum())
        if abs(s_full - s_half) <= 1e-8 * max(1.0, abs(s_full)) or panels >= 1 << 18:
            return float(s_full)
        panels *= 2


def _root_bisect(expression: Expression, lo: float, hi: float) -> float:
    flo = evaluate(expression, lo)
    while hi - lo > BOUNDARY_TOL:
        mid = 0.5 * (lo + hi)
        fm = evaluate(expression, mid)
        if (flo < 0.0) == (fm < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _extremum_bisect(expression: Expression, lo: float, hi: float, rising_first: bool) -> float:
    while hi - lo > BOUNDARY_TOL:
        mid = 0.5 * (lo + hi)
        w = 0.25 * (hi - lo)
        d = evaluate(expression, mid + w) - evaluate(expression, mid - w)
        if (d > 0.0) == rising_first:
            lo = mid - w
        else:
            hi = mid + w
    return 0.5 * (lo + hi)


def _detect_boundaries(expression: Expression, T: float, probe_count: int) -> list[float]:
    s = np.linspace(0.0, T, probe_count + 1)
    v = evaluate(expression, s)
    if not np.all(np.isfinite(v)):
        raise NonFiniteDensity("kernel is not finite on [0, T]")
    found: list[float] = []

    # Sign crossings of the kernel value.
    cross = np.nonzero(v[:-1] * v[1:] < 0.0)[0]
    for i in cross:
        found.append(_root_bisect(expression, float(s[i]), float(s[i + 1])))

    # Monotonicity flips, read from the signs of non-negligible increments.
    d = np.diff(v)
    scale = max(float(np.abs(v).max()), 1.0)
    signs = np.zeros(d.shape, dtype=int)
    signs[d > 1e-13 * scale] = 1
    signs[d < -1e-13 * scale] = -1
    nz = np.nonzero(signs)[0]
    for a, b in zip(nz[:-1], nz[1:]):
        if signs[a] != signs[b]:
            found.append(
                _extremum_bisect(expression, float(s[a]), float(s[b + 1]), signs[a] > 0)
            )

    found = sorted(x for x in found if BOUNDARY_TOL < x < T - BOUNDARY_TOL)
    merged: list[float] = []
    for x in found:
        if not merged or x - merged[-1] > 1e-9 * max(1.0, T):
            merged.append(x)
    if len(merged) > probe_count / 4:
        raise SegmentationFailure(
            f"{len(merged)} boundaries for {probe_count} probes; "
            "refine probe_count or supply breakpoints"
        )
    return merged


def _classify(expression: Expression, a: float, b: float) -> tuple[SegmentClass, float | None]:
    k = 64
    s = a + (b - a) * (np.arange(k) + 0.5) / k
    v = evaluate(expression, s)
    if v.max() - v.min() < FLAT_TOL:
        return SegmentClass.FLAT, float(v.mean())
    if v.min() >= -FLAT_TOL:
        positive = True
    elif v.max() <= FLAT_TOL:
        positive = False
    else:
        raise SegmentationFailure(
            f"segment [{a}, {b}] changes sign; an interior crossing was missed"
        )
    increasing = v[-1] > v[0]
    if positive:
        klass = SegmentClass.INCREASING_POSITIVE if increasing else SegmentClass.DECREASING_POSITIVE
    else:
        klass = SegmentClass.INCREASING_NEGATIVE if increasing else SegmentClass.DECREASING_NEGATIVE
    return klass, None


def segment_kernel(
    g: Expression | str,
    T: float,
    breakpoints: list[float] | None = None,
    probe_count: int = 4096,
) -> list[KernelSegment]:
    """Split [0, T] into maximal sign- and monotonicity-homogeneous pieces.

    Boundaries are detected on a probe grid and refined by bisection, or taken
    verbatim from ``breakpoints`` when given.  The segments tile [0, T].
    """
    if isinstance(g, str):
        g = parse(g)
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    if probe_count < 64:
        raise ValueError(f"probe_count must be at least 64, got {probe_count}")
    if breakpoints is not None:
        bounds = sorted(x for x in breakpoints if 0.0 < x < T)
    else:
        bounds = _detect_boundaries(g, T, probe_count)
    edges = [0.0] + bounds + [T]
    segments = []
    for a, b in zip(edges[:-1], edges[1:]):
        klass, level = _classify(g, a, b)
        segments.append(KernelSegment(a, b, g, klass, level))
    return segments


# -- serialization ------------------------------------------------------------

def grid_to_csv(grid: CdfGrid) -> str:
    """CSV with an "x,F" header, one row per node, then atom comment rows.

    Floats are written with repr, which round-trips bit-exactly.
    """
    out = io.StringIO()
    out.write("x,F\n")
    # float() strips the numpy scalar type so repr emits a bare decimal
    for x, v in zip(grid.mesh.nodes.tolist(), grid.values.tolist()):
        out.write(f"{x!r},{v!r}\n")
    for loc, mass in grid.atoms:
        out.write(f"# atom,{loc!r},{mass!r}\n")
    return out.getvalue()


def grid_from_csv(text: str) -> CdfGrid:
    xs: list[float] = []
    vs: list[float] = []
    atoms: list[tuple[float, float]] = []
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != "x,F":
        raise ValueError("missing x,F header")
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = [p.strip() for p in line.lstrip("#").split(",")]
            if len(parts) != 3 or parts[0] != "atom":
                raise ValueError(f"unrecognized comment row: {line}")
            atoms.append((float(parts[1]), float(parts[2])))
            continue
        a, b = line.split(",")
        xs.append(float(a))
        vs.append(float(b))
    if len(xs) < 2:
        raise ValueError("need at least two rows")
    diffs = np.diff(xs)
    delta = float(np.median(diffs))
    snapped = float(f"{delta:.12g}")
    nodes = xs[0] + snapped * np.arange(len(xs))
    if np.max(np.abs(nodes - np.asarray(xs))) <= MESH_ALIGNMENT_TOL * snapped * len(xs):
        delta = snapped
    mesh = Mesh(delta, xs[0], xs[-1])
    return CdfGrid(mesh, np.asarray(vs), tuple(atoms))


def grid_to_json_dict(grid: CdfGrid, meta: dict | None = None) -> dict:
    out = {
        "mesh": {"delta": grid.mesh.delta, "x_min": grid.mesh.x_min, "x_max": grid.mesh.x_max},
        "values": grid.values.tolist(),
        "atoms": [{"x": loc, "mass": mass} for loc, mass in grid.atoms],
    }
    if meta is not None:
        out["meta"] = meta
    return out


def grid_from_json_dict(doc: dict) -> CdfGrid:
    mesh = Mesh(doc["mesh"]["delta"], doc["mesh"]["x_min"], doc["mesh"]["x_max"])
    atoms = tuple((a["x"], a["mass"]) for a in doc.get("atoms", []))
    return CdfGrid(mesh, np.asarray(doc["values"], dtype=float), atoms)
