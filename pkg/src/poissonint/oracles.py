"""Independent references the solver is judged against.

Three routes that share no code with the finite-difference scheme:

* ``irwin_hall_cdf``: closed-form series for the unit-rate, identity-kernel
  integral on [0, 1].  Conditioned on k arrivals the value is a sum of k
  uniforms, so F(x) = sum_k P(U_1 + ... + U_k <= x) e^{-1} / k!.
* ``mc_sample``: direct simulation.  Arrival counts are Poisson, arrival times
  are drawn by inverse transform from the normalized cumulative intensity, and
  replicates are partitioned into fixed blocks each owning a counter-based
  stream, so results are bit-identical for a given seed no matter how many
  workers run.
* ``cf_inversion_cdf``: numerical inversion of the characteristic function
  with the atom at zero split off:

      F(x) = e^{-L} + (2/pi) * integral_0^inf Re(phibar)(u) sin(xu)/u du,

  truncated at T_I and discretized by the trapezoid rule with mesh eta; the
  j = 0 term uses the limit sin(xu)/u -> x.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .expr import Expression, evaluate, parse
from .model import CdfGrid, ControlDensity, integrate_control

#: Replicates per counter-based stream block.
MC_BLOCK = 1 << 14
#: Nodes in the inverse-CDF table for arrival times.
ARRIVAL_TABLE_NODES = 8192


class QuadratureFailure(RuntimeError):
    """The oscillatory inner integral did not converge within the node budget."""


def irwin_hall_cdf(x, terms: int = 11):
    """Series CDF for kernel s -> s with unit intensity on [0, 1].

    P(U_1 + ... + U_k <= x) has the closed form
    (1/k!) * sum_{m=0}^{floor(x)} (-1)^m C(k, m) (x - m)^k; eleven terms leave
    a Poisson tail below 1e-7.  Accepts a scalar or an array.
    """
    if terms < 1:
        raise ValueError(f"terms must be positive, got {terms}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    total = np.zeros_like(xs)
    weight = math.exp(-1.0)  # e^{-1} / k! at k = 0
    for k in range(terms):
        if k == 0:
            p_k = np.ones_like(xs)
        else:
            acc = np.zeros_like(xs)
            for m in range(k):
                acc += (-1.0) ** m * math.comb(k, m) * np.clip(xs - m, 0.0, None) ** k
            p_k = np.clip(acc / math.factorial(k), 0.0, 1.0)
            p_k[xs >= k] = 1.0
        total += weight * p_k
        weight /= k + 1
    total[xs < 0.0] = 0.0
    out = np.minimum(total, 1.0)
    return float(out[0]) if np.isscalar(x) or np.ndim(x) == 0 else out


@dataclass(frozen=True)
class ArrivalLaw:
    """Inverse-CDF sampler for arrival times with density n(s)/normalizer."""

    n: ControlDensity
    t: float
    normalizer: float = field(init=False)
    _s_grid: np.ndarray = field(init=False, repr=False)
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        fine = np.linspace(0.0, self.t, 2 * ARRIVAL_TABLE_NODES + 1)
        v = self.n(fine)
        w = self.t / ARRIVAL_TABLE_NODES
        per_panel = (w / 6.0) * (v[0:-1:2] + 4.0 * v[1::2] + v[2::2])
        cum = np.concatenate([[0.0], np.cumsum(per_panel)])
        total = float(cum[-1])
        object.__setattr__(self, "normalizer", total)
        object.__setattr__(self, "_s_grid", fine[::2])
        if total > 0.0:
            cdf = cum / total
            cdf[-1] = 1.0
            object.__setattr__(self, "_cdf", cdf)
        else:
            object.__setattr__(self, "_cdf", np.linspace(0.0, 1.0, ARRIVAL_TABLE_NODES + 1))

    def times_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self._cdf, self._s_grid)


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("POISSONINT_WORKERS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def mc_sample(
    g: Expression | str,
    n: ControlDensity,
    T: float,
    count: int,
    seed: int,
    workers: int | None = None,
) -> np.ndarray:
    """Sorted array of ``count`` independent draws of the integral.

    Replicates are split into blocks of MC_BLOCK; block b uses a Philox stream
    keyed by (seed, b), so the output depends only on (seed, count), never on
    the worker schedule.
    """
    if isinstance(g, str):
        g = parse(g)
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    lam = integrate_control(n, 0.0, T)
    law = ArrivalLaw(n, T)

    def run_block(b: int) -> np.ndarray:
        size = min(MC_BLOCK, count - b * MC_BLOCK)
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, b], dtype=np.uint64)))
        counts = rng.poisson(lam, size=size)
        total = int(counts.sum())
        if total == 0:
            return np.zeros(size)
        u = rng.random(total)
        times = law.times_from_uniforms(u)
        vals = np.asarray(evaluate(g, times), dtype=float)
        owner = np.repeat(np.arange(size), counts)
        return np.bincount(owner, weights=vals, minlength=size)

    blocks = range((count + MC_BLOCK - 1) // MC_BLOCK)
    k = _worker_count(workers)
    if k == 1 or len(blocks) == 1:
        parts = [run_block(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=k) as pool:
            parts = list(pool.map(run_block, blocks))
    out = np.concatenate(parts)
    out.sort()
    return out


@dataclass(frozen=True)
class CfSpec:
    """Settings for characteristic-function inversion."""

    g: Expression
    n: ControlDensity
    T: float
    truncation: float  # upper limit T_I of the frequency integral
    eta: float  # trapezoid mesh on [0, T_I]
    inner_tol: float = 1e-8

    def __post_init__(self):
        if isinstance(self.g, str):
            object.__setattr__(self, "g", parse(self.g))
        ratio = self.truncation / self.eta
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("truncation must be a multiple of eta")


def _cf_exponent(spec: CfSpec, theta: float, g_range: float) -> complex:
    """integral_0^T (e^{i theta g(s)} - 1) n(s) ds by doubling Simpson.

    The initial panel count grows with theta * range(g) to resolve the
    oscillation of the integrand.
    """
    panels = int(16 * (1.0 + abs(theta) * g_range))
    panels += panels % 2
    panels = max(panels, 16)
    prev = None
    while True:
        xs = np.linspace(0.0, spec.T, panels + 1)
        gv = np.asarray(evaluate(spec.g, xs), dtype=float)
        nv = spec.n(xs)
        integrand = (np.exp(1j * theta * gv) - 1.0) * nv
        w = spec.T / panels
        s = (w / 3.0) * (
            integrand[0]
            + integrand[-1]
            + 4.0 * integrand[1:-1:2].sum()
            + 2.0 * integrand[2:-1:2].sum()
        )
        if prev is not None and abs(s - prev) <= spec.inner_tol:
            return complex(s)
        if panels >= 1 << 21:
            raise QuadratureFailure(
                f"inner integral at theta={theta} did not reach {spec.inner_tol} "
                f"within {panels} panels"
            )
        prev = s
        panels *= 2


def _phibar_real(spec: CfSpec) -> tuple[np.ndarray, float]:
    """Re(phibar) on the trapezoid nodes j*eta, and the atom e^{-L}."""
    lam = integrate_control(spec.n, 0.0, spec.T)
    atom = math.exp(-lam)
    K = round(spec.truncation / spec.eta)
    probe = np.linspace(0.0, spec.T, 4097)
    gv = np.asarray(evaluate(spec.g, probe), dtype=float)
    g_range = float(gv.max() - gv.min())
    out = np.empty(K + 1)
    out[0] = 1.0 - atom  # phi(0) = 1 exactly
    for j in range(1, K + 1):
        out[j] = np.exp(_cf_exponent(spec, j * spec.eta, g_range)).real - atom
    return out, atom


def _trapezoid_inversion(re_phibar: np.ndarray, atom: float, eta: float, x: float) -> float:
    K = re_phibar.shape[0] - 1
    u = eta * np.arange(1, K + 1)
    f = re_phibar[1:] * np.sin(x * u) / u
    f0 = re_phibar[0] * x  # limit of sin(xu)/u at u = 0
    integral = eta * (0.5 * f0 + f[:-1].sum() + 0.5 * f[-1])
    return atom + (2.0 / math.pi) * integral


def cf_inversion_cdf(spec: CfSpec, x: float) -> float:
    """Invert the characteristic function at a single point x > 0."""
    if not x > 0.0:
        raise ValueError(f"x must be positive, got {x}")
    re_phibar, atom = _phibar_real(spec)
    return _trapezoid_inversion(re_phibar, atom, spec.eta, x)


def cf_inversion_table(spec: CfSpec, xs) -> np.ndarray:
    """Invert at many points, sharing the expensive frequency sweep."""
    xs = np.asarray(xs, dtype=float)
    if np.any(xs <= 0.0):
        raise ValueError("all query points must be positive")
    re_phibar, atom = _phibar_real(spec)
    return np.array([_trapezoid_inversion(re_phibar, atom, spec.eta, x) for x in xs])


def ecdf_distance(samples: np.ndarray, F: CdfGrid) -> float:
    """Kolmogorov-Smirnov sup distance between an empirical CDF and F.

    F is linearly interpolated between nodes; the sup is over the sample
    points, where the empirical CDF attains its extremes.  Tied samples at
    an atom of F are compared against F's left limit there, not F itself;
    the plain sorted-rank formula would report the whole atom mass as error.
    """
    samples = np.asarray(samples, dtype=float)
    m = samples.shape[0]
    if m == 0:
        raise ValueError("need at least one sample")
    xs, counts = np.unique(samples, return_counts=True)
    cum_hi = np.cumsum(counts) / m
    cum_lo = cum_hi - counts / m
    fv = np.interp(xs, F.mesh.nodes, F.values, left=0.0, right=float(F.values[-1]))
    f_left = fv.copy()
    tol = 1e-12
    for loc, mass in F.atoms:
        j = np.searchsorted(xs, loc - tol)
        if j < xs.shape[0] and abs(xs[j] - loc) <= tol:
            f_left[j] = fv[j] - mass
    return float(max((cum_hi - fv).max(), (f_left - cum_lo).max()))


def dkw_epsilon(m: int, alpha: float = 0.01) -> float:
    """Two-sided DKW deviation bound holding with probability 1 - alpha."""
    if m <= 0 or not 0.0 < alpha < 1.0:
        raise ValueError("need m > 0 and alpha in (0, 1)")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * m))
