import math

import numpy as np
import pytest

from poissonint.density import (
    Delta1TooSmall,
    central_difference_density,
    smooth_density,
)
from poissonint.model import CdfGrid, ControlDensity, Mesh, TimeGrid
from poissonint.solver import PointMassAtZero, SolveConfig, solve_segment


def _example_1(delta=1e-3):
    n = ControlDensity("1", t_hi=1.0)
    cfg = SolveConfig(Mesh(delta, 0.0, 4.0), TimeGrid(delta, 1.0))
    return solve_segment("s", n, PointMassAtZero(), cfg)


def test_point_mass_has_zero_density():
    mesh = Mesh(0.1, 0.0, 2.0)
    values = np.ones(mesh.M)
    grid = CdfGrid(mesh, values, atoms=((0.0, 1.0),))
    density = central_difference_density(grid)
    assert np.allclose(density.values, 0.0, atol=1e-12)
    assert density.atoms == ((0.0, 1.0),)
    assert density.clamped_mass == 0.0


def test_default_width_is_ten_cells():
    density = central_difference_density(_example_1())
    assert density.delta1 == pytest.approx(1e-2)


def test_width_snaps_to_the_mesh():
    density = central_difference_density(_example_1(), delta1=0.0123)
    assert density.delta1 == pytest.approx(0.012)


def test_width_below_two_cells_rejected():
    grid = _example_1()
    with pytest.raises(Delta1TooSmall):
        central_difference_density(grid, delta1=1e-3)


def test_density_integrates_to_the_continuous_mass():
    grid = _example_1()
    density = central_difference_density(grid)
    total = float(density.values.sum() * grid.mesh.delta)
    continuous = grid.mass_captured - math.exp(-1.0)
    assert total == pytest.approx(continuous, rel=2e-2)


def test_density_tracks_the_mixture_shape():
    # for the unit-slope kernel the density on (0, 1) is e^-1 * sum x^k/(k!(k+1)!)
    # truncated at a few terms; spot check two interior points
    grid = _example_1()
    density = central_difference_density(grid)

    def f(x):
        return math.exp(-1.0) * sum(
            x**k / (math.factorial(k) * math.factorial(k + 1)) for k in range(8)
        )

    for x in (0.3, 0.8):
        j = grid.mesh.index_of(x)
        assert density.values[j] == pytest.approx(f(x), rel=2e-2)


def test_smoothing_preserves_mass():
    density = central_difference_density(_example_1())
    smoothed = smooth_density(density, window=0.05)
    assert smoothed.values.sum() == pytest.approx(density.values.sum(), rel=1e-9)
    assert smoothed.atoms == density.atoms


def test_smoothing_window_of_one_cell_is_identity():
    density = central_difference_density(_example_1())
    same = smooth_density(density, window=1e-3)
    assert np.array_equal(same.values, density.values)


def test_smoothing_window_below_one_cell_rejected():
    density = central_difference_density(_example_1())
    with pytest.raises(ValueError):
        smooth_density(density, window=1e-4)


def test_negative_increments_are_clamped_and_reported():
    # a stair CDF whose steps sit off the atom list: finite differences stay
    # nonnegative here, so clamped mass is zero
    grid = _example_1()
    density = central_difference_density(grid)
    assert density.clamped_mass >= 0.0
    assert density.values.min() >= 0.0
