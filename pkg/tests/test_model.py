import math

import numpy as np
import pytest

from poissonint.model import (
    CdfGrid,
    ControlDensity,
    Mesh,
    NonFiniteDensity,
    SegmentClass,
    TimeGrid,
    grid_from_csv,
    grid_from_json_dict,
    grid_to_csv,
    grid_to_json_dict,
    integrate_control,
    segment_kernel,
    sup_control,
)


# --- meshes ---------------------------------------------------------------


def test_mesh_nodes_and_count():
    mesh = Mesh(0.25, 0.0, 1.0)
    assert mesh.M == 5
    assert np.allclose(mesh.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert mesh.nodes[0] == mesh.x_min and mesh.nodes[-1] == mesh.x_max


def test_mesh_rejects_non_multiple_span():
    with pytest.raises(ValueError):
        Mesh(0.3, 0.0, 1.0)
    with pytest.raises(ValueError):
        Mesh(-0.1, 0.0, 1.0)
    with pytest.raises(ValueError):
        Mesh(0.1, 1.0, 0.0)


def test_mesh_index_of():
    mesh = Mesh(0.1, -1.0, 1.0)
    assert mesh.index_of(-1.0) == 0
    assert mesh.index_of(0.0) == 10
    assert mesh.index_of(0.7100000001) == 17
    with pytest.raises(ValueError):
        mesh.index_of(2.0)


def test_time_grid():
    grid = TimeGrid(0.25, 1.0)
    assert grid.N == 4
    with pytest.raises(ValueError):
        TimeGrid(0.3, 1.0)
    with pytest.raises(ValueError):
        TimeGrid(2.0, 1.0)  # h must divide T


# --- CdfGrid invariants ---------------------------------------------------


def test_cdf_grid_validation():
    mesh = Mesh(0.5, 0.0, 2.0)
    good = np.array([0.1, 0.4, 0.6, 0.9, 1.0])
    CdfGrid(mesh, good)  # fine

    with pytest.raises(ValueError, match="non-decreasing"):
        CdfGrid(mesh, np.array([0.1, 0.4, 0.3, 0.9, 1.0]))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        CdfGrid(mesh, good + 0.5)
    with pytest.raises(ValueError, match="finite"):
        CdfGrid(mesh, np.array([0.1, np.nan, 0.6, 0.9, 1.0]))
    with pytest.raises(ValueError, match="shape"):
        CdfGrid(mesh, good[:-1])
    with pytest.raises(ValueError, match="node"):
        CdfGrid(mesh, good, atoms=((5.0, 0.1),))  # outside the mesh
    with pytest.raises(ValueError, match="mass"):
        CdfGrid(mesh, good, atoms=((0.5, 0.0),))


def test_cdf_grid_is_immutable():
    grid = CdfGrid(Mesh(0.5, 0.0, 1.0), np.array([0.2, 0.5, 1.0]))
    with pytest.raises(ValueError):
        grid.values[0] = 0.9


def test_value_at_interpolates_and_clamps():
    grid = CdfGrid(Mesh(0.5, 0.0, 1.0), np.array([0.2, 0.5, 1.0]))
    assert grid.value_at(0.25) == pytest.approx(0.35)
    assert grid.value_at(-3.0) == 0.0
    assert grid.value_at(9.0) == 1.0
    out = grid.value_at(np.array([0.0, 0.25, 2.0]))
    assert np.allclose(out, [0.2, 0.35, 1.0])


def test_quantile_left_most_crossing():
    grid = CdfGrid(Mesh(0.5, 0.0, 2.0), np.array([0.2, 0.5, 0.5, 0.9, 1.0]))
    assert grid.quantile(0.0) == 0.0
    assert grid.quantile(0.2) == 0.0
    assert grid.quantile(0.5) == 0.5  # first node reaching 0.5
    assert grid.quantile(0.50001) == 1.5
    assert grid.quantile(1.0) == 2.0
    with pytest.raises(ValueError):
        grid.quantile(1.5)


def test_quantile_cdf_galois():
    rng = np.random.default_rng(5)
    steps = np.sort(rng.random(21))
    values = steps / steps[-1]
    grid = CdfGrid(Mesh(0.1, 0.0, 2.0), values)
    for p in np.linspace(0.0, 1.0, 23):
        x = grid.quantile(float(p))
        assert grid.value_at(x) >= p - 1e-12
    for x in grid.mesh.nodes:
        assert grid.quantile(grid.value_at(float(x))) <= x + 1e-12


# --- control density ------------------------------------------------------


def test_sup_control_examples():
    n = ControlDensity("1", t_hi=1.0)
    assert n.n_star == pytest.approx(1.000001, abs=1e-9)
    n2 = ControlDensity("2+sin(2*pi*s)", t_hi=1.0)
    assert n2.n_star == pytest.approx(3.000003, abs=1e-6)
    assert sup_control(n2, 1.0) == n2.n_star


def test_control_density_rejects_bad_values():
    with pytest.raises(NonFiniteDensity):
        ControlDensity("0-1", t_hi=1.0)  # negative
    with pytest.raises(NonFiniteDensity):
        ControlDensity("1/s", t_hi=1.0)  # blows up at 0


def test_control_density_calls_and_cumulative():
    n = ControlDensity("2*s", t_hi=1.0)
    assert n(0.5) == pytest.approx(1.0)
    assert np.allclose(n(np.array([0.0, 1.0])), [0.0, 2.0])
    # cumulative of 2s is s^2
    for t in (0.0, 0.3, 0.7, 1.0):
        assert n.cumulative(t) == pytest.approx(t * t, abs=1e-8)


def test_integrate_control_polynomial_and_additivity():
    n = ControlDensity("3*s^2", t_hi=2.0)
    assert integrate_control(n, 0.0, 1.0) == pytest.approx(1.0, abs=1e-10)
    assert integrate_control(n, 0.0, 2.0) == pytest.approx(8.0, abs=1e-9)
    left = integrate_control(n, 0.0, 0.7)
    right = integrate_control(n, 0.7, 2.0)
    assert left + right == pytest.approx(8.0, abs=1e-9)
    assert integrate_control(n, 0.5, 0.5) == 0.0
    with pytest.raises(ValueError):
        integrate_control(n, 1.0, 3.0)  # beyond the domain


# --- kernel segmentation --------------------------------------------------


def test_segment_parabola():
    segs = segment_kernel("1-(1-s)^2", 2.0)
    assert [s.klass for s in segs] == [
        SegmentClass.INCREASING_POSITIVE,
        SegmentClass.DECREASING_POSITIVE,
    ]
    assert segs[0].t_start == 0.0
    assert segs[-1].t_end == 2.0
    assert segs[0].t_end == pytest.approx(1.0, abs=1e-6)


def test_segment_sine():
    segs = segment_kernel("sin(2*pi*s)", 1.0)
    assert [s.klass for s in segs] == [
        SegmentClass.INCREASING_POSITIVE,
        SegmentClass.DECREASING_POSITIVE,
        SegmentClass.DECREASING_NEGATIVE,
        SegmentClass.INCREASING_NEGATIVE,
    ]
    inner = [s.t_end for s in segs[:-1]]
    assert inner == pytest.approx([0.25, 0.5, 0.75], abs=1e-6)
    # consecutive segments tile [0, T]
    for a, b in zip(segs[:-1], segs[1:]):
        assert a.t_end == b.t_start


def test_segment_flat():
    (seg,) = segment_kernel("2", 1.5)
    assert seg.klass is SegmentClass.FLAT
    assert seg.flat_level == pytest.approx(2.0)


def test_segment_explicit_breakpoints():
    segs = segment_kernel("s", 1.0, breakpoints=[0.5])
    assert len(segs) == 2
    assert segs[0].t_end == 0.5 == segs[1].t_start


# --- serialization --------------------------------------------------------


def _sample_grid() -> CdfGrid:
    mesh = Mesh(0.25, -0.5, 1.0)
    values = np.array([0.05, 0.1, 0.4, 0.41, 0.8, 0.93, 1.0])
    return CdfGrid(mesh, values, atoms=((0.0, 0.3), (0.5, 0.12)))


def test_csv_round_trip_bit_exact():
    grid = _sample_grid()
    text = grid_to_csv(grid)
    back = grid_from_csv(text)
    assert back.mesh == grid.mesh
    assert np.array_equal(back.values, grid.values)
    assert back.atoms == grid.atoms
    # serializing again reproduces identical bytes
    assert grid_to_csv(back) == text


def test_csv_layout():
    lines = grid_to_csv(_sample_grid()).splitlines()
    assert lines[0] == "x,F"
    assert lines[1].startswith("-0.5,")
    assert lines[-1].startswith("# atom,0.5,")
    assert sum(1 for ln in lines if ln.startswith("# atom,")) == 2


def test_json_round_trip():
    grid = _sample_grid()
    doc = grid_to_json_dict(grid, meta={"note": "x"})
    assert doc["meta"] == {"note": "x"}
    back = grid_from_json_dict(doc)
    assert back.mesh == grid.mesh
    assert np.array_equal(back.values, grid.values)
    assert back.atoms == grid.atoms


def test_csv_parse_tolerates_decimal_noise():
    # a hand-written file with short decimals still snaps to a clean mesh
    text = "x,F\n0.0,0.1\n0.1,0.2\n0.2,0.35\n0.3,1.0\n"
    grid = grid_from_csv(text)
    assert grid.mesh.delta == pytest.approx(0.1)
    assert grid.mesh.M == 4
