import json
import math

import numpy as np
import pytest

from poissonint.cli import main
from poissonint.model import grid_from_csv


def test_solve_writes_csv_to_file(tmp_path):
    out = tmp_path / "grid.csv"
    code = main(
        [
            "solve",
            "--g", "s", "--n", "1", "--T", "1",
            "--delta", "0.01", "--h", "0.01", "--xmax", "4",
            "--out", str(out),
        ]
    )
    assert code == 0
    text = out.read_text()
    grid = grid_from_csv(text)
    assert grid.mesh.x_min == 0.0
    assert grid.mesh.x_max == 4.0
    assert grid.atoms[0][0] == 0.0
    assert grid.atoms[0][1] == pytest.approx(math.exp(-1.0), abs=1e-12)
    # the file must survive a write-read-write cycle untouched
    from poissonint.model import grid_to_csv

    assert grid_to_csv(grid) == text


def test_solve_streams_csv_to_stdout(capsys):
    code = main(
        [
            "solve",
            "--g", "s", "--n", "1", "--T", "1",
            "--delta", "0.05", "--h", "0.05", "--xmax", "4",
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out.startswith("x,F")
    assert "# atom," in captured.out


def test_solve_json_carries_run_metadata(tmp_path):
    out = tmp_path / "grid.json"
    code = main(
        [
            "solve",
            "--g", "s", "--n", "1", "--T", "1",
            "--delta", "0.05", "--h", "0.05", "--xmax", "4",
            "--format", "json", "--out", str(out),
        ]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    meta = doc["meta"]
    assert meta["g"] == "s"
    assert meta["n"] == "1"
    assert meta["T"] == 1.0
    assert meta["delta"] == 0.05
    assert meta["h"] == 0.05
    assert meta["x_max"] == 4.0
    assert 0.999 < meta["mass_captured"] <= 1.0
    assert meta["wall_time"] > 0.0
    assert doc["mesh"]["delta"] == 0.05
    assert len(doc["values"]) == 81


def test_sign_changing_kernel_gets_a_symmetric_window(tmp_path):
    out = tmp_path / "grid.csv"
    code = main(
        [
            "solve",
            "--g", "sin(2*pi*s)", "--n", "1", "--T", "1",
            "--delta", "0.05", "--h", "0.05", "--xmax", "3",
            "--out", str(out),
        ]
    )
    assert code == 0
    grid = grid_from_csv(out.read_text())
    assert grid.mesh.x_min == -3.0
    assert grid.mesh.x_max == 3.0


def test_bad_expression_is_a_user_error(capsys):
    code = main(
        [
            "solve",
            "--g", "s^", "--n", "1", "--T", "1",
            "--delta", "0.05", "--h", "0.05", "--xmax", "4",
        ]
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "error:" in captured.err
    assert "offset 2" in captured.err


def test_missing_flag_is_a_user_error(capsys):
    code = main(["solve", "--g", "s", "--n", "1", "--T", "1"])
    captured = capsys.readouterr()
    assert code == 1
    assert "--delta" in captured.err


def test_negative_delta_is_a_user_error(capsys):
    code = main(
        [
            "solve",
            "--g", "s", "--n", "1", "--T", "1",
            "--delta", "-0.05", "--h", "0.05", "--xmax", "4",
        ]
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "--delta must be positive" in captured.err


def test_unstable_step_is_a_numerical_error(capsys):
    code = main(
        [
            "solve",
            "--g", "s", "--n", "1", "--T", "1",
            "--delta", "0.05", "--h", "2", "--xmax", "4",
        ]
    )
    captured = capsys.readouterr()
    assert code == 2
    assert "h * sup(n)" in captured.err


def test_density_output_layout(capsys):
    code = main(
        [
            "density",
            "--g", "s", "--n", "1", "--T", "1",
            "--delta", "0.005", "--h", "0.005", "--xmax", "4",
            "--delta1", "0.05",
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    lines = captured.out.strip().splitlines()
    assert lines[0] == "x,f"
    atom_lines = [ln for ln in lines if ln.startswith("# atom,")]
    assert len(atom_lines) == 1
    assert float(atom_lines[0].split(",")[2]) == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert lines[-1].startswith("# clamped_mass,")


def test_oracle_table_reports_small_series_error(capsys):
    code = main(
        [
            "oracle",
            "--g", "s", "--n", "1", "--T", "1",
            "--delta", "0.002", "--h", "0.002", "--xmax", "4",
            "--against", "series", "--points", "9",
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    err_line = [ln for ln in captured.out.splitlines() if ln.startswith("max_abs_err")]
    assert len(err_line) == 1
    assert float(err_line[0].split()[1]) < 5e-3


def test_converge_prints_a_first_order_fit(capsys):
    code = main(
        [
            "converge",
            "--g", "s", "--n", "1", "--T", "1", "--xmax", "3",
            "--resolutions", "4e-3,2e-3",
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    fit = [ln for ln in captured.out.splitlines() if ln.startswith("fitted_order")]
    assert float(fit[0].split()[1]) == pytest.approx(1.0, abs=0.1)
