from __future__ import annotations

import csv
import json

import pytest

from ddlab.cli import (
    EXIT_FAILED,
    EXIT_INPUT,
    EXIT_OK,
    PlotRow,
    emit_plot_data,
    main,
)
from ddlab.forms import read_form
from ddlab.quadrature import Estimate

from .utils import curve_path

CONIC = curve_path("conic.txt")
CUBIC = curve_path("cubic.txt")


def write_scenario(path, **overrides):
    data = {
        "format_version": "1.0",
        "name": "cli",
        "checks": ["zero_energies"],
        "seed": 1,
        "budgets": {"ambient": 10_000},
        "tolerances": {"absolute": 0.02, "stderr_multiple": 5},
        "sigmas": {"random": {"count": 5}},
        "zero_energies": {"dims": [1]},
    }
    data.update(overrides)
    path.write_text(json.dumps(data))
    return str(path)


def test_selftest(capsys):
    assert main(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "dual_conic[standard]: PASS" in out
    assert out.rstrip().endswith("checks passed")


def test_quiet_selftest(capsys):
    assert main(["selftest", "--quiet"]) == EXIT_OK
    assert capsys.readouterr().out == ""


def test_chow(tmp_path):
    output = tmp_path / "chow.txt"
    assert main(["chow", "--curve", CONIC, "--output", str(output), "-q"]) == EXIT_OK
    poly, header = read_form(output)
    assert header["kind"] == "chow"
    assert poly.multidegree() == (2, 2)


def test_dual_to_stdout(capsys):
    assert main(["dual", "--curve", CUBIC, "-q"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "# kind: dual" in out
    assert "# degrees: 6" in out


def test_interpolated_dual_needs_a_seed(capsys):
    argv = ["dual", "--curve", CONIC, "--method", "interpolate", "-q"]
    assert main(argv) == EXIT_INPUT
    assert "--seed" in capsys.readouterr().err


def test_interpolated_dual_with_a_seed(capsys):
    argv = ["dual", "--curve", CUBIC, "--method", "interpolate", "--seed", "5", "-q"]
    assert main(argv) == EXIT_OK
    assert "# degrees: 6" in capsys.readouterr().out


def test_missing_curve_file(tmp_path, capsys):
    missing = str(tmp_path / "missing.txt")
    assert main(["chow", "--curve", missing]) == EXIT_INPUT
    assert capsys.readouterr().err.startswith("ddlab: error:")


def test_singular_curve_is_an_input_error(tmp_path, capsys):
    path = tmp_path / "double-line.txt"
    path.write_text("# grading: x:3\nx0^2\n")
    assert main(["dual", "--curve", str(path)]) == EXIT_INPUT
    assert capsys.readouterr().err.startswith("ddlab: error:")


def test_energy_record(tmp_path):
    output = tmp_path / "energy.json"
    argv = [
        "energy",
        "--functional",
        "aubin-yau",
        "--space",
        "p1",
        "--sigma",
        "[[2, 0], [0, 0.5]]",
        "--budget",
        "2000",
        "--seed",
        "4",
        "--output",
        str(output),
        "-q",
    ]
    assert main(argv) == EXIT_OK
    record = json.loads(output.read_text())
    assert record["functional"] == "aubin-yau"
    assert record["estimate"]["samples"] == 2000
    assert record["environment"]["seed"] == 4


def test_deligne_norm_of_a_curve(capsys):
    argv = [
        "energy",
        "--functional",
        "deligne-norm",
        "--curve",
        CONIC,
        "--budget",
        "1000",
        "--seed",
        "0",
        "-q",
    ]
    assert main(argv) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record["functional"] == "deligne-norm"


def test_deligne_norm_needs_an_input():
    argv = ["energy", "--functional", "deligne-norm", "--seed", "0"]
    assert main(argv) == EXIT_INPUT


def test_sample_dump(tmp_path):
    dump = tmp_path / "samples.csv"
    argv = [
        "energy",
        "--functional",
        "aubin-yau",
        "--space",
        "p1",
        "--budget",
        "500",
        "--seed",
        "0",
        "--sigma",
        "[[1, 1], [0, 1]]",
        "--dump-samples",
        str(dump),
        "--output",
        str(tmp_path / "energy.json"),
        "-q",
    ]
    assert main(argv) == EXIT_OK
    with open(dump, newline="") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 501


def test_seed_is_required():
    with pytest.raises(SystemExit) as info:
        main(["knorm", "--curve", CONIC])
    assert info.value.code == 2


def test_jobs_must_be_positive():
    assert main(["selftest", "--jobs", "0"]) == EXIT_INPUT


def test_knorm_record(capsys):
    argv = ["knorm", "--curve", CONIC, "--budget", "200", "--seed", "2", "-q"]
    assert main(argv) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record["nu"]["value"] == 0
    assert record["nu"]["method"] == "unitary"


def test_knorm_plot_data(tmp_path):
    output = tmp_path / "plot.csv"
    argv = [
        "knorm",
        "--curve",
        CONIC,
        "--generator",
        "[[1, 0, 0], [0, -1, 0], [0, 0, 0]]",
        "--t-grid",
        "0.1,0.2",
        "--budget",
        "200",
        "--ambient-budget",
        "1000",
        "--seed",
        "3",
        "--output",
        str(output),
        "-q",
    ]
    assert main(argv) == EXIT_OK
    with open(output, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "nu", "nu_stderr", "dlogD", "dlogC"]
    assert [float(row[0]) for row in rows[1:]] == [0.1, 0.2]


TRACELESS = "[[1, 0, 0], [0, -1, 0], [0, 0, 0]]"


@pytest.mark.parametrize(
    "extra",
    [
        # No t grid
        ["--generator", TRACELESS, "--output", "plot.csv"],
        # No output path
        ["--generator", TRACELESS, "--t-grid", "0.1"],
        # Not traceless
        [
            "--generator",
            "[[1, 0, 0], [0, 1, 0], [0, 0, 1]]",
            "--t-grid",
            "0.1",
            "--output",
            "plot.csv",
        ],
        ["--generator", TRACELESS, "--t-grid", "0.1,soon", "--output", "plot.csv"],
    ],
)
def test_knorm_plot_errors(tmp_path, monkeypatch, extra):
    monkeypatch.chdir(tmp_path)
    argv = ["knorm", "--curve", CONIC, "--seed", "0", "-q", *extra]
    assert main(argv) == EXIT_INPUT


def test_emit_plot_data_needs_rows(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data([], str(tmp_path / "plot.csv"))


def test_emit_plot_data(tmp_path):
    path = tmp_path / "plot.csv"
    row = PlotRow(
        0.5,
        Estimate(0.25, 0.01, 10, 0, "k-energy"),
        Estimate(-1.0, 0.0, 10, 0, "paired-mc"),
        Estimate(0.5, 0.0, 10, 0, "paired-mc"),
    )
    emit_plot_data([row], str(path))
    assert path.read_text().splitlines()[1] == "0.5,0.25,0.01,-1.0,0.5"


def test_verify_writes_report(tmp_path):
    scenario = write_scenario(tmp_path / "scenario.json")
    report = tmp_path / "report.json"
    argv = ["verify", "all", "--scenario", scenario, "--seed", "8"]
    argv += ["--report", str(report), "-q"]
    assert main(argv) == EXIT_OK
    data = json.loads(report.read_text())
    assert data["environment"]["seed"] == 8
    assert data["calibration"]["sign_convention"]["resolved"] == "points"


def test_verify_calibration_failure(tmp_path):
    scenario = write_scenario(
        tmp_path / "scenario.json",
        tolerances={"absolute": 0, "stderr_multiple": 0},
    )
    report = tmp_path / "report.txt"
    argv = ["verify", "zero_energies", "--scenario", scenario, "--seed", "1"]
    argv += ["--report", str(report), "--format", "text", "-q"]
    assert main(argv) == EXIT_FAILED
    assert report.read_text().startswith("Report cli")


def test_verify_unknown_scenario():
    argv = ["verify", "cor1", "--scenario", "no-such-scenario", "--seed", "1"]
    assert main(argv) == EXIT_INPUT


def test_verify_rejects_bad_scenarios(tmp_path):
    scenario = write_scenario(tmp_path / "scenario.json", checks=["cor2"])
    argv = ["verify", "all", "--scenario", scenario, "--seed", "1", "-q"]
    assert main(argv) == EXIT_INPUT


@pytest.mark.parametrize("field", ["budgets", "sigmas", "tolerances", "cor1"])
def test_verify_rejects_lists_for_sections(tmp_path, capsys, field):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({"checks": ["zero_energies"], "seed": 1, field: [1000]}))
    argv = ["verify", "all", "--scenario", str(path), "--seed", "1", "-q"]
    assert main(argv) == EXIT_INPUT
    assert f"{field!r} must be an object" in capsys.readouterr().err


def test_verify_rejects_too_few_sigmas(tmp_path, capsys):
    scenario = write_scenario(
        tmp_path / "scenario.json", sigmas={"random": {"count": 4}}
    )
    argv = ["verify", "all", "--scenario", scenario, "--seed", "1", "-q"]
    assert main(argv) == EXIT_INPUT
    assert "needs at least 5" in capsys.readouterr().err
