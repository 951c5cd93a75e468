from __future__ import annotations

import json
import math

import pytest

from ddlab.report import CheckResult, Report, emit_report, render_report


def test_equal_check_uses_the_larger_allowance():
    check = CheckResult("a", 1.05, 1.0, stderr=0.01, tolerance=0.1)
    assert check.allowed == 0.1
    assert check.passed
    noisy = CheckResult("b", 1.05, 1.0, stderr=0.1, tolerance=0.01, k=3)
    assert noisy.allowed == pytest.approx(0.3)
    assert noisy.margin == pytest.approx(0.25)


def test_equal_check_fails_outside_the_allowance():
    check = CheckResult("a", 1.5, 1.0, stderr=0.1, tolerance=0.01)
    assert not check.passed
    assert check.margin == pytest.approx(-0.2)
    assert "FAIL" in check.summary_line()


def test_at_least_check():
    assert CheckResult("r2", 0.9995, 0.999, rule="at_least").passed
    check = CheckResult("r2", 0.95, 0.999, rule="at_least")
    assert not check.passed
    assert "required >= 0.999" in check.summary_line()


def test_nonfinite_measurements_fail():
    assert not CheckResult("a", math.nan, 0.0, tolerance=math.inf).passed
    assert not CheckResult("a", math.inf, 0.0, rule="at_least").passed


def test_unknown_rule():
    with pytest.raises(ValueError):
        CheckResult("a", 0.0, 0.0, rule="at_most")


def test_report_counts():
    report = Report("unit")
    report.add(CheckResult("one", 0.0, 0.0))
    report.add(CheckResult("two", 1.0, 0.0))
    assert report.passed_count == 1
    assert not report.passed
    assert [check.name for check in report.failures()] == ["two"]


def test_report_add_logs():
    lines = []
    Report().add(CheckResult("one", 0.0, 0.0), log=lines.append)
    assert lines == ["one: PASS 0 ± 0 (expected 0, margin 0)"]


def test_extend_merges_calibration_and_fits():
    first = Report("a", calibration={"x": 1})
    second = Report("b", calibration={"y": 2}, fits={"cor2": {"n": 3}})
    second.add(CheckResult("one", 0.0, 0.0))
    first.extend(second)
    assert first.calibration == {"x": 1, "y": 2}
    assert first.fits == {"cor2": {"n": 3}}
    assert len(first.checks) == 1


def test_json_rendering_maps_nonfinite_values_to_null():
    report = Report("unit", fits={"cor2": {"ratio": math.inf}})
    report.add(CheckResult("bad", math.nan, 0.0))
    data = json.loads(render_report(report))
    assert data["format_version"] == "1.0"
    assert data["checks"][0]["measured"] is None
    assert data["checks"][0]["passed"] is False
    assert data["fits"]["cor2"]["ratio"] is None
    assert data["summary"] == {"checks": 1, "passed": 0, "failed": 1}


def test_json_rendering_is_stable():
    report = Report("unit", environment={"seed": 3, "version": "1.0.0"})
    report.add(CheckResult("one", 0.0, 0.0, inputs={"sigma": "random-0"}))
    assert render_report(report) == render_report(report)
    assert render_report(report).endswith("}\n")


def test_text_rendering():
    report = Report(
        "unit",
        calibration={"sign_convention": "points"},
        fits={"cor2": {"n": 2}},
    )
    report.add(CheckResult("one", 0.0, 0.0))
    text = render_report(report, "text")
    assert text.splitlines() == [
        "Report unit",
        "one: PASS 0 ± 0 (expected 0, margin 0)",
        "calibration sign_convention: points",
        'fit cor2: {"n": 2}',
        "1 of 1 checks passed",
    ]


def test_unknown_format():
    with pytest.raises(ValueError):
        render_report(Report(), "yaml")


def test_emit_report(tmp_path):
    report = Report("unit")
    report.add(CheckResult("one", 0.01, 0.0, stderr=0.01))
    path = tmp_path / "report.json"
    emit_report(report, str(path))
    data = json.loads(path.read_text())
    assert data["checks"][0]["name"] == "one"
    assert data["summary"] == {"checks": 1, "passed": 1, "failed": 0}
