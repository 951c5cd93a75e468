from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

REPORT_FORMAT_VERSION = "1.0"
FORMATS = ("json", "text")


@dataclass
class CheckResult:
    """
    One gated comparison. "equal" checks pass when
    |measured - expected| <= max(tolerance, k * stderr); "at_least" checks
    pass when measured >= expected.
    """

    name: str
    measured: float
    expected: float
    stderr: float = 0.0
    tolerance: float = 0.0
    k: float = 3.0
    inputs: dict[str, Any] = field(default_factory=dict)
    rule: str = "equal"
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.rule not in ("equal", "at_least"):
            raise ValueError(f"Unknown rule {self.rule!r}")

    @property
    def allowed(self) -> float:
        return max(self.tolerance, self.k * self.stderr)

    @property
    def margin(self) -> float:
        if self.rule == "at_least":
            return self.measured - self.expected
        return self.allowed - abs(self.measured - self.expected)

    @property
    def passed(self) -> bool:
        return math.isfinite(self.measured) and self.margin >= 0

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.rule == "at_least":
            return (
                f"{self.name}: {status} {self.measured:.6g} "
                f"(required >= {self.expected:.6g})"
            )
        return (
            f"{self.name}: {status} {self.measured:.6g} ± {self.stderr:.3g} "
            f"(expected {self.expected:.6g}, margin {self.margin:.3g})"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "inputs": self.inputs,
            "measured": self.measured,
            "stderr": self.stderr,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "k": self.k,
            "rule": self.rule,
            "margin": self.margin,
            "passed": self.passed,
            **({"extra": self.extra} if self.extra else {}),
        }


@dataclass
class Report:
    name: str = ""
    checks: list[CheckResult] = field(default_factory=list)
    calibration: dict[str, Any] = field(default_factory=dict)
    fits: dict[str, Any] = field(default_factory=dict)
    environment: dict[str, Any] = field(default_factory=dict)

    def add(self, check: CheckResult, log: Callable[[str], None] | None = None) -> None:
        self.checks.append(check)
        if log is not None:
            log(check.summary_line())

    def extend(self, other: Report) -> None:
        self.checks.extend(other.checks)
        self.calibration.update(other.calibration)
        self.fits.update(other.fits)

    @property
    def passed_count(self) -> int:
        return sum(check.passed for check in self.checks)

    @property
    def passed(self) -> bool:
        return self.passed_count == len(self.checks)

    def failures(self) -> Iterable[CheckResult]:
        return (check for check in self.checks if not check.passed)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "name": self.name,
            "summary": {
                "checks": len(self.checks),
                "passed": self.passed_count,
                "failed": len(self.checks) - self.passed_count,
            },
            "checks": [check.to_dict() for check in self.checks],
            "calibration": self.calibration,
            "fits": self.fits,
            "environment": self.environment,
        }


def _finite(value: Any) -> Any:
    # JSON has no NaN or infinity
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(key): _finite(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(item) for item in value]
    return value


def render_report(report: Report, format: str = "json") -> str:
    if format == "json":
        return json.dumps(_finite(report.to_dict()), sort_keys=True, indent=2) + "\n"
    if format == "text":
        lines = [f"Report {report.name}".rstrip()]
        lines.extend(check.summary_line() for check in report.checks)
        for key, value in sorted(report.calibration.items()):
            lines.append(f"calibration {key}: {value}")
        for key, value in sorted(report.fits.items()):
            lines.append(f"fit {key}: {json.dumps(_finite(value), sort_keys=True)}")
        lines.append(
            f"{report.passed_count} of {len(report.checks)} checks passed"
        )
        return "\n".join(lines) + "\n"
    raise ValueError(f"Unknown report format {format!r}, expected one of {FORMATS}")


def emit_report(report: Report, path: str, format: str = "json") -> None:
    text = render_report(report, format)
    with open(path, "w", newline="\n") as f:
        f.write(text)
