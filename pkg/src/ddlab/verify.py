from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import linalg

from ddlab import __version__
from ddlab.energy import (
    CurvatureSlot,
    aubin_yau,
    delta_log_norm,
    k_energy_decomposition,
    multilinear_energy,
    sigma_potentials,
)
from ddlab.forms import (
    chow_form_hypersurface,
    discriminant_form,
    form_degree_data,
)
from ddlab.polycore import BlockGrading, MultiPoly, parse_poly, to_complex
from ddlab.projgeom import (
    GroupElement,
    embedding_potential,
    one_param_subgroup,
    parse_matrix,
)
from ddlab.quadrature import Estimate, SpaceSpec
from ddlab.report import CheckResult, Report, emit_report

SCENARIO_FORMAT_VERSION = "1.0"
CHECKS = ("zero_energies", "cor1", "cor2")
SIGN_CONVENTIONS = ("points", "sections")
ACTIONS = ("inverse", "direct")
NORMALIZATIONS = ("single", "double", "degree")
MIN_RANDOM_SIGMAS = 5
# Group elements each check needs per SL(n + 1) it runs on
MIN_SIGMAS = {"zero_energies": 5, "cor1": 5, "cor2": 20}

__all__ = [
    "CalibrationError",
    "DroppedPointWarning",
    "Scenario",
    "ScenarioError",
    "Tolerances",
    "check_calibration_consistency",
    "emit_report",
    "load_scenario",
    "run_scenario",
    "verify_cor1",
    "verify_cor2",
    "verify_zero_energies",
]


class ScenarioError(ValueError):
    pass


class CalibrationError(ArithmeticError):
    def __init__(self, message: str, report: Report | None = None) -> None:
        super().__init__(message)
        self.report = report


class DroppedPointWarning(UserWarning):
    pass


def _section(data: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = data.get(key, {})
    if not isinstance(value, Mapping):
        raise ScenarioError(
            f"Scenario field {key!r} must be an object, got {type(value).__name__}"
        )
    return value


def derive_seed(seed: int, *key: int) -> int:
    """
    Independent integer seed for one integral of a scenario.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=key)
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class Tolerances:
    absolute: float = 1e-2
    stderr_multiple: float = 3.0
    r2_min: float = 0.999
    ratio_relative: float = 0.05
    stderr_cap: float = math.inf


@dataclass(frozen=True)
class Ray:
    generator: np.ndarray
    t: tuple[float, ...]


@dataclass
class Scenario:
    """
    A declarative verification run. Every random choice is derived from
    ``seed``.
    """

    name: str
    checks: tuple[str, ...]
    seed: int
    curve: MultiPoly | None = None
    jobs: int | None = None
    ambient_budget: int = 100_000
    curve_budget: int = 20_000
    tolerances: Tolerances = field(default_factory=Tolerances)
    random_count: int = MIN_RANDOM_SIGMAS
    random_radius: float = 0.5
    explicit: tuple[np.ndarray, ...] = ()
    rays: tuple[Ray, ...] = ()
    zero_dims: tuple[int, ...] = (1, 2)
    cor1_cases: tuple[str, ...] = ("linear_form", "conic")
    linear_form: str = "x0"
    conic: str = "x0*x2 - x1^2"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Scenario:
        try:
            return cls._from_dict(data)
        except (KeyError, TypeError, AttributeError) as exc:
            raise ScenarioError(f"Malformed scenario: {exc}") from exc

    @classmethod
    def _from_dict(cls, data: Mapping[str, Any]) -> Scenario:
        version = str(data.get("format_version", SCENARIO_FORMAT_VERSION))
        major = version.split(".")[0]
        if not major.isdigit() or int(major) > 1:
            raise ScenarioError(f"Unsupported scenario format_version {version!r}")
        checks = tuple(data["checks"])
        unknown = sorted(set(checks) - set(CHECKS))
        if unknown:
            raise ScenarioError(f"Unknown checks: {', '.join(unknown)}")
        if "seed" not in data:
            raise ScenarioError("Scenarios must set an explicit seed")
        curve = None
        if data.get("curve"):
            curve = parse_poly(data["curve"], BlockGrading.single(3))
        budgets = _section(data, "budgets")
        tolerances = Tolerances(
            **{
                key: float(value)
                for key, value in _section(data, "tolerances").items()
            }
        )
        sigmas = _section(data, "sigmas")
        random_spec = _section(sigmas, "random")
        explicit = tuple(parse_matrix(rows) for rows in sigmas.get("explicit", []))
        rays = tuple(
            Ray(parse_matrix(ray["generator"]), tuple(float(t) for t in ray["t"]))
            for ray in sigmas.get("rays", [])
        )
        cor1 = _section(data, "cor1")
        zero_energies = _section(data, "zero_energies")
        scenario = cls(
            name=str(data.get("name", "")),
            checks=checks,
            seed=int(data["seed"]),
            curve=curve,
            jobs=data.get("jobs"),
            ambient_budget=int(budgets.get("ambient", 100_000)),
            curve_budget=int(budgets.get("curve", 20_000)),
            tolerances=tolerances,
            random_count=int(random_spec.get("count", MIN_RANDOM_SIGMAS)),
            random_radius=float(random_spec.get("radius", 0.5)),
            explicit=explicit,
            rays=rays,
            zero_dims=tuple(int(n) for n in zero_energies.get("dims", (1, 2))),
            cor1_cases=tuple(cor1.get("cases", ("linear_form", "conic"))),
            linear_form=str(cor1.get("linear_form", "x0")),
            conic=str(cor1.get("conic", "x0*x2 - x1^2")),
        )
        scenario.validate()
        return scenario

    def validate(self) -> None:
        if "cor2" in self.checks:
            if self.curve is None:
                raise ScenarioError("cor2 needs a curve")
            (degree,) = self.curve.multidegree()
            if degree not in (2, 3):
                raise ScenarioError(
                    f"cor2 runs on conics and cubics, not degree {degree}"
                )
        if any(n not in (1, 2) for n in self.zero_dims):
            raise ScenarioError("Zero-energy checks run on P^1 and P^2")
        if self.ambient_budget < 1 or self.curve_budget < 1:
            raise ScenarioError("Budgets must be positive")
        if self.random_count < 0:
            raise ScenarioError("Random sigma count must be non-negative")
        for case in self.cor1_cases:
            if case not in ("linear_form", "conic"):
                raise ScenarioError(f"Unknown cor1 case {case!r}")
        sizes = {
            "zero_energies": [n + 1 for n in self.zero_dims],
            "cor1": [3],
            "cor2": [3],
        }
        for check in self.checks:
            for size in sizes[check]:
                count = self.sigma_count(size)
                if count < MIN_SIGMAS[check]:
                    raise ScenarioError(
                        f"{check} needs at least {MIN_SIGMAS[check]} group "
                        f"elements of SL({size}), got {count}"
                    )

    def sigma_count(self, size: int) -> int:
        """
        Explicit, random and ray elements of SL(size) together.
        """
        square = (size, size)
        explicit = sum(matrix.shape == square for matrix in self.explicit)
        rays = sum(len(ray.t) for ray in self.rays if ray.generator.shape == square)
        return explicit + self.random_count + rays

    def group_elements(self, size: int) -> list[tuple[str, GroupElement]]:
        """
        Labelled group elements of SL(size): explicit matrices of that
        size, seeded random draws, then every point of every ray.
        """
        elements: list[tuple[str, GroupElement]] = []
        for i, matrix in enumerate(self.explicit):
            if matrix.shape == (size, size):
                elements.append((f"explicit-{i}", GroupElement(matrix)))
        rng = np.random.default_rng(derive_seed(self.seed, 1, size))
        for i in range(self.random_count):
            elements.append(
                (f"random-{i}", GroupElement.random(rng, size, self.random_radius))
            )
        for i, ray in enumerate(self.rays):
            if ray.generator.shape == (size, size):
                for t in ray.t:
                    elements.append(
                        (f"ray-{i}:t={t:g}", one_param_subgroup(ray.generator, t))
                    )
        return elements

    def equal_check(
        self,
        name: str,
        measured: Estimate,
        expected: float = 0.0,
        *,
        stderr: float | None = None,
        inputs: dict[str, Any] | None = None,
    ) -> CheckResult:
        return CheckResult(
            name=name,
            measured=measured.value,
            expected=expected,
            stderr=measured.stderr if stderr is None else stderr,
            tolerance=self.tolerances.absolute,
            k=self.tolerances.stderr_multiple,
            inputs=inputs or {},
        )


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path} must contain a JSON object")
    return Scenario.from_dict(data)


def _matrix_inputs(sigma: GroupElement) -> list[list[list[float]]]:
    return [[[z.real, z.imag] for z in row] for row in sigma.mat.tolist()]


def _new_report(scenario: Scenario) -> Report:
    return Report(
        name=scenario.name,
        environment={"version": __version__, "seed": scenario.seed},
    )


def noop_log(message: str) -> None:
    pass


def _logger(log: Callable[[str], None], quiet: bool) -> Callable[[str], None]:
    return noop_log if quiet else log


# Zero energies


def verify_zero_energies(
    scenario: Scenario,
    *,
    log: Callable[[str], None] = print,
    quiet: bool = False,
) -> Report:
    """
    The Aubin-Yau energy and the multilinear energies of Bergman potentials
    vanish on P^N. Both sign conventions for the potential are tried; the
    first whose checks all pass is the resolved convention.
    """
    log = _logger(log, quiet)
    report = _new_report(scenario)
    outcomes: dict[str, bool] = {}
    resolved: str | None = None
    candidate_checks: dict[str, list[CheckResult]] = {}
    for c, convention in enumerate(SIGN_CONVENTIONS):
        checks = []
        for n in scenario.zero_dims:
            space = SpaceSpec.projective(n)
            for s, (label, sigma) in enumerate(scenario.group_elements(n + 1)):
                phi = sigma_potentials(sigma, convention)
                inputs = {"n": n, "sigma": label, "convention": convention}
                seed = derive_seed(scenario.seed, 2, c, n, s)
                budget = scenario.ambient_budget
                energy = aubin_yau(space, phi, budget, seed, jobs=scenario.jobs)
                checks.append(
                    scenario.equal_check(
                        f"aubin_yau_p{n}[{label}]", energy, inputs=inputs
                    )
                )
                slots = [CurvatureSlot.line(phi)] * (n + 1)
                pairing = multilinear_energy(
                    slots, space, budget, seed + 1, jobs=scenario.jobs
                )
                checks.append(
                    scenario.equal_check(
                        f"multilinear_p{n}[{label}]", pairing, inputs=inputs
                    )
                )
                slots = [CurvatureSlot.canonical(phi)] + [CurvatureSlot.line(phi)] * n
                twisted = multilinear_energy(
                    slots, space, budget, seed + 2, jobs=scenario.jobs
                )
                checks.append(
                    scenario.equal_check(
                        f"multilinear_kl_p{n}[{label}]", twisted, inputs=inputs
                    )
                )
        candidate_checks[convention] = checks
        outcomes[convention] = all(check.passed for check in checks)
        if outcomes[convention] and resolved is None:
            resolved = convention
    report.calibration["sign_convention"] = {
        "candidates": outcomes,
        "resolved": resolved,
    }
    for check in candidate_checks[resolved or SIGN_CONVENTIONS[0]]:
        report.add(check, log)
    if resolved is None:
        failed = [check.name for check in report.failures()]
        raise CalibrationError(
            "No sign convention makes the zero-energy identities hold; failing: "
            + ", ".join(failed),
            report,
        )
    return report


# Energy on a hypersurface against the norm of its form


def _kernel_basis(linear: MultiPoly) -> np.ndarray:
    """
    Orthonormal basis (3 x 2) of the plane {f = 0} for a linear form f.
    """
    coefficients = np.array(
        [to_complex(linear.diff(i).constant_value) for i in range(3)]
    )
    return linalg.null_space(coefficients[None, :])


def _normalization(name: str, degree: int) -> float:
    if name == "single":
        return 1.0
    if name == "double":
        return 1.0 / degree**2
    return 1.0 / degree


def _cor1_pair(
    scenario: Scenario,
    case: str,
    sigma: GroupElement,
    seed: int,
) -> tuple[Estimate, dict[str, Estimate], int]:
    text = scenario.linear_form if case == "linear_form" else scenario.conic
    form = parse_poly(text, BlockGrading.single(3))
    (degree,) = form.multidegree()
    if degree == 1:
        restricted = embedding_potential(sigma.mat @ _kernel_basis(form))
        lhs = aubin_yau(
            SpaceSpec.projective(1),
            restricted,
            scenario.ambient_budget,
            seed,
            jobs=scenario.jobs,
        )
    else:
        lhs = aubin_yau(
            SpaceSpec.plane_curve(form),
            sigma_potentials(sigma, "points"),
            scenario.curve_budget,
            seed,
            jobs=scenario.jobs,
        )
    rhs = {
        "inverse": delta_log_norm(
            form,
            sigma,
            scenario.ambient_budget,
            seed + 1,
            role="points",
            jobs=scenario.jobs,
        ),
        "direct": delta_log_norm(
            form,
            sigma.inverse(),
            scenario.ambient_budget,
            seed + 1,
            role="points",
            jobs=scenario.jobs,
        ),
    }
    return lhs, rhs, degree


def _cor1_check(
    scenario: Scenario,
    name: str,
    lhs: Estimate,
    rhs: Estimate,
    factor: float,
    inputs: dict[str, Any],
) -> CheckResult:
    predicted = rhs.scaled(factor)
    return CheckResult(
        name=name,
        measured=lhs.value,
        expected=predicted.value,
        stderr=lhs.combined_stderr(predicted),
        tolerance=scenario.tolerances.absolute,
        k=scenario.tolerances.stderr_multiple,
        inputs=inputs,
        extra={"lhs_stderr": lhs.stderr, "rhs_stderr": predicted.stderr},
    )


def verify_cor1(
    scenario: Scenario,
    *,
    log: Callable[[str], None] = print,
    quiet: bool = False,
) -> Report:
    """
    Aubin-Yau energy on Z = {f = 0} against the change of the Deligne norm
    of f. The linear form fixes the action and the normalization; the conic
    is then checked with the same constant.
    """
    log = _logger(log, quiet)
    report = _new_report(scenario)
    sigmas = scenario.group_elements(3)
    candidates = [(a, n) for a in ACTIONS for n in NORMALIZATIONS]
    resolved: tuple[str, str] | None = None
    if "linear_form" in scenario.cor1_cases:
        pairs = [
            _cor1_pair(scenario, "linear_form", sigma, derive_seed(scenario.seed, 3, s))
            for s, (_, sigma) in enumerate(sigmas)
        ]
        outcomes: dict[str, bool] = {}
        for action, normalization in candidates:
            outcomes[f"{action}/{normalization}"] = all(
                _cor1_check(
                    scenario,
                    "",
                    lhs,
                    rhs[action],
                    _normalization(normalization, degree),
                    {},
                ).passed
                for lhs, rhs, degree in pairs
            )
        passing = [c for c in candidates if outcomes[f"{c[0]}/{c[1]}"]]
        if passing:
            resolved = passing[0]
        report.calibration["cor1_normalization"] = {
            "candidates": outcomes,
            "resolved": None if resolved is None else "/".join(resolved),
            "tied": ["/".join(c) for c in passing[1:]],
        }
        action, normalization = resolved or candidates[0]
        for (label, sigma), (lhs, rhs, degree) in zip(sigmas, pairs):
            report.add(
                _cor1_check(
                    scenario,
                    f"cor1_linear[{label}]",
                    lhs,
                    rhs[action],
                    _normalization(normalization, degree),
                    {"sigma": label, "form": scenario.linear_form},
                ),
                log,
            )
        if resolved is None:
            raise CalibrationError(
                "No normalization of the Deligne norm matches the linear case",
                report,
            )
    else:
        resolved = candidates[0]
        report.calibration["cor1_normalization"] = {
            "candidates": {},
            "resolved": "/".join(resolved),
            "tied": [],
        }
    if "conic" in scenario.cor1_cases:
        action, normalization = resolved
        for s, (label, sigma) in enumerate(sigmas):
            lhs, rhs, degree = _cor1_pair(
                scenario, "conic", sigma, derive_seed(scenario.seed, 4, s)
            )
            check = _cor1_check(
                scenario,
                f"cor1_conic[{label}]",
                lhs,
                rhs[action],
                _normalization(normalization, degree),
                {"sigma": label, "form": scenario.conic},
            )
            check.extra["alternatives"] = {
                f"{a}/{n}": rhs[a].value * _normalization(n, degree)
                for a, n in candidates
            }
            report.add(check, log)
    return report


# K-energy against the Chow and dual norms


@dataclass(frozen=True)
class Cor2Point:
    label: str
    nu: Estimate
    dual: Estimate
    chow: Estimate
    aubin_yau: Estimate
    dual_prediction: Estimate

    @property
    def trivial(self) -> bool:
        return all(
            e.samples == 0 and e.value == 0.0
            for e in (self.nu, self.dual, self.chow)
        )


def _weighted_fit(
    points: Sequence[Cor2Point],
) -> tuple[float, float, float, np.ndarray]:
    if len(points) < 2:
        raise ScenarioError(f"A fit needs at least two points, got {len(points)}")
    y = np.array([p.nu.value for p in points])
    x = np.array([[p.dual.value, p.chow.value] for p in points])
    scale = np.abs(x).max(axis=0)
    if np.linalg.matrix_rank(x / np.where(scale, scale, 1)) < 2:
        raise ScenarioError(
            "Regressors are rank deficient; the sigma set is too symmetric"
        )
    coefficients = np.linalg.lstsq(x, y, rcond=None)[0]
    se_y = np.array([p.nu.stderr for p in points])
    se_x = np.array([[p.dual.stderr, p.chow.stderr] for p in points])
    # Effective variance: regressor noise propagated through the first fit
    variance = se_y**2 + (se_x**2) @ (coefficients**2)
    variance = np.maximum(variance, 1e-16)
    weights = 1 / variance
    root = np.sqrt(weights)
    coefficients = np.linalg.lstsq(x * root[:, None], y * root, rcond=None)[0]
    residual = y - x @ coefficients
    total = float(np.sum(weights * y**2))
    r2 = 1 - float(np.sum(weights * residual**2)) / total if total > 0 else 1.0
    a, b = (float(c) for c in coefficients)
    return a, b, r2, weights


def _degree_conventions(degree: int) -> dict[str, tuple[int, int]]:
    """
    (deg C_X, deg D_X) per factor and in total.
    """
    return {
        "per_factor": (degree, degree * (degree - 1)),
        "total": (2 * degree, degree * (degree - 1)),
    }


def verify_cor2(
    scenario: Scenario,
    *,
    log: Callable[[str], None] = print,
    quiet: bool = False,
) -> Report:
    """
    K-energy against the changes of the dual and Chow norms: a weighted
    linear fit with its quality and coefficient ratio gated, plus the
    per-sigma Chow and dual decompositions.
    """
    log = _logger(log, quiet)
    report = _new_report(scenario)
    curve = scenario.curve
    if curve is None:
        raise ScenarioError("cor2 needs a curve")
    (degree,) = curve.multidegree()
    volume = float(form_degree_data(curve).volume)
    chow = chow_form_hypersurface(curve)
    dual = discriminant_form(curve, seed=scenario.seed)
    tolerances = scenario.tolerances

    points: list[Cor2Point] = []
    for s, (label, sigma) in enumerate(scenario.group_elements(3)):
        seed = derive_seed(scenario.seed, 5, s)
        terms = k_energy_decomposition(
            curve, sigma, scenario.curve_budget, seed, jobs=scenario.jobs
        )
        point = Cor2Point(
            label=label,
            nu=terms["v_nu"].scaled(1 / volume),
            dual=delta_log_norm(
                dual, sigma, scenario.ambient_budget, seed + 1, jobs=scenario.jobs
            ),
            chow=delta_log_norm(
                chow, sigma, scenario.ambient_budget, seed + 2, jobs=scenario.jobs
            ),
            aubin_yau=terms["aubin_yau"],
            dual_prediction=terms["dual_prediction"],
        )
        points.append(point)
        inputs = {"sigma": label}
        report.add(
            scenario.equal_check(
                f"chow_energy[{label}]",
                point.chow,
                point.aubin_yau.value,
                stderr=point.chow.combined_stderr(point.aubin_yau),
                inputs=inputs,
            ),
            log,
        )
        report.add(
            scenario.equal_check(
                f"dual_decomposition[{label}]",
                point.dual,
                point.dual_prediction.value,
                stderr=point.dual.combined_stderr(point.dual_prediction),
                inputs=inputs,
            ),
            log,
        )

    if points and all(point.trivial for point in points):
        report.fits["cor2"] = {"trivial": True, "n": len(points)}
        report.add(
            CheckResult("cor2_trivial", 0.0, 0.0, inputs={"n": len(points)}), log
        )
        return report

    kept = [p for p in points if p.nu.stderr <= tolerances.stderr_cap]
    dropped = [p.label for p in points if p.nu.stderr > tolerances.stderr_cap]
    if dropped:
        warnings.warn(
            f"Dropped {len(dropped)} points above the stderr cap: "
            + ", ".join(dropped),
            DroppedPointWarning,
            stacklevel=2,
        )
    a, b, r2, _ = _weighted_fit(kept)
    conventions = _degree_conventions(degree)
    ratio = a / b if b != 0 else math.inf
    relative = {
        name: abs(ratio - (-c / d)) / (c / d) for name, (c, d) in conventions.items()
    }
    matching = [
        name for name, error in relative.items() if error <= tolerances.ratio_relative
    ]
    best = min(relative, key=lambda name: relative[name])
    c_deg, d_deg = conventions[best]
    report.fits["cor2"] = {
        "a": a,
        "b": b,
        "r2": r2,
        "n": len(kept),
        "dropped": dropped,
        "ratio": ratio,
        "conventions": {
            name: {
                "deg_chow": c,
                "deg_dual": d,
                "expected_ratio": -c / d,
                "relative_error": relative[name],
                "scale_dual": a / c,
                "scale_chow": b / (-d),
            }
            for name, (c, d) in conventions.items()
        },
        "matching": matching,
    }
    report.add(
        CheckResult(
            "cor2_r2",
            r2,
            tolerances.r2_min,
            rule="at_least",
            inputs={"n": len(kept)},
        ),
        log,
    )
    report.add(
        CheckResult(
            "cor2_ratio",
            ratio,
            -c_deg / d_deg,
            tolerance=tolerances.ratio_relative * c_deg / d_deg,
            k=0.0,
            inputs={"convention": best},
            extra={"matching": matching},
        ),
        log,
    )
    return report


# Drivers


def run_scenario(
    scenario: Scenario,
    *,
    checks: Iterable[str] | None = None,
    log: Callable[[str], None] = print,
    quiet: bool = False,
) -> Report:
    """
    Run the requested checks (all of the scenario's by default) into one
    report. Calibration failures propagate with the partial report attached.
    """
    selected = tuple(checks) if checks is not None else scenario.checks
    runners = {
        "zero_energies": verify_zero_energies,
        "cor1": verify_cor1,
        "cor2": verify_cor2,
    }
    report = _new_report(scenario)
    for name in selected:
        if name not in runners:
            raise ScenarioError(f"Unknown check {name!r}")
        try:
            part = runners[name](scenario, log=log, quiet=quiet)
        except CalibrationError as exc:
            if exc.report is not None:
                report.extend(exc.report)
            exc.report = report
            raise
        report.extend(part)
    return report


def check_calibration_consistency(reports: Sequence[Report]) -> dict[str, Any]:
    """
    Resolved calibration constants must agree across scenarios.
    """
    resolved: dict[str, Any] = {}
    for report in reports:
        for key, record in report.calibration.items():
            value = record.get("resolved") if isinstance(record, dict) else record
            if key in resolved and resolved[key] != value:
                raise CalibrationError(
                    f"Calibration {key} resolved to {resolved[key]!r} and {value!r} "
                    f"(in {report.name or 'unnamed scenario'})"
                )
            resolved[key] = value
    return resolved
