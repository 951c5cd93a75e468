from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import ExitStack
from importlib import resources
from pathlib import Path
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from ddlab import __version__
from ddlab.energy import (
    aubin_yau,
    deligne_norm_log,
    delta_log_norm,
    k_energy,
)
from ddlab.forms import (
    BinaryForm,
    binary_discriminant,
    chow_form_hypersurface,
    conic_matrix,
    discriminant_form,
    dual_conic_adjugate,
    format_form,
    generalized_cross,
    read_curve,
    read_form,
)
from ddlab.polycore import BlockGrading, MultiPoly, parse_poly, to_complex
from ddlab.projgeom import (
    GroupElement,
    bergman_potential,
    one_param_subgroup,
    parse_matrix,
)
from ddlab.quadrature import (
    Estimate,
    SampleDump,
    SpaceSpec,
    curve_integral,
    default_jobs,
    integrate_projective,
)
from ddlab.report import FORMATS, CheckResult, Report, emit_report, render_report
from ddlab.verify import (
    CHECKS,
    CalibrationError,
    load_scenario,
    noop_log,
    run_scenario,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class PlotRow(NamedTuple):
    t: float
    nu: Estimate
    dual: Estimate
    chow: Estimate


def emit_plot_data(series: Sequence[PlotRow], path: str) -> None:
    """
    CSV of K-energy and norm changes along a ray, one row per t.
    """
    if not series:
        raise ValueError("Plot series is empty")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t", "nu", "nu_stderr", "dlogD", "dlogC"])
        for row in series:
            writer.writerow(
                [
                    repr(float(row.t)),
                    repr(row.nu.value),
                    repr(row.nu.stderr),
                    repr(row.dual.value),
                    repr(row.chow.value),
                ]
            )


def _matrix_argument(text: str) -> np.ndarray:
    """
    A JSON matrix given inline or as a path to a JSON file.
    """
    source = text if text.lstrip().startswith("[") else Path(text).read_text()
    try:
        rows = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ValueError(f"Cannot parse matrix {text!r}: {exc}") from exc
    return parse_matrix(rows)


def _t_grid(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ValueError(f"Bad t-grid {text!r}") from exc


def _scenario_path(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("ddlab") / "scenarios" / f"{name}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise ValueError(f"No scenario file or bundled scenario named {name!r}")


def _output(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _finish_dump(dump: SampleDump | None, log: Callable[[str], None]) -> None:
    if dump is None:
        return
    dump.close()
    log(f"Wrote samples to {dump.path}")


# Subcommands


def run_chow(args: argparse.Namespace, log: Callable[[str], None]) -> int:
    poly = read_curve(args.curve)
    form = chow_form_hypersurface(poly)
    _output(format_form(form), args.output)
    log(f"Chow form of multidegree {form.poly.multidegree()}")
    return EXIT_OK


def run_dual(args: argparse.Namespace, log: Callable[[str], None]) -> int:
    if args.method == "interpolate" and args.seed is None:
        raise ValueError("--method interpolate needs --seed")
    poly = read_curve(args.curve)
    seed = 0 if args.seed is None else args.seed
    form = discriminant_form(poly, poly.grading.sizes[0] - 1, args.method, seed=seed)
    _output(format_form(form), args.output)
    log(f"Discriminant form of multidegree {form.degrees} ({form.method})")
    return EXIT_OK


def _sigma(args: argparse.Namespace, size: int) -> GroupElement:
    if args.sigma is None:
        return GroupElement.identity(size)
    return GroupElement(_matrix_argument(args.sigma))


def run_energy(args: argparse.Namespace, log: Callable[[str], None]) -> int:
    with ExitStack() as stack:
        dump = None
        if args.dump_samples:
            dump = stack.enter_context(SampleDump(args.dump_samples))
        options: dict[str, Any] = {"jobs": args.jobs, "dump": dump}
        if args.functional == "aubin-yau":
            if args.space == "curve":
                if args.curve is None:
                    raise ValueError("--space curve needs --curve")
                space = SpaceSpec.plane_curve(read_curve(args.curve, 2))
                size = 3
            else:
                size = 2 if args.space == "p1" else 3
                space = SpaceSpec.projective(size - 1)
            phi = bergman_potential(_sigma(args, size))
            estimate = aubin_yau(space, phi, args.budget, args.seed, **options)
        else:
            poly = _deligne_input(args)
            if args.sigma is None:
                estimate = deligne_norm_log(poly, args.budget, args.seed, **options)
            else:
                sigma = _sigma(args, poly.grading.sizes[0])
                estimate = delta_log_norm(
                    poly,
                    sigma,
                    args.budget,
                    args.seed,
                    role=args.role,
                    **options,
                )
        record = {
            "format_version": "1.0",
            "functional": args.functional,
            "space": args.space,
            "estimate": estimate.to_dict(),
            "environment": {"version": __version__, "seed": args.seed},
        }
    _finish_dump(dump, log)
    _output(json.dumps(record, sort_keys=True, indent=2) + "\n", args.output)
    log(f"{args.functional}: {estimate.value:.6g} ± {estimate.stderr:.3g}")
    return EXIT_OK


def _deligne_input(args: argparse.Namespace) -> MultiPoly:
    if args.form is not None:
        poly, _ = read_form(args.form)
        return poly
    if args.curve is not None:
        return read_curve(args.curve)
    raise ValueError("deligne-norm needs --form or --curve")


def run_knorm(args: argparse.Namespace, log: Callable[[str], None]) -> int:
    poly = read_curve(args.curve, 2)
    if args.generator is None:
        with ExitStack() as stack:
            dump = None
            if args.dump_samples:
                dump = stack.enter_context(SampleDump(args.dump_samples))
            estimate = k_energy(
                poly,
                _sigma(args, 3),
                args.budget,
                args.seed,
                jobs=args.jobs,
                dump=dump,
            )
        _finish_dump(dump, log)
        record = {
            "format_version": "1.0",
            "nu": estimate.to_dict(),
            "environment": {"version": __version__, "seed": args.seed},
        }
        _output(json.dumps(record, sort_keys=True, indent=2) + "\n", args.output)
        log(f"nu: {estimate.value:.6g} ± {estimate.stderr:.3g}")
        return EXIT_OK

    grid = _t_grid(args.t_grid or "")
    if not grid:
        raise ValueError("--generator needs a non-empty --t-grid")
    if args.output is None or args.output == "-":
        raise ValueError("Plot data needs --output PATH")
    generator = _matrix_argument(args.generator)
    chow = chow_form_hypersurface(poly)
    dual = discriminant_form(poly, seed=args.seed)
    rows = []
    for i, t in enumerate(grid):
        sigma = one_param_subgroup(generator, t)
        seed = args.seed + 3 * i
        rows.append(
            PlotRow(
                t,
                k_energy(poly, sigma, args.budget, seed, jobs=args.jobs),
                delta_log_norm(
                    dual, sigma, args.ambient_budget, seed + 1, jobs=args.jobs
                ),
                delta_log_norm(
                    chow, sigma, args.ambient_budget, seed + 2, jobs=args.jobs
                ),
            )
        )
        log(f"t={t:g}: nu {rows[-1].nu.value:.6g} ± {rows[-1].nu.stderr:.3g}")
    emit_plot_data(rows, args.output)
    return EXIT_OK


def run_verify(args: argparse.Namespace, log: Callable[[str], None]) -> int:
    scenario = load_scenario(_scenario_path(args.scenario))
    scenario.seed = args.seed
    if args.jobs is not None:
        scenario.jobs = args.jobs
    checks = None if args.check == "all" else (args.check,)
    try:
        report = run_scenario(scenario, checks=checks, log=log, quiet=args.quiet)
    except CalibrationError as exc:
        log(f"Calibration failed: {exc}")
        if exc.report is not None and args.report:
            emit_report(exc.report, args.report, args.format)
        return EXIT_FAILED
    if args.report:
        emit_report(report, args.report, args.format)
    elif not args.quiet:
        sys.stdout.write(render_report(report, "text"))
    return EXIT_OK if report.passed else EXIT_FAILED


def selftest_report(log: Callable[[str], None] = print, seed: int = 0) -> Report:
    """
    Fast invariants: exact duals of conics, Chow form incidence, binary
    discriminant constants, and two quadrature calibrations.
    """
    report = Report(name="selftest", environment={"version": __version__})
    grading = BlockGrading.single(3)
    conics = {
        "identity": "x0^2 + x1^2 + x2^2",
        "diagonal": "x0^2 + 2*x1^2 + 3*x2^2",
        "standard": "x0*x2 - x1^2",
    }
    for name, text in conics.items():
        conic = parse_poly(text, grading)
        dual = discriminant_form(conic, seed=seed).poly.normalized()
        adjugate = dual_conic_adjugate(conic_matrix(conic)).poly.normalized()
        report.add(
            CheckResult(f"dual_conic[{name}]", float(dual != adjugate), 0.0), log
        )

    conic = parse_poly(conics["standard"], grading)
    chow = chow_form_hypersurface(conic)
    rng = np.random.default_rng(seed)
    misses = 0
    for _ in range(100):
        s = int(rng.integers(-5, 6))
        point = [1, s, s * s]
        planes = [
            generalized_cross([point, [int(v) for v in rng.integers(-5, 6, 3)]]).coords
            for _ in range(2)
        ]
        misses += bool(chow.evaluate(*planes))
    report.add(CheckResult("chow_incidence", float(misses), 0.0), log)

    report.add(
        CheckResult(
            "binary_discriminant[s^3 + t^3]",
            to_complex(binary_discriminant(BinaryForm((1, 0, 0, 1)))).real,
            -27.0,
        ),
        log,
    )

    mean_log = integrate_projective(
        lambda z: np.log(np.abs(z[:, 0]) ** 2),
        SpaceSpec.projective(1),
        200_000,
        seed,
    )
    report.add(
        CheckResult(
            "log_mean_p1", mean_log.value, -1.0, mean_log.stderr, tolerance=0, k=4
        ),
        log,
    )
    cubic = parse_poly("x0^3 + x1^3 + x2^3", grading)
    area = curve_integral(cubic, 1.0, "base", 256, seed)
    report.add(CheckResult("cubic_area", area.value, 3.0, tolerance=1e-9), log)
    return report


def run_selftest(args: argparse.Namespace, log: Callable[[str], None]) -> int:
    report = selftest_report(log)
    log(f"{report.passed_count} of {len(report.checks)} checks passed")
    return EXIT_OK if report.passed else EXIT_FAILED


# Parser


def _add_dump_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--dump-samples",
        metavar="PATH",
        help="Write every per-sample integrand value to PATH as CSV",
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--jobs",
        type=int,
        help="Worker threads for quadrature (default: $DDLAB_JOBS or 1)",
    )
    common.add_argument(
        "-q", "--quiet", help="Don't produce log output", action="store_true"
    )
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument(
        "--seed", type=int, required=True, help="Seed for all random numbers"
    )

    parser = argparse.ArgumentParser(
        prog="ddlab",
        description="Chow and discriminant forms of plane curves, Deligne norms "
        "and Kähler energy functionals, with scenario-driven verification",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    chow = commands.add_parser(
        "chow", parents=[common], help="Chow form of a hypersurface"
    )
    chow.add_argument("--curve", required=True, help="Defining form file")
    chow.add_argument("--output", help="Output form file (default: stdout)")
    chow.set_defaults(handler=run_chow)

    dual = commands.add_parser(
        "dual", parents=[common], help="Discriminant (dual) form of a hypersurface"
    )
    dual.add_argument("--curve", required=True, help="Defining form file")
    dual.add_argument(
        "--method",
        choices=("eliminate", "interpolate"),
        default="eliminate",
        help="Exact elimination or numerical interpolation (default: eliminate)",
    )
    dual.add_argument(
        "--seed",
        type=int,
        help=(
            "Seed for the smoothness test and interpolation points; "
            "required with --method interpolate (default for eliminate: 0)"
        ),
    )
    dual.add_argument("--output", help="Output form file (default: stdout)")
    dual.set_defaults(handler=run_dual)

    energy = commands.add_parser(
        "energy", parents=[common, seeded], help="Aubin-Yau energy or Deligne norm"
    )
    energy.add_argument(
        "--functional", choices=("aubin-yau", "deligne-norm"), required=True
    )
    energy.add_argument(
        "--space",
        choices=("p1", "p2", "curve"),
        default="p2",
        help="Space for the Aubin-Yau energy (default: p2)",
    )
    energy.add_argument("--curve", help="Defining form file of the curve")
    energy.add_argument("--form", help="Form file for the Deligne norm")
    energy.add_argument(
        "--sigma",
        help="Group element as a JSON matrix or JSON file (default: identity); "
        "for the Deligne norm, report the change of log norm under it",
    )
    energy.add_argument(
        "--role",
        choices=("points", "hyperplanes"),
        default="hyperplanes",
        help="Whether a Deligne-norm form lives on points or hyperplanes",
    )
    energy.add_argument("--budget", type=int, default=100_000, help="Sample count")
    energy.add_argument("--output", help="JSON record path (default: stdout)")
    _add_dump_options(energy)
    energy.set_defaults(handler=run_energy)

    knorm = commands.add_parser(
        "knorm", parents=[common, seeded], help="K-energy of a curve"
    )
    knorm.add_argument("--curve", required=True, help="Defining form file")
    knorm.add_argument(
        "--sigma", help="Group element as a JSON matrix or JSON file"
    )
    knorm.add_argument(
        "--generator",
        help="Traceless generator A; with --t-grid emit plot CSV along exp(tA)",
    )
    knorm.add_argument("--t-grid", help="Comma-separated t values")
    knorm.add_argument(
        "--budget", type=int, default=20_000, help="Slicing lines per K-energy"
    )
    knorm.add_argument(
        "--ambient-budget",
        type=int,
        default=100_000,
        help="Samples per norm change in plot data",
    )
    knorm.add_argument("--output", help="JSON record or plot CSV path")
    _add_dump_options(knorm)
    knorm.set_defaults(handler=run_knorm)

    verify = commands.add_parser(
        "verify", parents=[common, seeded], help="Run a verification scenario"
    )
    verify.add_argument("check", choices=CHECKS + ("all",))
    verify.add_argument(
        "--scenario",
        required=True,
        help="Scenario JSON file or the name of a bundled scenario",
    )
    verify.add_argument("--report", help="Report path (default: text on stdout)")
    verify.add_argument(
        "--format", choices=FORMATS, default="json", help="Report format"
    )
    verify.set_defaults(handler=run_verify)

    selftest = commands.add_parser(
        "selftest", parents=[common], help="Fast invariant suite"
    )
    selftest.set_defaults(handler=run_selftest)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    log: Callable[[str], None] = noop_log if args.quiet else print
    try:
        if args.jobs is None:
            args.jobs = default_jobs()
        elif args.jobs < 1:
            raise ValueError("--jobs must be positive")
        return int(args.handler(args, log))
    except (ValueError, OSError) as exc:
        print(f"ddlab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"ddlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
