from __future__ import annotations

import csv

import numpy as np
import pytest

from ddlab.forms import PlaneCurve
from ddlab.polycore import BlockGrading, parse_poly
from ddlab.projgeom import GroupElement, bergman_potential
from ddlab.quadrature import (
    Estimate,
    NumericalFailure,
    SampleDump,
    SpaceSpec,
    curve_geometry,
    curve_integral,
    default_jobs,
    integrate_curve_vector,
    integrate_projective,
    integrate_vector,
    paired_log_ratio,
    sample_fs,
)

from .utils import within

PLANE = BlockGrading.single(3)


def log_first(x):
    return np.log(np.abs(x[:, 0]) ** 2)


def test_default_jobs():
    assert default_jobs({}) == 1
    assert default_jobs({"DDLAB_JOBS": "4"}) == 4
    for raw in ("0", "-1", "many"):
        with pytest.raises(ValueError):
            default_jobs({"DDLAB_JOBS": raw})


def test_space_volumes():
    assert SpaceSpec.projective(2).volume == 1
    assert SpaceSpec.product(1, 1).volume == 2
    assert SpaceSpec.product(2, 2).volume == 6
    assert SpaceSpec.for_grading([3, 3]) == SpaceSpec.product(2, 2)
    conic = parse_poly("x0*x2 - x1^2", PLANE)
    assert SpaceSpec.plane_curve(conic).volume == 2


def test_space_validation():
    with pytest.raises(ValueError):
        SpaceSpec("sphere", (2,))
    with pytest.raises(ValueError):
        SpaceSpec.product(0, 2)
    with pytest.raises(ValueError):
        SpaceSpec("curve")


def test_log_mean_on_projective_line():
    estimate = integrate_projective(log_first, SpaceSpec.projective(1), 100_000, 0)
    assert estimate.samples == 100_000
    assert within(estimate, -1.0)


def test_log_mean_on_projective_plane():
    estimate = integrate_projective(log_first, SpaceSpec.projective(2), 100_000, 1)
    assert within(estimate, -1.5)


def test_estimates_are_reproducible():
    space = SpaceSpec.projective(2)
    first = integrate_projective(log_first, space, 20_000, 3)
    again = integrate_projective(log_first, space, 20_000, 3)
    threaded = integrate_projective(log_first, space, 20_000, 3, jobs=2)
    other = integrate_projective(log_first, space, 20_000, 4)
    assert first == again
    assert first.value == pytest.approx(threaded.value, abs=1e-12)
    assert first.value != other.value


def test_columns_share_points():
    def columns(x):
        value = log_first(x)
        return np.stack([value, 2 * value], axis=-1)

    first, second = integrate_vector(columns, SpaceSpec.projective(1), 5_000, 2)
    assert second.value == pytest.approx(2 * first.value)
    assert second.stderr == pytest.approx(2 * first.stderr)


def test_product_space_points():
    def check(x, y):
        assert x.shape[-1] == 3 and y.shape[-1] == 2
        return np.ones(len(x))

    estimate = integrate_projective(check, SpaceSpec.product(2, 1), 1_000, 0)
    assert estimate.value == 1
    assert estimate.stderr == 0


def test_sample_fs_matches_integrator_points():
    space = SpaceSpec.projective(2)
    (points,) = sample_fs(space, 100, seed=9)
    assert points.shape == (100, 3)
    seen = []
    integrate_projective(lambda x: seen.append(x) or np.zeros(len(x)), space, 100, 9)
    assert np.array_equal(seen[0], points)


def test_paired_log_ratio_of_identical_functions_is_zero():
    def norm(x):
        return np.sum(np.abs(x) ** 2, axis=-1)

    estimate = paired_log_ratio(norm, norm, SpaceSpec.projective(2), 1_000, 0)
    assert estimate.value == 0
    assert estimate.method == "paired-mc"


def test_nonfinite_samples_are_counted():
    def mostly_fine(x):
        values = np.zeros(len(x))
        values[0] = np.nan
        return values

    with pytest.raises(NumericalFailure):
        integrate_projective(mostly_fine, SpaceSpec.projective(1), 100, 0)


def test_bad_budget():
    with pytest.raises(ValueError):
        integrate_projective(log_first, SpaceSpec.projective(1), 0, 0)


def test_estimate_helpers():
    estimate = Estimate(2.0, 0.3, 10, 1, "mc")
    assert estimate.scaled(-2).value == -4
    assert estimate.scaled(-2).stderr == pytest.approx(0.6)
    other = Estimate(0.0, 0.4, 10, 1, "mc")
    assert estimate.combined_stderr(other) == pytest.approx(0.5)
    exact = Estimate.exact(0.0, "unitary")
    assert exact.stderr == 0
    assert exact.to_dict()["method"] == "unitary"


@pytest.mark.parametrize(
    "text", ["x0*x2 - x1^2", "x0^3 + x1^3 + x2^3", "x0^4 + x1^4 + x2^4"]
)
def test_curve_area_is_the_degree(text):
    poly = parse_poly(text, PLANE)
    estimate = curve_integral(poly, 1.0, "base", 200, 0)
    assert estimate.value == pytest.approx(poly.multidegree()[0])
    assert estimate.stderr == pytest.approx(0, abs=1e-12)


def test_curve_area_after_moving(cubic):
    sigma = GroupElement.random(np.random.default_rng(2), 3)
    estimate = curve_integral(cubic, 1.0, bergman_potential(sigma), 20_000, 1)
    assert within(estimate, 3.0, floor=1e-3)


def test_curve_integral_rejects_unknown_measure(conic):
    with pytest.raises(ValueError):
        curve_integral(conic, 1.0, "lebesgue", 10, 0)


def test_curve_geometry_tangents(cubic):
    curve = PlaneCurve(cubic)
    sample = curve_geometry(curve, curve.sample_points(20, seed=3))
    overlap = np.sum(sample.points.conj() * sample.tangents, axis=-1)
    along = np.sum(sample.gradients * sample.tangents, axis=-1)
    assert np.allclose(np.linalg.norm(sample.tangents, axis=-1), 1)
    assert np.allclose(overlap, 0, atol=1e-10)
    assert np.allclose(along, 0, atol=1e-10)


def test_curve_second_order_vector(cubic):
    curve = PlaneCurve(cubic)
    sample = curve_geometry(curve, curve.sample_points(20, seed=4))
    a = 1e-3
    moved = sample.points + a * sample.tangents + a**2 * sample.second / 2
    assert np.abs(curve.value(moved)).max() < 1e-6


def test_integrate_curve_vector_columns(conic):
    def per_line(sample):
        ones = np.ones(sample.points.shape[:-1]).sum(axis=1)
        return np.stack([ones, 3 * ones], axis=-1)

    first, second = integrate_curve_vector(conic, per_line, 100, 0)
    assert (first.value, second.value) == (2, 6)
    assert first.volume == 2


def test_sample_dump(tmp_path):
    path = str(tmp_path / "samples.csv")
    with SampleDump(path) as dump:
        integrate_projective(log_first, SpaceSpec.projective(1), 10, 0, dump=dump)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["stream-id", "index", "value"]
    assert len(rows) == 11
    assert rows[1][0] == "mc:0"
    assert [row[1] for row in rows[1:]] == [str(i) for i in range(10)]


def first_weight(x):
    return np.abs(x[:, 0]) ** 2 / np.sum(np.abs(x) ** 2, axis=-1)


def test_doubling_the_budget_shrinks_the_stderr():
    space = SpaceSpec.projective(2)
    small = integrate_projective(first_weight, space, 50_000, 13)
    large = integrate_projective(first_weight, space, 100_000, 13)
    assert small.stderr / large.stderr == pytest.approx(np.sqrt(2), rel=0.2)


def test_integrals_are_unitarily_invariant():
    space = SpaceSpec.projective(2)
    rng = np.random.default_rng(14)
    unitary, _ = np.linalg.qr(
        rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    )
    plain = integrate_projective(first_weight, space, 50_000, 15)
    moved = integrate_projective(
        lambda x: first_weight(x @ unitary.T), space, 50_000, 16
    )
    assert within(moved, plain.value, k=0, floor=4 * moved.combined_stderr(plain))
    assert within(plain, 1 / 3)
