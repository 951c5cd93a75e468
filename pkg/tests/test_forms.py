from __future__ import annotations

import warnings
from fractions import Fraction

import numpy as np
import pytest

from ddlab.forms import (
    DegenerateInputError,
    DegreeDiscrepancyWarning,
    FormFileError,
    PlaneCurve,
    SingularCurveError,
    UnsupportedDimensionError,
    binary_discriminant,
    chow_form_hypersurface,
    conic_matrix,
    discriminant_form,
    dual_conic_adjugate,
    form_degree_data,
    generalized_cross,
    hyperplane_grading,
    read_curve,
    read_form,
    restrict_to_line,
    sylvester_resultant,
    write_form,
)
from ddlab.polycore import BlockGrading, gaussian, parse_poly, to_complex
from ddlab.projgeom import unit_rows

from .utils import curve_path, proportional

PLANE = BlockGrading.single(3)
CONICS = [
    "x0*x2 - x1^2",
    "x0^2 + 2*x1^2 + 3*x2^2",
    "x0^2 + x0*x1 - x1*x2 + 2*x2^2 + x0*x2",
]


def p(text, grading=PLANE):
    return parse_poly(text, grading)


def test_cross_product_of_coordinate_planes():
    cross = generalized_cross([[1, 0, 0], [0, 1, 0]])
    assert cross.coords == [gaussian(0), gaussian(0), gaussian(1)]
    assert not cross.degenerate


def test_cross_product_of_proportional_planes_is_degenerate():
    assert generalized_cross([[1, 2, 3], [2, 4, 6]]).degenerate
    assert generalized_cross([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]).degenerate


def test_cross_product_shape_is_checked():
    with pytest.raises(DegenerateInputError):
        generalized_cross([[1, 0], [0, 1]])


def test_cross_point_lies_on_both_planes():
    rng = np.random.default_rng(3)
    planes = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    point = np.array(generalized_cross(planes.tolist()).coords)
    assert np.allclose(planes @ point, 0, atol=1e-10)


def test_chow_form_degrees(conic, cubic):
    assert chow_form_hypersurface(conic).poly.multidegree() == (2, 2)
    assert chow_form_hypersurface(cubic).poly.multidegree() == (3, 3)


def test_chow_form_of_quadric_surface():
    grading = BlockGrading.single(4)
    quadric = parse_poly("x0^2 + x1^2 + x2^2 + x3^2", grading)
    form = chow_form_hypersurface(quadric)
    assert form.ambient_dim == 3
    assert form.poly.multidegree() == (2, 2, 2)


def test_chow_form_vanishes_on_incident_lines(conic):
    # Lines through the point (1, t, t^2) of the conic
    form = chow_form_hypersurface(conic)
    rng = np.random.default_rng(0)
    for t in range(-3, 4):
        point = [1, t, t * t]
        first, second = (
            generalized_cross([point, [int(v) for v in rng.integers(-5, 6, 3)]])
            for _ in range(2)
        )
        assert not form.evaluate(first.coords, second.coords)


def test_chow_form_nonzero_off_the_curve(conic):
    form = chow_form_hypersurface(conic)
    # Both planes contain (1, 0, 1), which is not on the conic
    assert form.evaluate([1, 0, -1], [0, 1, 0])


def test_restrict_to_line(conic):
    coefficients = restrict_to_line(conic, [1, 0, 0], [0, 0, 1]).coefficients
    assert coefficients == (gaussian(0), gaussian(1), gaussian(0))


def test_binary_discriminant_of_known_forms():
    assert binary_discriminant((1, 0, -1)) == gaussian(4)
    assert not binary_discriminant((1, 2, 1))
    assert binary_discriminant((1, 0, 0, 1)) == gaussian(-27)


def test_binary_discriminant_without_leading_term():
    # s*t has roots 0 and infinity
    assert binary_discriminant((0, 1, 0)) == gaussian(1)
    assert binary_discriminant((0, 0, 1, 0)) == gaussian(0)
    assert binary_discriminant((1.0, 0.0, -1.0)) == pytest.approx(4)


def test_sylvester_resultant_of_linear_forms():
    assert sylvester_resultant([1, -1], [1, 1]) == gaussian(2)
    assert not sylvester_resultant([1, -1], [2, -2])


@pytest.mark.parametrize("text", CONICS)
def test_conic_dual_matches_adjugate(text):
    conic = p(text)
    eliminated = discriminant_form(conic)
    adjugate = dual_conic_adjugate(conic_matrix(conic))
    assert eliminated.method == "eliminate"
    assert eliminated.degrees == (2,)
    assert eliminated.poly == adjugate.poly.normalized()


def test_standard_conic_dual(conic):
    grading = hyperplane_grading(1, 2)
    expected = parse_poly("4*x0*x2 - x1^2", grading).normalized()
    assert discriminant_form(conic).poly == expected


def test_conic_matrix(conic):
    expected = [[0, 0, Fraction(1, 2)], [0, -1, 0], [Fraction(1, 2), 0, 0]]
    assert conic_matrix(conic) == [[gaussian(v) for v in row] for row in expected]


def test_adjugate_rejects_bad_matrices():
    with pytest.raises(DegenerateInputError):
        dual_conic_adjugate([[1, 0, 0], [0, 1, 0], [0, 0, 0]])
    with pytest.raises(DegenerateInputError):
        dual_conic_adjugate([[1, 1, 0], [0, 1, 0], [0, 0, 1]])


def test_cubic_dual_degree(cubic):
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegreeDiscrepancyWarning)
        form = discriminant_form(cubic)
    assert form.degrees == (6,)
    assert not form.degree_discrepancy


def test_dual_vanishes_on_tangent_lines(cubic):
    form = discriminant_form(cubic)
    curve = PlaneCurve(cubic)
    points = curve.sample_points(10, seed=2)
    tangents = unit_rows(curve.gradient(points))
    values = form.poly.evaluate_batch(tangents)
    bound = sum(abs(to_complex(c)) for c in form.poly.terms.values())
    assert np.abs(values).max() <= 1e-8 * bound


def test_interpolation_agrees_with_elimination(cubic):
    exact = discriminant_form(cubic)
    fitted = discriminant_form(cubic, method="interpolate", seed=5)
    assert fitted.method == "interpolate"
    assert fitted.residual < 1e-8
    rng = np.random.default_rng(1)
    planes = rng.standard_normal((20, 3)) + 1j * rng.standard_normal((20, 3))
    assert proportional(
        fitted.poly.evaluate_batch(planes),
        exact.poly.evaluate_batch(planes),
        rtol=1e-6,
    )


def test_double_line_is_singular():
    with pytest.raises(SingularCurveError):
        discriminant_form(p("x0^2"))


def test_unsupported_dimension():
    quadric = parse_poly("x0^2 + x1^2 + x2^2 + x3^2 + x4^2", BlockGrading.single(5))
    with pytest.raises(UnsupportedDimensionError):
        discriminant_form(quadric, m=4)


def test_unknown_method(conic):
    with pytest.raises(ValueError):
        discriminant_form(conic, method="guess")


def test_degree_data(conic, cubic):
    data = form_degree_data(conic)
    assert data.deg_k == -2
    assert data.volume == 2
    assert data.mu == Fraction(-1, 2)
    assert data.chow_degrees == (2, 2)
    assert data.disc_degrees == (2,)
    cubic_data = form_degree_data(cubic)
    assert cubic_data.deg_k == 0
    assert cubic_data.mu == 0
    assert cubic_data.disc_degrees == (6,)
    assert cubic_data.nominal_disc_degrees == (3,)
    assert cubic_data.degree_discrepancy


def test_curve_points_lie_on_curve(cubic):
    curve = PlaneCurve(cubic)
    points = curve.sample_points(50, seed=0)
    assert points.shape == (50, 3)
    assert np.allclose(np.linalg.norm(points, axis=1), 1)
    assert np.abs(curve.value(points)).max() < 1e-10


def test_slice_returns_degree_many_points(cubic):
    curve = PlaneCurve(cubic)
    normals = curve.random_normals(np.random.default_rng(4), 16)
    points, valid = curve.slice(normals)
    assert points.shape == (16, 3, 3)
    assert valid.all()
    products = np.einsum("ndi,ni->nd", points, normals)
    assert np.abs(products).max() < 1e-10


def test_read_curve():
    poly = read_curve(curve_path("conic.txt"))
    assert poly == p("x0*x2 - x1^2")
    assert read_curve(curve_path("cubic.txt")).multidegree() == (3,)


def test_read_curve_rejects_future_versions(tmp_path):
    path = tmp_path / "curve.txt"
    path.write_text("# format_version: 2.0\nx0^2 + x1^2 + x2^2\n")
    with pytest.raises(FormFileError):
        read_curve(path)


def test_read_curve_rejects_inhomogeneous_forms(tmp_path):
    path = tmp_path / "curve.txt"
    path.write_text("x0^2 + x1\n")
    with pytest.raises(FormFileError):
        read_curve(path)


def test_form_file_round_trip(tmp_path, conic):
    form = chow_form_hypersurface(conic)
    path = tmp_path / "chow.txt"
    write_form(form, path)
    poly, header = read_form(path)
    assert poly == form.poly
    assert header["kind"] == "chow"
    assert header["degrees"] == "2,2"
