from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ddlab.polycore import (
    BlockGrading,
    MultiPoly,
    NotDivisibleError,
    NotHomogeneousError,
    PolynomialSyntaxError,
    determinant,
    divide_exact,
    format_poly,
    gaussian,
    infer_grading,
    monomials,
    parse_poly,
    poly_gcd,
    squarefree_part,
    strip_monomial_content,
    to_complex,
)

PAIR = BlockGrading.single(2)
TRIPLE = BlockGrading.single(3)

polys = st.dictionaries(
    st.tuples(st.integers(0, 2), st.integers(0, 2)),
    st.integers(-5, 5),
    max_size=4,
).map(lambda terms: MultiPoly(PAIR, terms))
binary_cubics = st.dictionaries(
    st.integers(0, 3).map(lambda i: (i, 3 - i)),
    st.integers(-5, 5),
    min_size=1,
    max_size=4,
).map(lambda terms: MultiPoly(PAIR, terms))
matrices = st.lists(
    st.lists(st.integers(-2, 2), min_size=2, max_size=2), min_size=2, max_size=2
)


def p(text, grading=TRIPLE):
    return parse_poly(text, grading)


@given(polys, polys)
def test_addition_commutes(a, b):
    assert a + b == b + a


@given(polys, polys, polys)
@settings(max_examples=1000)
def test_multiplication_distributes(a, b, c):
    assert a * (b + c) == a * b + a * c


@given(polys, polys, polys)
def test_multiplication_associates(a, b, c):
    assert (a * b) * c == a * (b * c)


@given(polys)
def test_subtracting_self_gives_zero(a):
    assert not (a - a)
    assert a - a == 0


@given(polys, polys)
def test_exact_division_recovers_factor(a, b):
    if not b:
        return
    assert divide_exact(a * b, b) == a


def test_gaussian_coercion():
    assert gaussian(3) == gaussian(3.0)
    assert gaussian(0.5) == gaussian(Fraction(1, 2))
    assert gaussian(1 + 2j) * gaussian(3 - 1j) == gaussian(5 + 5j)
    assert to_complex(gaussian(Fraction(1, 4) - 2j)) == 0.25 - 2j
    with pytest.raises(TypeError):
        gaussian("x")


def test_gaussian_zero_division():
    with pytest.raises(ZeroDivisionError):
        gaussian(1) / gaussian(0)


def test_grading_round_trips_through_text():
    grading = BlockGrading.repeated(2, 4)
    assert str(grading) == "h1:4,h2:4"
    assert BlockGrading.parse(str(grading)) == grading
    assert grading.nvars == 8
    assert grading.locate(5) == (1, 1)


def test_grading_rejects_duplicate_names():
    with pytest.raises(ValueError):
        BlockGrading((("x", 2), ("x", 2)))


def test_parse_expands_powers():
    assert p("(x0 - x1)^2") == p("x0^2 - 2*x0*x1 + x1^2")


def test_parse_reads_imaginary_unit():
    poly = p("i*x0 + x1/2")
    assert poly.coefficient((1, 0, 0)) == gaussian(1j)
    assert poly.coefficient((0, 1, 0)) == gaussian(Fraction(1, 2))


def test_format_uses_graded_lex_order():
    poly = p("x0*x2*4 - x1^2")
    assert format_poly(poly) == "4*x0_0*x0_2 - 1*x0_1^2"
    assert parse_poly(format_poly(poly), TRIPLE) == poly


@pytest.mark.parametrize("text", ["x0 +", "x0^-1", "x3", "2**x0", "(x0"])
def test_parse_rejects_malformed_text(text):
    with pytest.raises(PolynomialSyntaxError):
        p(text)


def test_parse_needs_block_index_for_several_blocks():
    with pytest.raises(PolynomialSyntaxError):
        parse_poly("x0", BlockGrading.repeated(2, 3))


def test_parse_with_block_indices():
    grading = BlockGrading.repeated(2, 3)
    poly = parse_poly("x0_0*x1_2 - x0_2*x1_0", grading)
    assert poly.multidegree() == (1, 1)


def test_infer_grading():
    assert infer_grading("x0 + x1").nvars == 3
    assert infer_grading("x0*x4").nvars == 5


def test_multidegree_requires_homogeneity():
    with pytest.raises(NotHomogeneousError):
        p("x0 + x1^2").multidegree()
    with pytest.raises(NotHomogeneousError):
        MultiPoly.zero(TRIPLE).multidegree()


def test_constant_value():
    poly = MultiPoly.constant(TRIPLE, 3)
    assert poly.is_constant()
    assert poly.constant_value == gaussian(3)
    with pytest.raises(ValueError):
        p("x0").constant_value


def test_derivative():
    assert p("x0^3*x1").diff(0) == p("3*x0^2*x1")
    assert not p("x1").diff(0)


def test_compose_linear_matches_evaluation():
    poly = p("x0^2 + 3*x1*x2")
    matrix = [[1, 2, 0], [0, 1, 1], [1, 0, 1]]
    composed = poly.compose_linear(0, matrix)
    x = [1, -2, 3]
    mx = [sum(matrix[i][j] * x[j] for j in range(3)) for i in range(3)]
    assert composed.evaluate(x) == poly.evaluate(mx)


@given(polys, matrices, matrices)
def test_compose_linear_twice_is_compose_with_product(a, first, second):
    product = (np.array(first) @ np.array(second)).tolist()
    twice = a.compose_linear(0, first).compose_linear(0, second)
    assert twice == a.compose_linear(0, product)


@given(binary_cubics, matrices)
def test_compose_linear_keeps_multidegree(a, matrix):
    (x, y), (z, w) = matrix
    assume(a and x * w - y * z != 0)
    assert a.compose_linear(0, matrix).multidegree() == a.multidegree() == (3,)


def test_exact_evaluation():
    assert p("x0^2 - x1*x2").evaluate([2, 1, 3]) == gaussian(1)
    i = gaussian(1j)
    assert p("x0*x1").evaluate([i, i, 0]) == gaussian(-1)


def test_batch_evaluation_matches_scalar():
    poly = p("x0^3 - 2*i*x0*x1*x2 + x2^3/3")
    rng = np.random.default_rng(0)
    points = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    batch = poly.evaluate_batch(points)
    for point, value in zip(points, batch):
        assert abs(poly.evaluate(list(point)) - value) < 1e-12


def test_normalized_exact_leads_with_one():
    poly = p("4*x0*x2 - x1^2").normalized()
    assert poly.sorted_terms()[0][1] == gaussian(1)
    assert poly == p("x0*x2 - x1^2/4")


def test_normalized_float_is_scale_free():
    a = p("2*x0*x1 + x2^2").to_float()
    b = a.scale(3 - 4j)
    left, right = a.normalized(), b.normalized()
    assert set(left.terms) == set(right.terms)
    for exponent, coefficient in left.terms.items():
        assert abs(coefficient - right.coefficient(exponent)) < 1e-12


def test_divide_exact_rejects_remainder():
    with pytest.raises(NotDivisibleError):
        divide_exact(p("x0^2 + x1^2"), p("x0 - x1"))


def test_gcd_of_shared_factor():
    shared = p("x0 - x1")
    gcd = poly_gcd(shared * p("x0 + x1"), shared * p("x2"))
    assert gcd.normalized() == shared.normalized()


def test_gcd_of_coprime_is_one():
    assert poly_gcd(p("x0 + x1"), p("x0 - x2")) == 1


def test_gcd_over_gaussian_rationals():
    shared = p("x0 - i*x1")
    assert poly_gcd(shared * p("x0 + x2"), shared * p("x1 - 2*x2")) == shared


def test_squarefree_part_removes_repeats():
    poly = p("(x0 - x1)^2*(x0 + x2)")
    expected = p("(x0 - x1)*(x0 + x2)")
    assert squarefree_part(poly).normalized() == expected.normalized()


def test_strip_monomial_content():
    assert strip_monomial_content(p("x0^2*x1 + x0*x1^2")) == p("x0 + x1")


def test_determinant_of_numbers():
    assert determinant([[1, 2], [3, 4]]) == gaussian(-2)
    assert determinant([[0, 1, 0], [1, 0, 0], [0, 0, 1]]) == gaussian(-1)
    assert not determinant([[1, 2], [2, 4]])


def test_determinant_of_polynomials():
    x0, x1, x2 = MultiPoly.block_variables(TRIPLE, 0)
    assert determinant([[x0, x1], [x1, x2]]) == p("x0*x2 - x1^2")


def test_monomials_are_graded_lex():
    basis = monomials(3, 2)
    assert len(basis) == 6
    assert basis[0] == (2, 0, 0)
    assert basis[-1] == (0, 0, 2)
    assert len(monomials(3, 6)) == 28


def test_determinant_of_gaussian_entries():
    i = gaussian(1j)
    assert determinant([[i, 1], [1, i]]) == gaussian(-2)
    assert determinant([[1j, 1], [1, 1j]]) == pytest.approx(-2)
    assert determinant([]) == gaussian(1)
