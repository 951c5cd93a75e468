from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np
from scipy import linalg
from sympy import QQ, QQ_I
from sympy.polys.rings import PolyElement, PolyRing

from ddlab.polycore import (
    BlockGrading,
    DegreeData,
    MultiPoly,
    NotDivisibleError,
    NotHomogeneousError,
    determinant,
    divide_exact,
    format_poly,
    from_ring,
    gaussian,
    infer_grading,
    monomials,
    parse_poly,
    squarefree_part,
    strip_monomial_content,
    to_complex,
)
from ddlab.projgeom import complex_gaussian, substream, unit_rows

FORMAT_VERSION = "1.0"


class DegenerateInputError(ValueError):
    pass


class UnsupportedDimensionError(ValueError):
    pass


class SingularCurveError(ValueError):
    pass


class InterpolationError(ArithmeticError):
    pass


class FormFileError(ValueError):
    pass


class DegreeDiscrepancyWarning(UserWarning):
    pass


class CrossProduct(NamedTuple):
    coords: list[Any]
    degenerate: bool


def _is_symbolic(values: Sequence[Any]) -> bool:
    return any(isinstance(v, MultiPoly) for v in values)


def _ring_rows(rows: Sequence[Sequence[Any]]) -> list[list[Any]]:
    """
    Promote scalars to constant polynomials when any entry is a polynomial.
    """
    flat = [v for row in rows for v in row]
    prototype = next((v for v in flat if isinstance(v, MultiPoly)), None)
    if prototype is None:
        return [list(row) for row in rows]
    return [
        [
            v
            if isinstance(v, MultiPoly)
            else MultiPoly.constant(prototype.grading, v, prototype.kind)
            for v in row
        ]
        for row in rows
    ]


def _is_float(values: Sequence[Any]) -> bool:
    return any(
        isinstance(v, (float, complex, np.floating, np.complexfloating))
        or (isinstance(v, MultiPoly) and v.kind == "float")
        for v in values
    )


def generalized_cross(vectors: Sequence[Sequence[Any]]) -> CrossProduct:
    """
    Signed maximal minors c_i = (-1)^i det(H with column i deleted) of m
    vectors of length m + 1: the common point of m hyperplanes.
    """
    rows = [list(v) for v in vectors]
    m = len(rows)
    if m == 0 or any(len(row) != m + 1 for row in rows):
        raise DegenerateInputError(f"Need m vectors of length m + 1, got {rows!r}")
    flat = [v for row in rows for v in row]
    if not _is_symbolic(flat) and _is_float(flat):
        matrix = np.array(rows, dtype=complex)
        coords = [
            (-1) ** i * complex(np.linalg.det(np.delete(matrix, i, axis=1)))
            for i in range(m + 1)
        ]
        scale = float(np.prod(np.linalg.norm(matrix, axis=1)))
        degenerate = float(np.linalg.norm(coords)) <= 1e-12 * scale
        return CrossProduct(coords, degenerate)
    rows = _ring_rows(rows)
    coords = []
    for i in range(m + 1):
        minor = determinant([row[:i] + row[i + 1 :] for row in rows])
        coords.append(minor if i % 2 == 0 else -minor)
    return CrossProduct(coords, not any(coords))


@dataclass(frozen=True)
class ChowForm:
    """
    C(H_1, ..., H_m) = F(H_1 x ... x H_m) on m hyperplane blocks.
    """

    poly: MultiPoly
    source_degree: int
    ambient_dim: int

    kind_name = "chow"

    def evaluate(self, *hyperplanes: Sequence[Any]) -> Any:
        return self.poly.evaluate(*hyperplanes)

    def transformed(self, sigma: Any) -> ChowForm:
        return ChowForm(
            _compose_blocks(self.poly, sigma), self.source_degree, self.ambient_dim
        )

    def header(self) -> dict[str, str]:
        return {
            "kind": self.kind_name,
            "source_degree": str(self.source_degree),
            "ambient_dim": str(self.ambient_dim),
        }


@dataclass(frozen=True)
class DiscriminantForm:
    """
    Form on m - 1 hyperplane blocks vanishing exactly on the tuples whose
    common intersection with X has fewer than d points.
    """

    poly: MultiPoly
    source_degree: int
    ambient_dim: int
    method: str
    residual: float = 0.0
    nominal_degrees: tuple[int, ...] = field(default=())

    kind_name = "dual"

    @property
    def degrees(self) -> tuple[int, ...]:
        return self.poly.multidegree()

    @property
    def degree_discrepancy(self) -> bool:
        return bool(self.nominal_degrees) and self.degrees != self.nominal_degrees

    def evaluate(self, *hyperplanes: Sequence[Any]) -> Any:
        return self.poly.evaluate(*hyperplanes)

    def transformed(self, sigma: Any) -> DiscriminantForm:
        return DiscriminantForm(
            _compose_blocks(self.poly, sigma),
            self.source_degree,
            self.ambient_dim,
            self.method,
            self.residual,
            self.nominal_degrees,
        )

    def header(self) -> dict[str, str]:
        return {
            "kind": self.kind_name,
            "source_degree": str(self.source_degree),
            "ambient_dim": str(self.ambient_dim),
            "method": self.method,
            "residual": repr(float(self.residual)),
        }


def _compose_blocks(poly: MultiPoly, sigma: Any) -> MultiPoly:
    matrix = np.asarray(getattr(sigma, "mat", sigma)).T
    result = poly
    for block in range(len(poly.grading.blocks)):
        result = result.compose_linear(block, matrix)
    return result


def _source_degree(poly: MultiPoly, m: int | None) -> tuple[int, int]:
    if len(poly.grading.blocks) != 1:
        raise DegenerateInputError("The defining form must have a single block")
    size = poly.grading.sizes[0]
    if m is None:
        m = size - 1
    if size != m + 1:
        raise DegenerateInputError(f"Form has {size} variables, expected {m + 1}")
    (degree,) = poly.multidegree()
    return degree, m


def hyperplane_grading(count: int, m: int) -> BlockGrading:
    return BlockGrading.repeated(count, m + 1, "h")


def chow_form_hypersurface(poly: MultiPoly, m: int | None = None) -> ChowForm:
    degree, m = _source_degree(poly, m)
    grading = hyperplane_grading(m, m)
    blocks = [MultiPoly.block_variables(grading, b) for b in range(m)]
    cross = generalized_cross(blocks)
    return ChowForm(poly.substitute(cross.coords), degree, m)


# Binary forms


@dataclass(frozen=True)
class BinaryForm:
    """
    sum_j coefficients[j] * s^(d-j) * t^j.
    """

    coefficients: tuple[Any, ...]

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def degenerate(self) -> bool:
        return not any(self.coefficients)

    def evaluate(self, s: Any, t: Any) -> Any:
        d = self.degree
        return sum(c * s ** (d - j) * t**j for j, c in enumerate(self.coefficients))


def restrict_to_line(poly: MultiPoly, p: Sequence[Any], q: Sequence[Any]) -> BinaryForm:
    """
    Coefficients of F(s p + t q). Entries of p and q may be polynomials on a
    common grading, giving polynomial coefficients.
    """
    degree, m = _source_degree(poly, None)
    p, q = list(p), list(q)
    if len(p) != m + 1 or len(q) != m + 1:
        raise DegenerateInputError("Line points have the wrong number of coordinates")
    entries = p + q
    if _is_symbolic(entries):
        prototype = next(v for v in entries if isinstance(v, MultiPoly))
        base = prototype.grading
        grading = base.extended(("st", 2))
        kind = "float" if _is_float(entries) or poly.kind == "float" else "exact"

        def lift(value: Any) -> MultiPoly:
            if isinstance(value, MultiPoly):
                lifted = value.embed(grading, 0)
            else:
                lifted = MultiPoly.constant(grading, value, kind)
            return lifted.to_float() if kind == "float" else lifted

        s, t = MultiPoly.block_variables(grading, "st", kind)
        line = [lift(a) * s + lift(b) * t for a, b in zip(p, q)]
        restricted = poly.substitute(line)
        start = grading.offsets[-1]
        zero = MultiPoly.zero(base, restricted.kind)
        groups: dict[int, dict[tuple[int, ...], Any]] = {}
        for exponent, coefficient in restricted.terms.items():
            groups.setdefault(exponent[start + 1], {})[exponent[:start]] = coefficient
        coefficients = tuple(
            MultiPoly(base, groups[j], restricted.kind) if j in groups else zero
            for j in range(degree + 1)
        )
        return BinaryForm(coefficients)
    if not _is_float(entries):
        minors = [p[i] * q[j] - p[j] * q[i] for i in range(m + 1) for j in range(i)]
        if not any(minors):
            raise DegenerateInputError("Line points are proportional")
    else:
        pair = np.array([p, q], dtype=complex)
        singular = np.linalg.svd(pair, compute_uv=False)
        if singular[-1] <= 1e-12 * singular[0]:
            raise DegenerateInputError("Line points are proportional")
    grading = BlockGrading.single(2, "st")
    kind = "float" if _is_float(entries) else poly.kind
    s, t = MultiPoly.block_variables(grading, 0, kind)
    line = [s.scale(a) + t.scale(b) for a, b in zip(p, q)]
    restricted = poly.substitute(line)
    return BinaryForm(
        tuple(restricted.coefficient((degree - j, j)) for j in range(degree + 1))
    )


def sylvester_resultant(f: Sequence[Any], g: Sequence[Any]) -> Any:
    """
    Resultant of two binary forms given by coefficients of s^(deg-j) t^j,
    taken with their formal degrees.
    """
    m, n = len(f) - 1, len(g) - 1
    if m < 0 or n < 0:
        raise ValueError("Empty form")
    zero: Any = 0
    rows: list[list[Any]] = []
    for i in range(n):
        rows.append([zero] * i + list(f) + [zero] * (n - 1 - i))
    for i in range(m):
        rows.append([zero] * i + list(g) + [zero] * (m - 1 - i))
    return determinant(_ring_rows(rows))


@lru_cache(maxsize=None)
def _pencil_ring(nvars: int) -> PolyRing:
    return PolyRing(["s"] + [f"v{i}" for i in range(nvars)], QQ_I)


def _discriminant_in_s(coefficients: Sequence[Any]) -> Any:
    # F(s, 1) as a polynomial in s over the coefficient ring
    d = len(coefficients) - 1
    prototype = next((c for c in coefficients if isinstance(c, MultiPoly)), None)
    nvars = prototype.grading.nvars if prototype is not None else 0
    terms: dict[tuple[int, ...], Any] = {}
    for j, c in enumerate(coefficients):
        if isinstance(c, MultiPoly):
            for exponent, value in c.terms.items():
                terms[(d - j,) + exponent] = value
        elif c:
            terms[(d - j,) + (0,) * nvars] = gaussian(c)
    value = _pencil_ring(nvars).from_dict(terms).discriminant()
    if prototype is None:
        return gaussian(value)
    if isinstance(value, PolyElement):
        return from_ring(value, prototype.grading)
    return MultiPoly.constant(prototype.grading, value)


def binary_discriminant(form: BinaryForm | Sequence[Any]) -> Any:
    """
    (-1)^(d(d-1)/2) Res(dF/ds, dF/dt) / d^(d-2): b^2 - 4ac for (a, b, c) and -27
    for s^3 + t^3.
    """
    coefficients = list(form.coefficients if isinstance(form, BinaryForm) else form)
    d = len(coefficients) - 1
    if d < 2:
        raise ValueError(f"Discriminant needs degree at least 2, got {d}")
    if coefficients[0] and not _is_float(coefficients):
        return _discriminant_in_s(coefficients)
    by_s = [(d - j) * coefficients[j] for j in range(d)]
    by_t = [(j + 1) * coefficients[j + 1] for j in range(d)]
    resultant = sylvester_resultant(by_s, by_t)
    sign = -1 if (d * (d - 1) // 2) % 2 else 1
    if isinstance(resultant, complex):
        return resultant * sign / d ** (d - 2)
    factor = QQ_I(QQ(sign, d ** (d - 2)))
    if isinstance(resultant, MultiPoly):
        return resultant.scale(factor)
    return resultant * factor


# Plane curves


class PlaneCurve:
    """
    Numerical view of a plane curve {F = 0}: batched values, gradients and
    Hessians, and intersection with lines.
    """

    SEPARATION = 1e-6
    MIN_GRADIENT = 1e-10
    NEWTON_STEPS = 2

    def __init__(self, poly: MultiPoly) -> None:
        degree, m = _source_degree(poly, None)
        if m != 2:
            raise UnsupportedDimensionError("Plane curves live in P^2")
        if degree < 1:
            raise DegenerateInputError("Curve degree must be positive")
        self.poly = poly
        self.degree = degree
        self._float = poly.to_float()
        self._gradient = [self._float.diff(i) for i in range(3)]
        self._hessian = [[g.diff(j) for j in range(3)] for g in self._gradient]
        nodes = np.exp(2j * np.pi * np.arange(degree + 1) / (degree + 1))
        self._nodes = nodes

    def value(self, points: np.ndarray) -> np.ndarray:
        return self._float.evaluate_batch(points)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return np.stack([g.evaluate_batch(points) for g in self._gradient], axis=-1)

    def hessian(self, points: np.ndarray) -> np.ndarray:
        rows = [
            np.stack([h.evaluate_batch(points) for h in row], axis=-1)
            for row in self._hessian
        ]
        return np.stack(rows, axis=-2)

    @staticmethod
    def line_basis(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Orthonormal p, q spanning each line {x : u . x = 0}.
        """
        u = np.asarray(normals, dtype=complex)
        smallest = np.argmin(np.abs(u), axis=-1)
        helper = np.eye(3)[smallest]
        p = unit_rows(np.cross(u, helper))
        q = unit_rows(np.cross(u, p.conj()))
        return p, q

    def slice(self, normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Intersection points (n, d, 3), unit norm, and a mask of lines that
        meet the curve transversally in d well separated points.
        """
        d = self.degree
        p, q = self.line_basis(normals)
        n = p.shape[0]
        probes = self._nodes[None, :, None] * p[:, None, :] + q[:, None, :]
        values = self.value(probes)
        coefficients = np.fft.fft(values, axis=1) / (d + 1)
        lead = coefficients[:, d]
        scale = np.abs(coefficients).max(axis=1)
        valid = np.abs(lead) > 1e-10 * scale
        safe_lead = np.where(valid, lead, 1.0)
        companion = np.zeros((n, d, d), dtype=complex)
        if d > 1:
            companion[:, 1:, :-1] = np.eye(d - 1)
        companion[:, :, -1] = -coefficients[:, :d] / safe_lead[:, None]
        roots = np.linalg.eigvals(companion)
        for _ in range(self.NEWTON_STEPS):
            points = roots[..., None] * p[:, None, :] + q[:, None, :]
            f = self.value(points)
            slope = np.sum(self.gradient(points) * p[:, None, :], axis=-1)
            step = np.divide(f, slope, out=np.zeros_like(f), where=slope != 0)
            roots = roots - step
        points = unit_rows(roots[..., None] * p[:, None, :] + q[:, None, :])
        valid &= np.all(np.isfinite(points), axis=(1, 2))
        points = np.where(np.isfinite(points), points, 0.0)
        if d > 1:
            overlap = np.abs(np.einsum("nai,nbi->nab", points.conj(), points))
            distance = np.sqrt(np.clip(1 - overlap**2, 0.0, None))
            distance[:, np.arange(d), np.arange(d)] = np.inf
            valid &= distance.min(axis=(1, 2)) >= self.SEPARATION
        gradient_norm = np.linalg.norm(self.gradient(points), axis=-1)
        valid &= gradient_norm.min(axis=1) >= self.MIN_GRADIENT
        return points, valid

    def random_normals(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return unit_rows(complex_gaussian(rng, (count, 3)))

    def sample_points(self, count: int, seed: int, stream: int = 0) -> np.ndarray:
        """
        count points on the curve from independent random lines.
        """
        collected: list[np.ndarray] = []
        total = 0
        batch = 0
        per_batch = max(8, count // self.degree + 1)
        while total < count:
            rng = substream(seed, stream, batch)
            points, valid = self.slice(self.random_normals(rng, per_batch))
            chosen = points[valid].reshape(-1, 3)
            collected.append(chosen)
            total += len(chosen)
            batch += 1
            if batch > 1000:
                raise InterpolationError("Could not sample enough curve points")
        return np.concatenate(collected)[:count]


def check_smooth(poly: MultiPoly, seed: int = 0, lines: int = 64) -> None:
    """
    Probabilistic smoothness test: curve points on random lines must have a
    non-vanishing gradient.
    """
    curve = PlaneCurve(poly)
    rng = substream(seed, 99)
    points, valid = curve.slice(curve.random_normals(rng, lines))
    if not np.any(valid):
        raise SingularCurveError(f"No transversal slices of {format_poly(poly)}")
    norms = np.linalg.norm(curve.gradient(points[valid].reshape(-1, 3)), axis=-1)
    if norms.min() < PlaneCurve.MIN_GRADIENT:
        raise SingularCurveError(f"Curve {format_poly(poly)} looks singular")


# Discriminant forms


def _nominal_degrees(degree: int, m: int) -> tuple[int, ...]:
    return (degree,) * (m - 1)


def discriminant_form(
    poly: MultiPoly,
    m: int = 2,
    method: str = "eliminate",
    *,
    seed: int = 0,
    tolerance: float = 1e-8,
) -> DiscriminantForm:
    degree, m = _source_degree(poly, m)
    if m not in (2, 3):
        raise UnsupportedDimensionError(f"Discriminant forms need m = 2 or 3, got {m}")
    if degree < 2:
        raise DegenerateInputError("Discriminant forms need degree at least 2")
    if m == 2:
        check_smooth(poly, seed=seed)
    if method == "eliminate":
        form = _eliminate(poly, degree, m)
    elif method == "interpolate":
        if m != 2:
            raise UnsupportedDimensionError("Interpolation is implemented for curves")
        form = _interpolate(poly, degree, seed, tolerance)
    else:
        raise ValueError(f"Unknown method {method!r}")
    expected = (degree * (degree - 1),) * (m - 1)
    if form.degrees != expected:
        warnings.warn(
            f"Discriminant degree {form.degrees} differs from expected {expected}",
            DegreeDiscrepancyWarning,
            stacklevel=2,
        )
    return form


def _eliminate(poly: MultiPoly, degree: int, m: int) -> DiscriminantForm:
    exact = poly.to_exact()
    grading = hyperplane_grading(m - 1, m)
    planes = [MultiPoly.block_variables(grading, b) for b in range(m - 1)]
    basis = [[1 if i == k else 0 for i in range(m + 1)] for k in range(2)]
    p = generalized_cross(planes + [basis[0]]).coords
    q = generalized_cross(planes + [basis[1]]).coords
    spread = determinant(_ring_rows(planes + basis))
    discriminant = binary_discriminant(restrict_to_line(exact, p, q))
    if not discriminant:
        raise DegenerateInputError("Discriminant vanishes identically; is F reduced?")
    while isinstance(spread, MultiPoly) and not spread.is_constant():
        try:
            discriminant = divide_exact(discriminant, spread)
        except NotDivisibleError:
            break
    discriminant = strip_monomial_content(discriminant)
    target = (degree * (degree - 1),) * (m - 1)
    if discriminant.multidegree() != target:
        discriminant = squarefree_part(discriminant)
    return DiscriminantForm(
        discriminant.normalized(),
        degree,
        m,
        "eliminate",
        0.0,
        _nominal_degrees(degree, m),
    )


def _interpolate(
    poly: MultiPoly, degree: int, seed: int, tolerance: float
) -> DiscriminantForm:
    curve = PlaneCurve(poly)
    target = degree * (degree - 1)
    basis = monomials(3, target)
    count = 2 * len(basis)
    points = curve.sample_points(count, seed)
    tangents = unit_rows(curve.gradient(points))
    exponents = np.array(basis)
    matrix = np.prod(tangents[:, None, :] ** exponents[None, :, :], axis=-1)
    _, singular, vh = linalg.svd(matrix)
    cutoff = 1e-9 * singular[0]
    nullity = int(np.sum(singular < cutoff)) + max(0, len(basis) - len(singular))
    if nullity != 1:
        raise InterpolationError(
            f"Expected a one-dimensional null space, found dimension {nullity}"
        )
    vector = vh[-1].conj()
    residual = float(singular[-1] / singular[0])
    if residual > tolerance:
        raise InterpolationError(f"Interpolation residual {residual:.3g} too large")
    grading = hyperplane_grading(1, 2)
    form = MultiPoly(grading, dict(zip(basis, vector)), "float")
    return DiscriminantForm(
        form.normalized().chopped(1e-12),
        degree,
        2,
        "interpolate",
        residual,
        _nominal_degrees(degree, 2),
    )


def _same(a: Any, b: Any) -> bool:
    if _is_float([a, b]):
        return to_complex(a) == to_complex(b)
    return gaussian(a) == gaussian(b)


def dual_conic_adjugate(matrix: Sequence[Sequence[Any]]) -> DiscriminantForm:
    """
    Dual of the conic x^T A x: the form u^T adj(A) u.
    """
    rows = [list(row) for row in matrix]
    if len(rows) != 3 or any(len(row) != 3 for row in rows):
        raise DegenerateInputError("Conic matrices are 3x3")
    for i in range(3):
        for j in range(i):
            if not _same(rows[i][j], rows[j][i]):
                raise DegenerateInputError("Conic matrix must be symmetric")
    if not determinant(rows):
        raise DegenerateInputError("Conic matrix is singular")
    adjugate = [
        [
            (-1) ** (i + j)
            * determinant(
                [
                    [rows[r][c] for c in range(3) if c != i]
                    for r in range(3)
                    if r != j
                ]
            )
            for j in range(3)
        ]
        for i in range(3)
    ]
    flat = [v for row in rows for v in row]
    kind = "float" if _is_float(flat) else "exact"
    grading = hyperplane_grading(1, 2)
    u = MultiPoly.block_variables(grading, 0, kind)
    form = MultiPoly.zero(grading, kind)
    for i in range(3):
        for j in range(3):
            if adjugate[i][j]:
                form = form + (u[i] * u[j]).scale(adjugate[i][j])
    return DiscriminantForm(form, 2, 2, "adjugate", 0.0, (2,))


def conic_matrix(poly: MultiPoly) -> list[list[Any]]:
    """
    Symmetric matrix A with F(x) = x^T A x.
    """
    degree, m = _source_degree(poly, 2)
    if degree != 2:
        raise DegenerateInputError("Not a conic")
    exact = poly.kind == "exact"
    half = gaussian(Fraction(1, 2)) if exact else 0.5
    zero = gaussian(0) if exact else 0j
    matrix: list[list[Any]] = [[zero] * 3 for _ in range(3)]
    for exponent, coefficient in poly.terms.items():
        indices = [i for i, e in enumerate(exponent) for _ in range(e)]
        i, j = indices
        if i == j:
            matrix[i][i] = coefficient
        else:
            matrix[i][j] = matrix[j][i] = coefficient * half
    return matrix


def form_degree_data(poly: MultiPoly, m: int = 2) -> DegreeData:
    degree, m = _source_degree(poly, m)
    if m not in (2, 3):
        raise UnsupportedDimensionError(f"Degree data for m = {m} is not supported")
    n = m - 1
    deg_k = (degree - m - 1) * degree
    volume = Fraction(degree)
    return DegreeData(
        ambient_dim=m,
        degree=degree,
        deg_k=deg_k,
        volume=volume,
        mu=Fraction(n, n + 1) * Fraction(deg_k) / volume,
        chow_degrees=(degree,) * m,
        disc_degrees=(degree * (degree - 1),) * n,
        nominal_disc_degrees=_nominal_degrees(degree, m),
    )


# Files


def _read_sections(path: str | Path) -> tuple[dict[str, str], str]:
    header: dict[str, str] = {}
    body: list[str] = []
    for line in Path(path).read_text().splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
        elif stripped:
            body.append(stripped)
    if not body:
        raise FormFileError(f"{path} contains no polynomial")
    version = header.get("format_version", FORMAT_VERSION)
    major = version.split(".")[0]
    if not major.isdigit() or int(major) > int(FORMAT_VERSION.split(".")[0]):
        raise FormFileError(f"Unsupported format_version {version!r} in {path}")
    return header, " ".join(body)


def read_curve(path: str | Path, m: int | None = None) -> MultiPoly:
    """
    Read a defining form: optional '# key: value' header lines then the
    polynomial text.
    """
    header, text = _read_sections(path)
    if "grading" in header:
        grading = BlockGrading.parse(header["grading"])
    elif m is not None:
        grading = BlockGrading.single(m + 1)
    else:
        grading = infer_grading(text)
    kind = header.get("coefficients", "exact")
    if kind not in ("exact", "float"):
        raise FormFileError(f"Unknown coefficient kind {kind!r}")
    poly = parse_poly(text, grading, kind)  # type: ignore[arg-type]
    try:
        poly.multidegree()
    except NotHomogeneousError as exc:
        raise FormFileError(f"{path}: {exc}") from exc
    return poly


def read_form(path: str | Path) -> tuple[MultiPoly, dict[str, str]]:
    header, text = _read_sections(path)
    if "grading" not in header:
        raise FormFileError(f"{path} has no grading header")
    grading = BlockGrading.parse(header["grading"])
    kind = header.get("coefficients", "exact")
    return parse_poly(text, grading, kind), header  # type: ignore[arg-type]


def format_form(form: ChowForm | DiscriminantForm) -> str:
    poly = form.poly
    header = {
        "format_version": FORMAT_VERSION,
        **form.header(),
        "grading": str(poly.grading),
        "coefficients": poly.kind,
        "degrees": ",".join(str(d) for d in poly.multidegree()),
    }
    lines = [f"# {key}: {value}" for key, value in header.items()]
    lines.append(format_poly(poly))
    return "\n".join(lines) + "\n"


def write_form(form: ChowForm | DiscriminantForm, path: str | Path) -> None:
    Path(path).write_text(format_form(form))
