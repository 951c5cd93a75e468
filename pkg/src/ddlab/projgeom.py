from __future__ import annotations

import numbers
from typing import Any, Callable, Sequence

import numpy as np
from scipy import linalg

from ddlab.polycore import MultiPoly

TRACE_TOLERANCE = 1e-12


class NotTracelessError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


def substream(seed: int, *key: int) -> np.random.Generator:
    """
    Counter-based generator for one (seed, key) pair. Streams for different
    keys are independent, so chunks can be drawn in any order.
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def unit_rows(array: np.ndarray) -> np.ndarray:
    return array / np.linalg.norm(array, axis=-1, keepdims=True)


def canonical(coords: Any, tolerance: float = 1e-12) -> np.ndarray:
    """
    Unit-norm representative whose first non-negligible entry is real and
    positive.
    """
    vector = np.asarray(coords, dtype=complex).ravel()
    norm = np.linalg.norm(vector)
    if not norm:
        raise ValueError("Projective coordinates must not all vanish")
    vector = vector / norm
    peak = np.abs(vector).max()
    lead = vector[np.nonzero(np.abs(vector) > tolerance * peak)[0][0]]
    return vector * (abs(lead) / lead)


class _ProjectiveVector:
    __slots__ = ("coords",)

    coords: np.ndarray

    def __init__(self, coords: Any) -> None:
        self.coords = canonical(coords)

    @property
    def dim(self) -> int:
        return len(self.coords) - 1

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        assert isinstance(other, _ProjectiveVector)
        return self.coords.shape == other.coords.shape and bool(
            np.allclose(self.coords, other.coords, atol=1e-12)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.coords.tolist()!r})"


class ProjPoint(_ProjectiveVector):
    pass


class Hyperplane(_ProjectiveVector):
    def pair(self, point: ProjPoint | Any) -> complex:
        coords = point.coords if isinstance(point, ProjPoint) else np.asarray(point)
        return complex(np.dot(self.coords, coords))


def _entry(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"Complex entries are [re, im] pairs, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", "").replace("i", "j"))
    if isinstance(value, numbers.Complex):
        return complex(value)
    raise ValueError(f"Unreadable matrix entry {value!r}")


def parse_matrix(rows: Sequence[Sequence[Any]]) -> np.ndarray:
    """
    Row-major complex matrix from numbers, [re, im] pairs or strings.
    """
    matrix = np.array([[_entry(v) for v in row] for row in rows], dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"Matrix must be square, got shape {matrix.shape}")
    return matrix


class GroupElement:
    """
    Element of SL(N+1) acting on P^N.
    """

    DET_TOLERANCE = 1e-12

    __slots__ = ("mat", "det_normalized")

    def __init__(self, mat: Any, normalize: bool = True) -> None:
        matrix = np.array(mat, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(
                f"Matrix must be square, got shape {matrix.shape}"
            )
        if normalize:
            det = np.linalg.det(matrix)
            if abs(det) < 1e-300:
                raise ValueError("Matrix is singular")
            matrix = matrix / complex(det) ** (1.0 / matrix.shape[0])
        self.mat = matrix
        self.mat.setflags(write=False)
        self.det_normalized = normalize

    @classmethod
    def identity(cls, size: int) -> GroupElement:
        return cls(np.eye(size))

    @classmethod
    def from_entries(cls, rows: Sequence[Sequence[Any]]) -> GroupElement:
        return cls(parse_matrix(rows))

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        size: int,
        radius: float = 0.5,
        max_condition: float = 50.0,
    ) -> GroupElement:
        """
        I + Z with Z uniform in the disc of the given radius entrywise,
        redrawn until well conditioned.
        """
        while True:
            modulus = radius * np.sqrt(rng.random((size, size)))
            angle = 2 * np.pi * rng.random((size, size))
            matrix = np.eye(size) + modulus * np.exp(1j * angle)
            if np.linalg.cond(matrix) <= max_condition:
                return cls(matrix)

    @property
    def size(self) -> int:
        return int(self.mat.shape[0])

    def det(self) -> complex:
        return complex(np.linalg.det(self.mat))

    def inverse(self) -> GroupElement:
        return GroupElement(np.linalg.inv(self.mat), normalize=False)

    def transpose(self) -> GroupElement:
        return GroupElement(self.mat.T, normalize=False)

    def inverse_transpose(self) -> GroupElement:
        return GroupElement(np.linalg.inv(self.mat).T, normalize=False)

    def __matmul__(self, other: GroupElement) -> GroupElement:
        return GroupElement(self.mat @ other.mat, normalize=False)

    def is_unitary(self, tolerance: float = 1e-12) -> bool:
        product = self.mat.conj().T @ self.mat
        return bool(np.abs(product - np.eye(self.size)).max() <= tolerance)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=complex) @ self.mat.T

    def __repr__(self) -> str:
        return f"GroupElement({self.mat.tolist()!r})"


def one_param_subgroup(generator: Any, t: float) -> GroupElement:
    """
    exp(tA) for traceless A.
    """
    matrix = np.array(generator, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError("Generator must be square")
    if abs(np.trace(matrix)) > TRACE_TOLERANCE:
        raise NotTracelessError(f"Generator trace {np.trace(matrix)} is not zero")
    return GroupElement(linalg.expm(t * matrix))


def bergman_velocity(generator: Any, points: np.ndarray) -> np.ndarray:
    """
    d/dt log(|exp(tA)x|^2/|x|^2) at t = 0.
    """
    matrix = np.asarray(generator, dtype=complex)
    x = np.asarray(points, dtype=complex)
    moved = x @ matrix.T
    numerator = 2 * np.real(np.sum(x.conj() * moved, axis=-1))
    return numerator / np.sum(np.abs(x) ** 2, axis=-1)


# Charts


def chart_coordinates(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Chart index c = argmax |z_c| for each point and affine coordinates w
    with z proportional to e_c + (w inserted at the other positions).
    """
    z = np.asarray(points, dtype=complex)
    charts = np.argmax(np.abs(z), axis=-1)
    size = z.shape[-1]
    w = np.empty(z.shape[:-1] + (size - 1,), dtype=complex)
    for c in range(size):
        mask = charts == c
        if np.any(mask):
            others = [i for i in range(size) if i != c]
            w[mask] = z[mask][:, others] / z[mask][:, c : c + 1]
    return charts, w


def chart_lift(chart: int, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return np.insert(w, chart, 1.0, axis=-1)


def chart_tangent(
    chart: np.ndarray, points: np.ndarray, tangents: np.ndarray
) -> np.ndarray:
    """
    Chart components of homogeneous tangent vectors v at z: the derivative
    of z_others/z_c along v.
    """
    z = np.asarray(points, dtype=complex)
    v = np.asarray(tangents, dtype=complex)
    size = z.shape[-1]
    tau = np.empty(z.shape[:-1] + (size - 1,), dtype=complex)
    for c in range(size):
        mask = chart == c
        if np.any(mask):
            others = [i for i in range(size) if i != c]
            zc = z[mask][:, c : c + 1]
            vc = v[mask][:, c : c + 1]
            tau[mask] = (v[mask][:, others] - (vc / zc) * z[mask][:, others]) / zc
    return tau


def _log_norm_kernel(matrix: np.ndarray, chart: int, w: np.ndarray) -> np.ndarray:
    """
    K = B*B/Q - v v*/Q^2 for Q = |M z|^2, z = lift(w), B = M with column c
    removed and v = B* M z. The complex Hessian of log Q is conj(K).
    """
    z = chart_lift(chart, w)
    others = [i for i in range(matrix.shape[1]) if i != chart]
    block = matrix[:, others]
    u = z @ matrix.T
    q = np.sum(np.abs(u) ** 2, axis=-1)
    v = u @ block.conj()
    gram = block.conj().T @ block
    return (
        gram / q[..., None, None]
        - v[..., :, None] * v.conj()[..., None, :] / (q**2)[..., None, None]
    )


def fs_metric(chart: int, w: np.ndarray) -> np.ndarray:
    """
    Complex Hessian of log(1 + |w|^2) in a chart.
    """
    size = np.asarray(w).shape[-1] + 1
    return np.conj(_log_norm_kernel(np.eye(size), chart, w))


class PotentialField:
    """
    Real function on P^N (a Kähler potential relative to the Fubini-Study
    form) with analytic complex Hessians in affine charts.
    """

    def __init__(
        self,
        value: Callable[[np.ndarray], np.ndarray],
        hessian: Callable[[int, np.ndarray], np.ndarray],
        *,
        size: int,
        provenance: str,
        sigma: GroupElement | None = None,
    ) -> None:
        self._value = value
        self._hessian = hessian
        self.size = size
        self.provenance = provenance
        self.sigma = sigma

    @property
    def dim(self) -> int:
        return self.size - 1

    def _check(self, points: np.ndarray) -> np.ndarray:
        x = np.asarray(points, dtype=complex)
        if x.shape[-1] != self.size:
            raise DimensionMismatchError(
                f"Points have {x.shape[-1]} coordinates, potential expects {self.size}"
            )
        return x

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self._value(self._check(points))

    value = __call__

    def chart_hessian(self, chart: int, w: np.ndarray) -> np.ndarray:
        """
        H[a, b] = d^2 phi / dw_a dw̄_b at chart point w.
        """
        return self._hessian(chart, np.asarray(w, dtype=complex))

    def metric_pair(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        (G, H) at each point, both in the chart of the largest coordinate:
        the Fubini-Study Hessian and the potential Hessian.
        """
        x = self._check(points)
        charts, w = chart_coordinates(x)
        n = self.dim
        base = np.empty(x.shape[:-1] + (n, n), dtype=complex)
        extra = np.empty_like(base)
        for c in range(self.size):
            mask = charts == c
            if np.any(mask):
                base[mask] = fs_metric(c, w[mask])
                extra[mask] = self.chart_hessian(c, w[mask])
        return base, extra

    def tangent_density(self, points: np.ndarray, tangents: np.ndarray) -> np.ndarray:
        """
        Ratio of omega_phi to omega on the complex line spanned by each
        tangent vector.
        """
        x = self._check(points)
        charts, w = chart_coordinates(x)
        tau = chart_tangent(charts, x, tangents)
        base, extra = self.metric_pair(x)
        levi_base = np.einsum("...a,...ab,...b->...", tau, base, tau.conj()).real
        levi_extra = np.einsum("...a,...ab,...b->...", tau, extra, tau.conj()).real
        return (levi_base + levi_extra) / levi_base

    def __add__(self, other: PotentialField | float) -> PotentialField:
        if isinstance(other, PotentialField):
            if other.size != self.size:
                raise DimensionMismatchError("Potentials live on different spaces")
            first, second = self, other
            return PotentialField(
                lambda x: first._value(x) + second._value(x),
                lambda c, w: first._hessian(c, w) + second._hessian(c, w),
                size=self.size,
                provenance="sum",
            )
        return self + constant_potential(float(other), self.size)

    __radd__ = __add__

    def scaled(self, factor: float) -> PotentialField:
        source = self
        return PotentialField(
            lambda x: factor * source._value(x),
            lambda c, w: factor * source._hessian(c, w),
            size=self.size,
            provenance=self.provenance if factor == 1 else "sum",
            sigma=self.sigma if factor == 1 else None,
        )

    def __repr__(self) -> str:
        return f"<PotentialField {self.provenance} on P^{self.dim}>"


def constant_potential(value: float, size: int) -> PotentialField:
    def evaluate(x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[:-1], float(value))

    def hessian(chart: int, w: np.ndarray) -> np.ndarray:
        n = size - 1
        return np.zeros(w.shape[:-1] + (n, n), dtype=complex)

    return PotentialField(evaluate, hessian, size=size, provenance="constant")


def zero_potential(size: int) -> PotentialField:
    return constant_potential(0.0, size)


def embedding_potential(matrix: Any) -> PotentialField:
    """
    log(|M x|^2/|x|^2) for an injective matrix M of shape (r, N+1): the
    Fubini-Study form pulled back along x -> M x.
    """
    mat = np.array(matrix, dtype=complex)
    if np.linalg.matrix_rank(mat) < mat.shape[1]:
        raise ValueError("Embedding matrix must be injective")
    size = mat.shape[1]
    identity = np.eye(size)

    def evaluate(x: np.ndarray) -> np.ndarray:
        moved = x @ mat.T
        return np.log(np.sum(np.abs(moved) ** 2, axis=-1)) - np.log(
            np.sum(np.abs(x) ** 2, axis=-1)
        )

    def hessian(chart: int, w: np.ndarray) -> np.ndarray:
        return np.conj(
            _log_norm_kernel(mat, chart, w) - _log_norm_kernel(identity, chart, w)
        )

    return PotentialField(evaluate, hessian, size=size, provenance="bergman")


def bergman_potential(sigma: GroupElement) -> PotentialField:
    """
    phi_sigma(x) = log(|sigma x|^2/|x|^2), so omega + dd^c phi = sigma^* omega.
    """
    field = embedding_potential(sigma.mat)
    field.sigma = sigma
    return field


def ratio_log_potential(phi: PotentialField) -> PotentialField:
    """
    psi = log(omega_phi^N/omega^N) + N phi for a Bergman potential on P^N.
    omega_phi has Ricci form (N+1) omega_phi, so the Hessian of psi is
    minus the Hessian of phi.
    """
    if phi.provenance != "bergman" or phi.sigma is None:
        raise ValueError(
            "ratio-log potentials need a Bergman potential of a group element"
        )
    n = phi.dim

    def evaluate(x: np.ndarray) -> np.ndarray:
        base, extra = phi.metric_pair(x)
        ratio = np.linalg.det(base + extra).real / np.linalg.det(base).real
        return np.log(ratio) + n * phi(x)

    def hessian(chart: int, w: np.ndarray) -> np.ndarray:
        return -phi.chart_hessian(chart, w)

    return PotentialField(
        evaluate, hessian, size=phi.size, provenance="ratio-log", sigma=phi.sigma
    )


# Actions


def act(sigma: GroupElement, target: Any, *, role: str = "points") -> Any:
    """
    Points move by sigma, hyperplanes by sigma^{-T}; forms on points are
    composed with sigma^{-1} and forms on hyperplanes with sigma^T, so that
    incidence is preserved.
    """
    if role not in ("points", "hyperplanes"):
        raise ValueError(f"Unknown role {role!r}")
    if hasattr(target, "transformed"):
        return target.transformed(sigma)
    if isinstance(target, ProjPoint):
        _check_size(sigma, target.coords.shape[-1])
        return ProjPoint(sigma.mat @ target.coords)
    if isinstance(target, Hyperplane):
        _check_size(sigma, target.coords.shape[-1])
        return Hyperplane(sigma.inverse_transpose().mat @ target.coords)
    if isinstance(target, MultiPoly):
        matrix = sigma.inverse().mat if role == "points" else sigma.mat.T
        result = target
        for block, size in enumerate(target.grading.sizes):
            _check_size(sigma, size)
            result = result.compose_linear(block, matrix)
        return result
    array = np.asarray(target, dtype=complex)
    _check_size(sigma, array.shape[-1])
    if role == "points":
        return sigma.apply(array)
    return array @ np.linalg.inv(sigma.mat)


def _check_size(sigma: GroupElement, size: int) -> None:
    if sigma.size != size:
        raise DimensionMismatchError(
            f"Group element of size {sigma.size} cannot act on {size} coordinates"
        )
