from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, sqrt
from typing import Any, Sequence

import numpy as np

from ddlab.forms import PlaneCurve, form_degree_data
from ddlab.polycore import DegreeData, MultiPoly
from ddlab.projgeom import (
    GroupElement,
    PotentialField,
    bergman_potential,
    bergman_velocity,
    one_param_subgroup,
    ratio_log_potential,
)
from ddlab.quadrature import (
    CurveSample,
    Estimate,
    SampleDump,
    SpaceSpec,
    integrate_curve_vector,
    integrate_projective,
    paired_log_ratio,
)

KAHLER_TOLERANCE = 1e-9


class NotKahlerError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CurvatureSlot:
    """
    One entry of a multilinear energy: the bundle L^weight with potential
    weight * phi, or K L^n with potential psi = log(omega_phi^n/omega^n) + n phi
    built from the deformation phi.
    """

    bundle: str
    deformation: PotentialField
    weight: int = 1

    def __post_init__(self) -> None:
        if self.bundle not in ("L", "KL"):
            raise ValueError(f"Unknown bundle {self.bundle!r}")
        if self.bundle == "KL" and self.deformation.sigma is None:
            raise ValueError(
                "K L^n slots need the Bergman potential of a group element"
            )

    @classmethod
    def line(cls, phi: PotentialField, weight: int = 1) -> CurvatureSlot:
        return cls("L", phi, weight)

    @classmethod
    def canonical(cls, phi: PotentialField) -> CurvatureSlot:
        return cls("KL", phi)

    @property
    def potential(self) -> PotentialField:
        """
        Ambient potential of the slot (on P^N).
        """
        if self.bundle == "L":
            return self.deformation.scaled(self.weight)
        return ratio_log_potential(self.deformation)

    @property
    def trivial(self) -> bool:
        sigma = self.deformation.sigma
        return sigma is not None and sigma.is_unitary()


# Ambient densities


def _elementary_symmetric(eigenvalues: np.ndarray) -> np.ndarray:
    n = eigenvalues.shape[-1]
    e = np.zeros(eigenvalues.shape[:-1] + (n + 1,), dtype=complex)
    e[..., 0] = 1.0
    for i in range(n):
        lam = eigenvalues[..., i]
        for j in range(i + 1, 0, -1):
            e[..., j] = e[..., j] + lam * e[..., j - 1]
    return e


def mixed_densities(base: np.ndarray, extra: np.ndarray) -> np.ndarray:
    """
    omega_phi^j omega^(n-j) / omega^n for j = 0..n: e_j of the eigenvalues
    of G^-1 (G + H) over binomial(n, j).
    """
    n = base.shape[-1]
    eigenvalues = np.linalg.eigvals(np.linalg.solve(base, base + extra))
    if np.any(eigenvalues.real < -KAHLER_TOLERANCE):
        raise NotKahlerError("Deformed form is not positive")
    e = _elementary_symmetric(eigenvalues).real
    return e / np.array([comb(n, j) for j in range(n + 1)])


def mixed_discriminant(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """
    D(A_1, ..., A_n) normalized so that D(A, ..., A) = det A, for n <= 2.
    """
    if len(matrices) == 1:
        return matrices[0][..., 0, 0]
    if len(matrices) == 2:
        a, b = matrices
        return (
            a[..., 0, 0] * b[..., 1, 1]
            + a[..., 1, 1] * b[..., 0, 0]
            - a[..., 0, 1] * b[..., 1, 0]
            - a[..., 1, 0] * b[..., 0, 1]
        ) / 2
    raise ValueError("Mixed discriminants are implemented for n <= 2")


def _ambient_slot(
    slot: CurvatureSlot, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    phi = slot.deformation
    base, extra = phi.metric_pair(points)
    if slot.bundle == "L":
        k = slot.weight
        return k * phi(points), k * base, k * (base + extra), base
    n = phi.dim
    ratio = np.linalg.det(base + extra).real / np.linalg.det(base).real
    psi = np.log(ratio) + n * phi(points)
    return psi, -base, -(base + extra), base


def _check_space(space: SpaceSpec) -> None:
    if space.kind == "projective" and space.dim > 2:
        raise ValueError("Ambient energies are implemented on P^1 and P^2")
    if space.kind == "product":
        raise ValueError("Energies are defined on P^N or on plane curves")


# Curve densities


def _cross_norm2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(np.cross(a, b)) ** 2, axis=-1)


def _norm2(a: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(a) ** 2, axis=-1)


def area_density(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Fubini-Study area density |x ^ v|^2/|x|^4 of the curve along v.
    """
    return _cross_norm2(x, v) / _norm2(x) ** 2


def curvature_ratio(x: np.ndarray, v: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Ric(omega)/omega on the curve from a second-order jet x + a v + a^2 c/2.
    """
    w = np.cross(x, v)
    w_prime = np.cross(x, c)
    return 2 - _norm2(x) ** 2 * _cross_norm2(w, w_prime) / _norm2(w) ** 3


def scalar_curvature(
    sample: CurveSample, sigma: GroupElement | None = None
) -> np.ndarray:
    """
    S = Ric/omega at every sampled point, for omega or for sigma^* omega.
    """
    x, v, c = sample.points, sample.tangents, sample.second
    if sigma is not None:
        x, v, c = sigma.apply(x), sigma.apply(v), sigma.apply(c)
    return curvature_ratio(x, v, c)


@dataclass(frozen=True)
class _CurveTerms:
    phi: np.ndarray
    ratio: np.ndarray
    curvature: np.ndarray
    deformed_curvature: np.ndarray

    @property
    def psi(self) -> np.ndarray:
        return np.log(self.ratio) + self.phi


def _curve_terms(sample: CurveSample, sigma: GroupElement) -> _CurveTerms:
    x, v, c = sample.points, sample.tangents, sample.second
    moved = sigma.apply(x), sigma.apply(v), sigma.apply(c)
    ratio = area_density(moved[0], moved[1]) / area_density(x, v)
    phi = np.log(_norm2(moved[0]) / _norm2(x))
    return _CurveTerms(phi, ratio, curvature_ratio(x, v, c), curvature_ratio(*moved))


def _curve_slot(
    slot: CurvatureSlot, sample: CurveSample
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    phi = slot.deformation
    if slot.bundle == "L":
        k = slot.weight
        density = phi.tangent_density(sample.points, sample.tangents)
        return k * phi(sample.points), np.full(density.shape, float(k)), k * density
    assert phi.sigma is not None
    terms = _curve_terms(sample, phi.sigma)
    return (
        terms.psi,
        1 - terms.curvature,
        (1 - terms.deformed_curvature) * terms.ratio,
    )


def scalar_curvature_fd(
    poly: MultiPoly | PlaneCurve, point: Sequence[complex], step: float = 1e-4
) -> float:
    """
    Ric/omega at a curve point from a five-point Laplacian of log of the
    area density in a holomorphic parameter.
    """
    curve = poly if isinstance(poly, PlaneCurve) else PlaneCurve(poly)
    x = np.asarray(point, dtype=complex)
    x = x / np.linalg.norm(x)
    g = curve.gradient(x[None])[0]
    v = np.cross(g, x.conj())
    v = v / np.linalg.norm(v)
    normal = g.conj() / np.sum(np.abs(g) ** 2)

    def log_density(a: complex) -> float:
        b = 0j
        for _ in range(12):
            z = x + a * v + b * normal
            value = curve.value(z[None])[0]
            slope = np.dot(curve.gradient(z[None])[0], normal)
            b -= value / slope
        z = x + a * v + b * normal
        grad = curve.gradient(z[None])[0]
        tangent = v - (np.dot(grad, v) / np.dot(grad, normal)) * normal
        return float(np.log(area_density(z[None], tangent[None])[0]))

    centre = log_density(0j)
    around = sum(log_density(step * unit) for unit in (1, -1, 1j, -1j))
    laplacian = (around - 4 * centre) / (4 * step**2)
    return float(-laplacian / np.exp(centre))


# Functionals


def aubin_yau(
    space: SpaceSpec,
    phi: PotentialField,
    budget: int,
    seed: int = 0,
    *,
    jobs: int | None = None,
    dump: SampleDump | None = None,
) -> Estimate:
    """
    E(phi) = sum_j integral of phi omega_phi^j omega^(n-j).
    """
    _check_space(space)
    if phi.sigma is not None and phi.sigma.is_unitary():
        return Estimate.exact(0.0, "unitary", seed)
    if space.kind == "curve":
        assert space.curve is not None

        def per_line(sample: CurveSample) -> np.ndarray:
            density = phi.tangent_density(sample.points, sample.tangents)
            if np.any(density < -KAHLER_TOLERANCE):
                raise NotKahlerError("Deformed form is not positive on the curve")
            return (phi(sample.points) * (1 + density)).sum(axis=1)

        (estimate,) = integrate_curve_vector(
            space.curve,
            per_line,
            budget,
            seed,
            jobs=jobs,
            dump=dump,
            method="aubin-yau",
        )
        return estimate

    def integrand(x: np.ndarray) -> np.ndarray:
        base, extra = phi.metric_pair(x)
        return phi(x) * mixed_densities(base, extra).sum(axis=-1)

    return integrate_projective(
        integrand, space, budget, seed, jobs=jobs, dump=dump, method="aubin-yau"
    )


def multilinear_energy(
    slots: Sequence[CurvatureSlot],
    space: SpaceSpec,
    budget: int,
    seed: int = 0,
    *,
    jobs: int | None = None,
    dump: SampleDump | None = None,
) -> Estimate:
    """
    E(phi_0, ..., phi_n) = sum_j integral of phi_j times the deformed
    curvatures of the earlier slots and the base curvatures of the later ones.
    """
    _check_space(space)
    slots = list(slots)
    if len(slots) != space.dim + 1:
        raise ValueError(f"Need {space.dim + 1} slots, got {len(slots)}")
    if all(slot.trivial for slot in slots):
        return Estimate.exact(0.0, "unitary", seed)
    if space.kind == "curve":
        assert space.curve is not None
        first, second = slots

        def per_line(sample: CurveSample) -> np.ndarray:
            value0, _, deformed0 = _curve_slot(first, sample)
            value1, base1, _ = _curve_slot(second, sample)
            return (value0 * base1 + value1 * deformed0).sum(axis=1)

        (estimate,) = integrate_curve_vector(
            space.curve,
            per_line,
            budget,
            seed,
            jobs=jobs,
            dump=dump,
            method="multilinear",
        )
        return estimate

    def integrand(x: np.ndarray) -> np.ndarray:
        terms = [_ambient_slot(slot, x) for slot in slots]
        fs = terms[0][3]
        volume = np.linalg.det(fs).real
        total = np.zeros(x.shape[0])
        for j, (value, _, _, _) in enumerate(terms):
            matrices = [t[2] for t in terms[:j]] + [t[1] for t in terms[j + 1 :]]
            total += value * mixed_discriminant(matrices).real / volume
        return total

    return integrate_projective(
        integrand, space, budget, seed, jobs=jobs, dump=dump, method="multilinear"
    )


def deligne_norm_log(
    f: MultiPoly,
    budget: int,
    seed: int = 0,
    *,
    jobs: int | None = None,
    dump: SampleDump | None = None,
) -> Estimate:
    """
    log |f|^2 for the Deligne norm: the mean of log(|f(H)|^2 / prod |H_i|^(2 d_i))
    under the product Fubini-Study probability measure. The product volume
    is recorded on the estimate.
    """
    if not f:
        raise ValueError("The zero form has no Deligne norm")
    f.multidegree()
    space = SpaceSpec.for_grading(f.grading.sizes)
    fast = f.to_float()

    def integrand(*blocks: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(fast.evaluate_batch(*blocks)) ** 2)

    return integrate_projective(
        integrand, space, budget, seed, jobs=jobs, dump=dump, method="deligne-norm"
    )


def delta_log_norm(
    f: Any,
    sigma: GroupElement,
    budget: int,
    seed: int = 0,
    *,
    role: str = "hyperplanes",
    jobs: int | None = None,
    dump: SampleDump | None = None,
) -> Estimate:
    """
    log(|f^sigma|^2 / |f|^2) for Deligne norms, on common random numbers.
    Forms on hyperplane blocks move by composition with sigma^T, forms on
    points by composition with sigma^-1.
    """
    poly = getattr(f, "poly", f)
    if not isinstance(poly, MultiPoly):
        raise TypeError(f"Expected a polynomial form, got {type(f).__name__}")
    if sigma.is_unitary():
        return Estimate.exact(0.0, "unitary", seed)
    if hasattr(f, "poly"):
        role = "hyperplanes"
    poly.multidegree()
    matrix = sigma.mat.T if role == "hyperplanes" else sigma.inverse().mat
    space = SpaceSpec.for_grading(poly.grading.sizes)
    fast = poly.to_float()

    def moved(*blocks: np.ndarray) -> np.ndarray:
        return np.abs(fast.evaluate_batch(*[b @ matrix.T for b in blocks])) ** 2

    def still(*blocks: np.ndarray) -> np.ndarray:
        return np.abs(fast.evaluate_batch(*blocks)) ** 2

    return paired_log_ratio(moved, still, space, budget, seed, jobs=jobs, dump=dump)


def mu_exponent(data: DegreeData) -> Fraction:
    """
    mu = (n/(n+1)) c1(K) c1(L)^(n-1) / c1(L)^n.
    """
    n = data.dim
    return Fraction(n, n + 1) * Fraction(data.deg_k) / Fraction(data.volume)


# K-energy


def _k_columns(
    sample: CurveSample, sigma: GroupElement, mu: float, degree: int = 0
) -> np.ndarray:
    terms = _curve_terms(sample, sigma)
    r, phi, psi = terms.ratio, terms.phi, terms.psi
    pairing = psi + phi * (1 - terms.deformed_curvature) * r
    aubin = phi * (1 + r)
    v_nu = pairing - (mu + 1) * aubin
    kl_pairing = psi * (1 - terms.curvature) + psi * (1 - terms.deformed_curvature) * r
    dual = kl_pairing + 2 * v_nu + degree * aubin
    columns = [v_nu, aubin, kl_pairing, dual]
    return np.stack([column.sum(axis=1) for column in columns], axis=-1)


def _curve_setup(poly: MultiPoly) -> tuple[PlaneCurve, float, float]:
    data = form_degree_data(poly, 2)
    return PlaneCurve(poly), float(mu_exponent(data)), float(data.volume)


def k_energy_decomposition(
    poly: MultiPoly,
    sigma: GroupElement,
    budget: int,
    seed: int = 0,
    *,
    jobs: int | None = None,
    dump: SampleDump | None = None,
) -> dict[str, Estimate]:
    """
    On one set of slicing lines: V nu(phi_sigma), the Aubin-Yau energy of
    the curve, the self-pairing E_<KL,KL>(psi, psi), and the dual norm
    prediction E_<KL,KL>(psi, psi) + 2 V nu + d E(phi).
    """
    names = ("v_nu", "aubin_yau", "kl_pairing", "dual_prediction")
    if sigma.is_unitary():
        return {name: Estimate.exact(0.0, "unitary", seed) for name in names}
    curve, mu, volume = _curve_setup(poly)
    estimates = integrate_curve_vector(
        curve,
        lambda sample: _k_columns(sample, sigma, mu, curve.degree),
        budget,
        seed,
        jobs=jobs,
        dump=dump,
        method="k-energy",
    )
    return dict(zip(names, estimates))


def k_energy(
    poly: MultiPoly,
    sigma: GroupElement,
    budget: int,
    seed: int = 0,
    *,
    jobs: int | None = None,
    dump: SampleDump | None = None,
) -> Estimate:
    """
    nu(phi_sigma) = (E_<KL,L>(psi, phi) - (mu + 1) E(phi)) / V.
    """
    if sigma.is_unitary():
        return Estimate.exact(0.0, "unitary", seed)
    _, _, volume = _curve_setup(poly)
    terms = k_energy_decomposition(poly, sigma, budget, seed, jobs=jobs, dump=dump)
    return terms["v_nu"].scaled(1 / volume)


def mean_scalar_curvature(
    poly: MultiPoly, budget: int, seed: int = 0, *, jobs: int | None = None
) -> Estimate:
    """
    S-bar = (1/V) integral of S omega; topologically -deg K / V.
    """
    curve, _, volume = _curve_setup(poly)
    (estimate,) = integrate_curve_vector(
        curve,
        lambda sample: scalar_curvature(sample).sum(axis=1) / volume,
        budget,
        seed,
        jobs=jobs,
        stream=1,
        method="scalar-curvature",
    )
    return estimate


def k_energy_slope(
    poly: MultiPoly,
    generator: Any,
    budget: int,
    seed: int = 0,
    *,
    step: float = 1e-3,
    jobs: int | None = None,
) -> Estimate:
    """
    Central difference of nu along exp(tA) at t = 0 on common lines.
    """
    curve, mu, volume = _curve_setup(poly)
    forward = one_param_subgroup(generator, step)
    backward = one_param_subgroup(generator, -step)

    def per_line(sample: CurveSample) -> np.ndarray:
        ahead = _k_columns(sample, forward, mu)[:, 0]
        behind = _k_columns(sample, backward, mu)[:, 0]
        return (ahead - behind) / (2 * step * volume)

    (estimate,) = integrate_curve_vector(
        curve, per_line, budget, seed, jobs=jobs, method="k-energy-slope"
    )
    return estimate


def k_energy_slope_reference(
    poly: MultiPoly,
    generator: Any,
    budget: int,
    seed: int = 0,
    *,
    jobs: int | None = None,
) -> Estimate:
    """
    -(1/V) integral of phi-dot (S - S-bar) omega, with S-bar estimated on an
    independent stream.
    """
    curve, _, volume = _curve_setup(poly)
    s_bar = mean_scalar_curvature(poly, budget, seed, jobs=jobs)

    def per_line(sample: CurveSample) -> np.ndarray:
        velocity = bergman_velocity(generator, sample.points)
        curvature = scalar_curvature(sample)
        return np.stack(
            [(velocity * curvature).sum(axis=1), velocity.sum(axis=1)], axis=-1
        )

    weighted, plain = integrate_curve_vector(
        curve, per_line, budget, seed, jobs=jobs, method="k-energy-slope-reference"
    )
    value = -(weighted.value - s_bar.value * plain.value) / volume
    stderr = (
        sqrt(
            weighted.stderr**2
            + (s_bar.value * plain.stderr) ** 2
            + (plain.value * s_bar.stderr) ** 2
        )
        / volume
    )
    return Estimate(
        value,
        stderr,
        weighted.samples,
        seed,
        "k-energy-slope-reference",
        volume,
        weighted.rejected,
    )


def sigma_potentials(sigma: GroupElement, convention: str) -> PotentialField:
    """
    Bergman potential for a sign convention: "points" uses sigma, "sections"
    uses sigma^-1.
    """
    if convention == "points":
        return bergman_potential(sigma)
    if convention == "sections":
        return bergman_potential(sigma.inverse())
    raise ValueError(f"Unknown convention {convention!r}")

