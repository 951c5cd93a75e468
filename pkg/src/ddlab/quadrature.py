from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass
from math import factorial, sqrt
from typing import IO, Any, Callable, Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed

from ddlab.forms import PlaneCurve
from ddlab.polycore import MultiPoly
from ddlab.projgeom import PotentialField, complex_gaussian, substream, unit_rows

JOBS_ENV = "DDLAB_JOBS"


class NumericalFailure(ArithmeticError):
    pass


def default_jobs(environ: Mapping[str, str] | None = None) -> int:
    """
    Worker count from DDLAB_JOBS, 1 when unset.
    """
    if environ is None:
        environ = os.environ
    raw = environ.get(JOBS_ENV, "").strip()
    if not raw:
        return 1
    try:
        jobs = int(raw)
    except ValueError:
        raise ValueError(
            f"{JOBS_ENV} must be a positive integer, got {raw!r}"
        ) from None
    if jobs < 1:
        raise ValueError(f"{JOBS_ENV} must be a positive integer, got {raw!r}")
    return jobs


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    samples: int
    seed: int
    method: str
    volume: float = 1.0
    rejected: int = 0

    @classmethod
    def exact(cls, value: float, method: str, seed: int = 0) -> Estimate:
        return cls(float(value), 0.0, 0, seed, method)

    def scaled(self, factor: float) -> Estimate:
        return Estimate(
            self.value * factor,
            self.stderr * abs(factor),
            self.samples,
            self.seed,
            self.method,
            self.volume,
            self.rejected,
        )

    def combined_stderr(self, other: Estimate) -> float:
        return sqrt(self.stderr**2 + other.stderr**2)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SpaceSpec:
    kind: str
    dims: tuple[int, ...] = ()
    curve: MultiPoly | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("projective", "product", "curve"):
            raise ValueError(f"Unknown space kind {self.kind!r}")
        if self.kind == "curve":
            if self.curve is None:
                raise ValueError("Curve spaces need a defining form")
            (degree,) = self.curve.multidegree()
            if degree < 2 or self.curve.grading.sizes != (3,):
                raise ValueError("Curve spaces need a plane curve of degree >= 2")
        elif not self.dims or min(self.dims) < 1:
            raise ValueError(f"Projective factors need dimension >= 1, got {self.dims}")
        if self.kind == "projective" and len(self.dims) != 1:
            raise ValueError("A projective space has one factor")

    @classmethod
    def projective(cls, dim: int) -> SpaceSpec:
        return cls("projective", (dim,))

    @classmethod
    def product(cls, *dims: int) -> SpaceSpec:
        return cls("product", tuple(dims))

    @classmethod
    def plane_curve(cls, poly: MultiPoly) -> SpaceSpec:
        return cls("curve", (1,), poly)

    @classmethod
    def for_grading(cls, sizes: Sequence[int]) -> SpaceSpec:
        dims = tuple(size - 1 for size in sizes)
        return cls.projective(dims[0]) if len(dims) == 1 else cls.product(*dims)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    @property
    def volume(self) -> float:
        """
        Top self-intersection of the polarization: the multinomial
        coefficient for products of O(1)'s, the degree for curves.
        """
        if self.kind == "curve":
            assert self.curve is not None
            return float(self.curve.multidegree()[0])
        total = factorial(self.dim)
        for dim in self.dims:
            total //= factorial(dim)
        return float(total)


class SampleDump:
    """
    CSV sink for per-sample values: columns stream-id, index, value.
    """

    def __init__(self, path: str) -> None:
        self.path = path
        self._file: IO[str] = open(path, "w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(["stream-id", "index", "value"])

    def write(self, stream_id: str, start: int, values: np.ndarray) -> None:
        for offset, value in enumerate(values):
            self._writer.writerow([stream_id, start + offset, repr(float(value))])

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> SampleDump:
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()


CHUNK_SIZE = 8192
NONFINITE_QUOTA = 1e-6


def _chunk_sizes(budget: int, chunk: int = CHUNK_SIZE) -> list[int]:
    if budget < 1:
        raise ValueError(f"Budget must be positive, got {budget}")
    full, rest = divmod(budget, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _moments(values: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    n = values.shape[0]
    if n == 0:
        zeros = np.zeros(values.shape[1])
        return 0, zeros, zeros
    mean = values.mean(axis=0)
    return n, mean, ((values - mean) ** 2).sum(axis=0)


def _merge(
    a: tuple[int, np.ndarray, np.ndarray], b: tuple[int, np.ndarray, np.ndarray]
) -> tuple[int, np.ndarray, np.ndarray]:
    na, mean_a, m2_a = a
    nb, mean_b, m2_b = b
    if na == 0:
        return b
    if nb == 0:
        return a
    n = na + nb
    delta = mean_b - mean_a
    return n, mean_a + delta * (nb / n), m2_a + m2_b + delta**2 * (na * nb / n)


def _map_chunks(work: Callable[[int], Any], count: int, jobs: int | None) -> list[Any]:
    jobs = default_jobs() if jobs is None else jobs
    if jobs < 1:
        raise ValueError(f"jobs must be positive, got {jobs}")
    if jobs == 1 or count == 1:
        return [work(k) for k in range(count)]
    return list(
        Parallel(n_jobs=jobs, prefer="threads")(delayed(work)(k) for k in range(count))
    )


def _reduce(
    chunks: list[tuple[np.ndarray, int]],
    *,
    seed: int,
    method: str,
    volume: float,
    allowed: int,
    dump: SampleDump | None,
    label: str,
) -> list[Estimate]:
    total = (0, np.zeros(0), np.zeros(0))
    rejected = 0
    start = 0
    for values, extra_rejected in chunks:
        finite = np.all(np.isfinite(values), axis=1)
        rejected += int((~finite).sum()) + extra_rejected
        if dump is not None:
            for column in range(values.shape[1]):
                stream_id = label if values.shape[1] == 1 else f"{label}:{column}"
                dump.write(stream_id, start, values[:, column])
        start += values.shape[0]
        part = _moments(values[finite])
        total = part if total[0] == 0 else _merge(total, part)
    if rejected > allowed:
        raise NumericalFailure(
            f"{rejected} rejected samples exceed the quota of {allowed} ({method})"
        )
    n, mean, m2 = total
    if n == 0:
        raise NumericalFailure(f"No finite samples ({method})")
    stderr = np.sqrt(m2 / (n - 1) / n) if n > 1 else np.zeros_like(mean)
    return [
        Estimate(float(m), float(s), n, seed, method, volume, rejected)
        for m, s in zip(mean, stderr)
    ]


def _as_columns(values: Any, n: int) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    if array.shape[0] != n:
        raise ValueError(f"Integrand returned {array.shape[0]} values for {n} samples")
    return array


# Ambient spaces


def _draw_points(
    rng: np.random.Generator, dims: Sequence[int], count: int
) -> list[np.ndarray]:
    return [unit_rows(complex_gaussian(rng, (count, dim + 1))) for dim in dims]


def sample_fs(
    space: SpaceSpec, count: int, seed: int, stream: int = 0
) -> list[np.ndarray]:
    """
    FS-uniform points, one array per factor, drawn chunk by chunk from the
    same substreams the integrators use.
    """
    if space.kind == "curve":
        raise ValueError("Use curve quadrature for curve spaces")
    parts = [
        _draw_points(substream(seed, stream, k), space.dims, size)
        for k, size in enumerate(_chunk_sizes(count))
    ]
    return [np.concatenate([p[i] for p in parts]) for i in range(len(space.dims))]


def integrate_vector(
    f: Callable[..., Any],
    space: SpaceSpec,
    budget: int,
    seed: int,
    *,
    jobs: int | None = None,
    stream: int = 0,
    method: str = "mc",
    dump: SampleDump | None = None,
) -> list[Estimate]:
    """
    Monte Carlo means of every column of f over one shared set of points;
    f receives one array of unit vectors per factor.
    """
    if space.kind == "curve":
        raise ValueError("Use curve quadrature for curve spaces")
    sizes = _chunk_sizes(budget)

    def work(k: int) -> tuple[np.ndarray, int]:
        points = _draw_points(substream(seed, stream, k), space.dims, sizes[k])
        return _as_columns(f(*points), sizes[k]), 0

    return _reduce(
        _map_chunks(work, len(sizes), jobs),
        seed=seed,
        method=method,
        volume=space.volume,
        allowed=int(NONFINITE_QUOTA * budget),
        dump=dump,
        label=f"{method}:{stream}",
    )


def integrate_projective(
    f: Callable[..., Any],
    space: SpaceSpec,
    budget: int,
    seed: int,
    **options: Any,
) -> Estimate:
    (estimate,) = integrate_vector(f, space, budget, seed, **options)
    return estimate


def paired_log_ratio(
    f: Callable[..., Any],
    g: Callable[..., Any],
    space: SpaceSpec,
    budget: int,
    seed: int,
    **options: Any,
) -> Estimate:
    """
    Integral of log f - log g on common random numbers.
    """

    def difference(*points: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(np.asarray(f(*points), dtype=float)) - np.log(
                np.asarray(g(*points), dtype=float)
            )

    options.setdefault("method", "paired-mc")
    return integrate_projective(difference, space, budget, seed, **options)


# Curves


@dataclass(frozen=True)
class CurveSample:
    """
    Intersection points of sampled lines with a curve, shape (lines, d, 3),
    with unit tangents orthogonal to the point, second-order vectors c
    (F(x + a v + a^2 c / 2) = O(a^3)) and gradients.
    """

    points: np.ndarray
    tangents: np.ndarray
    second: np.ndarray
    gradients: np.ndarray

    @property
    def lines(self) -> int:
        return int(self.points.shape[0])


def curve_geometry(curve: PlaneCurve, points: np.ndarray) -> CurveSample:
    x = np.asarray(points, dtype=complex)
    gradients = curve.gradient(x)
    tangents = unit_rows(np.cross(gradients, x.conj()))
    hessians = curve.hessian(x)
    curvature = np.einsum("...i,...ij,...j->...", tangents, hessians, tangents)
    norm2 = np.sum(np.abs(gradients) ** 2, axis=-1)
    second = -(curvature / norm2)[..., None] * gradients.conj()
    return CurveSample(x, tangents, second, gradients)


CURVE_REJECT_QUOTA = 0.01


def integrate_curve_vector(
    poly: MultiPoly | PlaneCurve,
    per_line: Callable[[CurveSample], Any],
    budget: int,
    seed: int,
    *,
    jobs: int | None = None,
    stream: int = 0,
    method: str = "crofton",
    dump: SampleDump | None = None,
) -> list[Estimate]:
    """
    Averages of per-line sums over FS-uniform random lines. For an
    integrand g the per-line sum of g over the d intersection points has
    mean equal to the integral of g against omega on the curve.
    """
    curve = poly if isinstance(poly, PlaneCurve) else PlaneCurve(poly)
    sizes = _chunk_sizes(budget)

    def work(k: int) -> tuple[np.ndarray, int]:
        rng = substream(seed, stream, k)
        need = sizes[k]
        kept: list[np.ndarray] = []
        rejected = drawn = 0
        while need > 0:
            points, valid = curve.slice(curve.random_normals(rng, need))
            kept.append(points[valid])
            rejected += int((~valid).sum())
            drawn += len(valid)
            need -= int(valid.sum())
            if drawn > 10 * sizes[k] + 100:
                break
        if need > 0 or rejected > CURVE_REJECT_QUOTA * drawn:
            raise NumericalFailure(
                f"{rejected} of {drawn} slicing lines rejected near tangency"
            )
        sample = curve_geometry(curve, np.concatenate(kept))
        return _as_columns(per_line(sample), sizes[k]), 0

    return _reduce(
        _map_chunks(work, len(sizes), jobs),
        seed=seed,
        method=method,
        volume=float(curve.degree),
        allowed=int(NONFINITE_QUOTA * budget),
        dump=dump,
        label=f"{method}:{stream}",
    )


def curve_integral(
    poly: MultiPoly | PlaneCurve,
    integrand: Callable[[CurveSample], Any] | float,
    measure: str | PotentialField,
    budget: int,
    seed: int,
    **options: Any,
) -> Estimate:
    """
    Integral over {F = 0} of an integrand given per intersection point,
    against omega ("base") or against omega_phi for a potential phi.
    """

    def per_line(sample: CurveSample) -> np.ndarray:
        if callable(integrand):
            values = np.asarray(integrand(sample), dtype=float)
        else:
            values = np.full(sample.points.shape[:-1], float(integrand))
        if isinstance(measure, PotentialField):
            values = values * measure.tangent_density(sample.points, sample.tangents)
        elif measure != "base":
            raise ValueError(f"Unknown measure {measure!r}")
        return values.sum(axis=1)

    (estimate,) = integrate_curve_vector(poly, per_line, budget, seed, **options)
    return estimate
