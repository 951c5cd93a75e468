from __future__ import annotations

import numbers
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from types import MappingProxyType
from typing import Any, Iterator, Literal, Mapping, Sequence, Tuple, Union

import numpy as np
from sympy import QQ, QQ_I, Basic
from sympy.polys.domains.gaussiandomains import GaussianRational
from sympy.polys.matrices import DomainMatrix
from sympy.polys.polyerrors import CoercionFailed, ExactQuotientFailed
from sympy.polys.rings import PolyElement, PolyRing

CoeffKind = Literal["exact", "float"]
Exponent = Tuple[int, ...]


class GradingMismatchError(ValueError):
    pass


class CoefficientKindError(ValueError):
    pass


class NotHomogeneousError(ValueError):
    pass


class PolynomialSyntaxError(ValueError):
    pass


class NotDivisibleError(ArithmeticError):
    pass


Coefficient = Union[GaussianRational, complex]


def _rational(value: numbers.Rational) -> Any:
    return QQ(int(value.numerator), int(value.denominator))


def gaussian(value: Any) -> GaussianRational:
    """
    Exact element of QQ(i) from a Python, numpy or sympy number. Floats are
    converted exactly.
    """
    if isinstance(value, GaussianRational):
        return value
    if isinstance(value, Basic):
        try:
            return QQ_I.from_sympy(value)
        except CoercionFailed as exc:
            raise TypeError(f"{value!r} is not a Gaussian rational") from exc
    if QQ.of_type(value):
        return QQ_I(value)
    if isinstance(value, numbers.Integral):
        return QQ_I(int(value))
    if isinstance(value, numbers.Rational):
        return QQ_I(_rational(value))
    if isinstance(value, numbers.Complex):
        value = complex(value)
        return QQ_I(
            _rational(Fraction(value.real)), _rational(Fraction(value.imag))
        )
    raise TypeError(f"Cannot convert {value!r} to an exact coefficient")


def to_complex(value: Any) -> complex:
    if isinstance(value, GaussianRational):
        return complex(float(value.x), float(value.y))
    return complex(value)


def _parts(value: Coefficient) -> tuple[Fraction | float, Fraction | float]:
    if isinstance(value, GaussianRational):
        return (
            Fraction(int(value.x.numerator), int(value.x.denominator)),
            Fraction(int(value.y.numerator), int(value.y.denominator)),
        )
    return value.real, value.imag


def _is_exact_scalar(value: Any) -> bool:
    return isinstance(value, (GaussianRational, numbers.Rational))


def _coerce(value: Any, kind: CoeffKind) -> Coefficient:
    if kind == "exact":
        return gaussian(value)
    return to_complex(value)


@dataclass(frozen=True)
class BlockGrading:
    """
    Variable layout of a polynomial: one named block of variables per projective
    factor. Variables are numbered globally, block after block.
    """

    blocks: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        blocks = tuple((str(name), int(size)) for name, size in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValueError("A grading needs at least one block")
        names = [name for name, _ in blocks]
        if len(set(names)) != len(names):
            raise ValueError(f"Block names must be unique: {names}")
        for name, size in blocks:
            if size < 1:
                raise ValueError(f"Block {name!r} must have at least one variable")

    @classmethod
    def single(cls, size: int, name: str = "x") -> BlockGrading:
        return cls(((name, size),))

    @classmethod
    def repeated(cls, count: int, size: int, prefix: str = "h") -> BlockGrading:
        return cls(tuple((f"{prefix}{i + 1}", size) for i in range(count)))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(size for _, size in self.blocks)

    @property
    def nvars(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        offsets = []
        position = 0
        for size in self.sizes:
            offsets.append(position)
            position += size
        return tuple(offsets)

    def block_index(self, block: int | str) -> int:
        if isinstance(block, str):
            try:
                return self.names.index(block)
            except ValueError:
                raise ValueError(f"Unknown block {block!r}") from None
        if not 0 <= block < len(self.blocks):
            raise ValueError(f"Block index {block} out of range")
        return block

    def block_range(self, block: int | str) -> range:
        index = self.block_index(block)
        start = self.offsets[index]
        return range(start, start + self.sizes[index])

    def variable_index(self, block: int | str, idx: int) -> int:
        positions = self.block_range(block)
        if not 0 <= idx < len(positions):
            raise ValueError(f"Variable {idx} out of range for block {block!r}")
        return positions[idx]

    def locate(self, var: int) -> tuple[int, int]:
        for index, start in enumerate(self.offsets):
            if start <= var < start + self.sizes[index]:
                return index, var - start
        raise ValueError(f"Variable {var} out of range")

    def without(self, block: int | str) -> BlockGrading:
        index = self.block_index(block)
        return BlockGrading(self.blocks[:index] + self.blocks[index + 1 :])

    def extended(self, *blocks: tuple[str, int]) -> BlockGrading:
        return BlockGrading(self.blocks + tuple(blocks))

    def __str__(self) -> str:
        return ",".join(f"{name}:{size}" for name, size in self.blocks)

    @classmethod
    def parse(cls, text: str) -> BlockGrading:
        blocks = []
        for item in text.split(","):
            name, _, size = item.strip().partition(":")
            if not size:
                raise ValueError(f"Malformed grading entry {item!r}")
            blocks.append((name.strip(), int(size)))
        return cls(tuple(blocks))


class MultiPoly:
    """
    Sparse block-graded polynomial with exact (Gaussian rational) or float
    complex coefficients. Instances are immutable.
    """

    __slots__ = ("grading", "kind", "_terms", "_degrees", "_compiled")

    def __init__(
        self,
        grading: BlockGrading,
        terms: Mapping[Sequence[int], Any] | None = None,
        kind: CoeffKind = "exact",
    ) -> None:
        if kind not in ("exact", "float"):
            raise CoefficientKindError(f"Unknown coefficient kind {kind!r}")
        self.grading = grading
        self.kind: CoeffKind = kind
        nvars = grading.nvars
        cleaned: dict[Exponent, Coefficient] = {}
        for exponent, value in (terms or {}).items():
            key = tuple(int(e) for e in exponent)
            if len(key) != nvars or min(key, default=0) < 0:
                raise ValueError(
                    f"Exponent {exponent} does not match {nvars} variables"
                )
            coefficient = _coerce(value, kind)
            if key in cleaned:
                coefficient = cleaned[key] + coefficient
            if coefficient:
                cleaned[key] = coefficient
            else:
                cleaned.pop(key, None)
        self._terms = cleaned
        self._degrees: frozenset[tuple[int, ...]] = frozenset(
            self._block_degrees(e) for e in cleaned
        )
        self._compiled: tuple[np.ndarray, np.ndarray] | None = None

    # Construction

    @classmethod
    def _raw(
        cls, grading: BlockGrading, terms: dict[Exponent, Coefficient], kind: CoeffKind
    ) -> MultiPoly:
        poly = cls.__new__(cls)
        poly.grading = grading
        poly.kind = kind
        poly._terms = terms
        poly._degrees = frozenset(poly._block_degrees(e) for e in terms)
        poly._compiled = None
        return poly

    @classmethod
    def zero(cls, grading: BlockGrading, kind: CoeffKind = "exact") -> MultiPoly:
        return cls._raw(grading, {}, kind)

    @classmethod
    def constant(
        cls, grading: BlockGrading, value: Any, kind: CoeffKind = "exact"
    ) -> MultiPoly:
        return cls(grading, {(0,) * grading.nvars: value}, kind)

    @classmethod
    def variable(
        cls,
        grading: BlockGrading,
        block: int | str,
        idx: int,
        kind: CoeffKind = "exact",
    ) -> MultiPoly:
        var = grading.variable_index(block, idx)
        exponent = [0] * grading.nvars
        exponent[var] = 1
        return cls(grading, {tuple(exponent): 1}, kind)

    @classmethod
    def block_variables(
        cls, grading: BlockGrading, block: int | str, kind: CoeffKind = "exact"
    ) -> list[MultiPoly]:
        size = grading.sizes[grading.block_index(block)]
        return [cls.variable(grading, block, i, kind) for i in range(size)]

    # Inspection

    def _block_degrees(self, exponent: Exponent) -> tuple[int, ...]:
        return tuple(
            sum(exponent[start : start + size])
            for start, size in zip(self.grading.offsets, self.grading.sizes)
        )

    @property
    def terms(self) -> Mapping[Exponent, Coefficient]:
        return MappingProxyType(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __iter__(self) -> Iterator[tuple[Exponent, Coefficient]]:
        return iter(self.sorted_terms())

    def coefficient(self, exponent: Sequence[int]) -> Coefficient:
        return self._terms.get(tuple(exponent), _coerce(0, self.kind))

    def sorted_terms(self) -> list[tuple[Exponent, Coefficient]]:
        """
        Terms in graded-lex order: higher total degree first, then
        lexicographically larger exponents first.
        """
        return sorted(
            self._terms.items(), key=lambda item: (sum(item[0]), item[0]), reverse=True
        )

    @property
    def is_homogeneous(self) -> bool:
        return len(self._degrees) <= 1

    def multidegree(self) -> tuple[int, ...]:
        if not self._terms:
            raise NotHomogeneousError("The zero polynomial has no multidegree")
        if len(self._degrees) != 1:
            raise NotHomogeneousError(
                f"Polynomial is not homogeneous per block: {sorted(self._degrees)}"
            )
        return next(iter(self._degrees))

    @property
    def total_degree(self) -> int:
        return max((sum(e) for e in self._terms), default=0)

    def is_constant(self) -> bool:
        return all(not any(e) for e in self._terms)

    @property
    def constant_value(self) -> Coefficient:
        if not self.is_constant():
            raise ValueError("Polynomial is not constant")
        return self.coefficient((0,) * self.grading.nvars)

    def variables(self) -> set[int]:
        found: set[int] = set()
        for exponent in self._terms:
            found.update(i for i, e in enumerate(exponent) if e)
        return found

    def degree_in(self, var: int) -> int:
        return max((e[var] for e in self._terms), default=0)

    def coefficients_in(self, var: int) -> dict[int, MultiPoly]:
        """
        Split into powers of one variable; the returned polynomials do not
        contain that variable.
        """
        groups: dict[int, dict[Exponent, Coefficient]] = {}
        for exponent, coefficient in self._terms.items():
            stripped = exponent[:var] + (0,) + exponent[var + 1 :]
            groups.setdefault(exponent[var], {})[stripped] = coefficient
        return {
            power: MultiPoly._raw(self.grading, terms, self.kind)
            for power, terms in groups.items()
        }

    def leading_exponent(self) -> Exponent:
        if not self._terms:
            raise ValueError("The zero polynomial has no leading term")
        return max(self._terms)

    def leading_coefficient(self) -> Coefficient:
        return self._terms[self.leading_exponent()]

    # Arithmetic

    def _check_compatible(self, other: MultiPoly) -> None:
        if self.grading != other.grading:
            raise GradingMismatchError(
                f"Gradings differ: {self.grading} vs {other.grading}"
            )
        if self.kind != other.kind:
            raise CoefficientKindError(
                f"Coefficient kinds differ: {self.kind} vs {other.kind}"
            )

    def _as_poly(self, other: Any) -> MultiPoly | None:
        if isinstance(other, MultiPoly):
            self._check_compatible(other)
            return other
        if isinstance(other, (GaussianRational, numbers.Complex)):
            if self.kind == "exact" and not _is_exact_scalar(other):
                raise CoefficientKindError(
                    f"Float scalar {other!r} used with exact coefficients"
                )
            return MultiPoly.constant(self.grading, other, self.kind)
        return None

    def __add__(self, other: Any) -> MultiPoly:
        o = self._as_poly(other)
        if o is None:
            return NotImplemented
        terms = dict(self._terms)
        for exponent, coefficient in o._terms.items():
            value = terms[exponent] + coefficient if exponent in terms else coefficient
            if value:
                terms[exponent] = value
            else:
                del terms[exponent]
        return MultiPoly._raw(self.grading, terms, self.kind)

    __radd__ = __add__

    def __neg__(self) -> MultiPoly:
        return MultiPoly._raw(
            self.grading, {e: -c for e, c in self._terms.items()}, self.kind
        )

    def __sub__(self, other: Any) -> MultiPoly:
        o = self._as_poly(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other: Any) -> MultiPoly:
        o = self._as_poly(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def scale(self, factor: Any) -> MultiPoly:
        if self.kind == "exact" and not _is_exact_scalar(factor):
            raise CoefficientKindError(
                f"Float scalar {factor!r} used with exact coefficients"
            )
        factor = _coerce(factor, self.kind)
        if not factor:
            return MultiPoly.zero(self.grading, self.kind)
        return MultiPoly._raw(
            self.grading, {e: c * factor for e, c in self._terms.items()}, self.kind
        )

    def __mul__(self, other: Any) -> MultiPoly:
        if not isinstance(other, MultiPoly):
            if isinstance(other, (GaussianRational, numbers.Complex)):
                return self.scale(other)
            return NotImplemented
        self._check_compatible(other)
        terms: dict[Exponent, Coefficient] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms[key] + c1 * c2 if key in terms else c1 * c2
        return MultiPoly._raw(
            self.grading, {e: c for e, c in terms.items() if c}, self.kind
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> MultiPoly:
        if isinstance(other, MultiPoly):
            return divide_exact(self, other)
        if isinstance(other, (GaussianRational, numbers.Complex)):
            if self.kind == "exact":
                return self.scale(1 / gaussian(other))
            return self.scale(1 / to_complex(other))
        return NotImplemented

    def __pow__(self, exponent: int) -> MultiPoly:
        if exponent < 0:
            raise ValueError("Negative powers are not polynomials")
        result = MultiPoly.constant(self.grading, 1, self.kind)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def __eq__(self, other: object) -> bool:
        if isinstance(other, MultiPoly):
            return (
                self.grading == other.grading
                and self.kind == other.kind
                and self._terms == other._terms
            )
        if isinstance(other, (GaussianRational, numbers.Complex)):
            if not other:
                return not self._terms
            value = _coerce(other, self.kind)
            return self.is_constant() and self.constant_value == value
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    def shifted(self, var: int, power: int) -> MultiPoly:
        """
        Multiply by a power of one variable.
        """
        terms = {}
        for exponent, coefficient in self._terms.items():
            key = list(exponent)
            key[var] += power
            terms[tuple(key)] = coefficient
        return MultiPoly._raw(self.grading, terms, self.kind)

    # Calculus and substitution

    def diff(self, var: int) -> MultiPoly:
        if not 0 <= var < self.grading.nvars:
            raise ValueError(f"Variable {var} out of range")
        terms: dict[Exponent, Coefficient] = {}
        for exponent, coefficient in self._terms.items():
            power = exponent[var]
            if power:
                key = exponent[:var] + (power - 1,) + exponent[var + 1 :]
                terms[key] = coefficient * power
        return MultiPoly._raw(self.grading, terms, self.kind)

    def gradient(self, block: int | str = 0) -> list[MultiPoly]:
        return [self.diff(var) for var in self.grading.block_range(block)]

    def substitute(self, values: Sequence[MultiPoly]) -> MultiPoly:
        """
        Replace every variable by a polynomial; all replacements share one
        grading, which becomes the grading of the result.
        """
        if len(values) != self.grading.nvars:
            raise GradingMismatchError(
                f"Expected {self.grading.nvars} replacements, got {len(values)}"
            )
        if not values:
            raise ValueError("Nothing to substitute")
        target = values[0].grading
        kind: CoeffKind = self.kind
        if any(v.kind == "float" for v in values):
            kind = "float"
        values = [v if v.kind == kind else v.to_float() for v in values]
        for value in values:
            if value.grading != target:
                raise GradingMismatchError("Replacements must share one grading")
        powers: dict[tuple[int, int], MultiPoly] = {}

        def power_of(var: int, exponent: int) -> MultiPoly:
            key = (var, exponent)
            if key not in powers:
                if exponent == 1:
                    powers[key] = values[var]
                else:
                    powers[key] = power_of(var, exponent - 1) * values[var]
            return powers[key]

        source = self if self.kind == kind else self.to_float()
        result = MultiPoly.zero(target, kind)
        for exponent, coefficient in source._terms.items():
            term = MultiPoly.constant(target, coefficient, kind)
            for var, e in enumerate(exponent):
                if e:
                    term = term * power_of(var, e)
            result = result + term
        return result

    def compose_linear(self, block: int | str, matrix: Any) -> MultiPoly:
        """
        Substitute x_i -> sum_j M[i][j] x_j inside one block, so that the
        result evaluated at x equals this polynomial evaluated at M x.
        """
        index = self.grading.block_index(block)
        size = self.grading.sizes[index]
        rows = [list(row) for row in matrix]
        if len(rows) != size or any(len(row) != size for row in rows):
            raise ValueError(
                f"Matrix must be {size}x{size} for block {self.grading.names[index]!r}"
            )
        exact = self.kind == "exact" and all(
            _is_exact_scalar(entry) for row in rows for entry in row
        )
        kind: CoeffKind = "exact" if exact else "float"
        variables = [
            MultiPoly.variable(self.grading, b, i, kind)
            for b in range(len(self.grading.blocks))
            for i in range(self.grading.sizes[b])
        ]
        start = self.grading.offsets[index]
        local = variables[start : start + size]
        for i in range(size):
            combination = MultiPoly.zero(self.grading, kind)
            for j in range(size):
                if rows[i][j]:
                    combination = combination + local[j].scale(rows[i][j])
            variables[start + i] = combination
        return self.substitute(variables)

    def embed(self, grading: BlockGrading, offset: int) -> MultiPoly:
        """
        Re-express on a larger grading, placing this polynomial's variables at
        the given global offset.
        """
        if offset + self.grading.nvars > grading.nvars:
            raise GradingMismatchError("Target grading too small")
        pad_after = grading.nvars - offset - self.grading.nvars
        terms = {
            (0,) * offset + exponent + (0,) * pad_after: coefficient
            for exponent, coefficient in self._terms.items()
        }
        return MultiPoly._raw(grading, terms, self.kind)

    # Evaluation

    def _split_points(self, points: Sequence[Any]) -> list[Any]:
        sizes = self.grading.sizes
        if len(points) != len(sizes):
            raise ValueError(f"Expected {len(sizes)} coordinate vectors")
        flat = []
        for vector, size in zip(points, sizes):
            vector = list(vector)
            if len(vector) != size:
                raise ValueError(
                    f"Coordinate vector {vector} should have {size} entries"
                )
            flat.extend(vector)
        return flat

    def evaluate(self, *points: Sequence[Any]) -> Coefficient:
        """
        Evaluate at one coordinate vector per block, exactly when both the
        coefficients and the coordinates are exact.
        """
        flat = self._split_points(points)
        exact = self.kind == "exact" and all(_is_exact_scalar(v) for v in flat)
        values: list[Any] = [gaussian(v) if exact else to_complex(v) for v in flat]
        total: Any = QQ_I.zero if exact else 0j
        for exponent, coefficient in self._terms.items():
            term = coefficient if exact else to_complex(coefficient)
            for value, e in zip(values, exponent):
                if e:
                    term = term * value**e
            total = total + term
        return total

    def _compile(self) -> tuple[np.ndarray, np.ndarray]:
        if self._compiled is None:
            items = self.sorted_terms()
            exponents = np.array(
                [e for e, _ in items], dtype=np.int64
            ).reshape(len(items), self.grading.nvars)
            coefficients = np.array([to_complex(c) for _, c in items], dtype=complex)
            self._compiled = (exponents, coefficients)
        return self._compiled

    def evaluate_batch(self, *arrays: Any) -> np.ndarray:
        """
        Float evaluation at many points: one array of shape (..., block size)
        per block; returns an array of shape (...).
        """
        sizes = self.grading.sizes
        if len(arrays) != len(sizes):
            raise ValueError(f"Expected {len(sizes)} arrays")
        columns = []
        shape: tuple[int, ...] | None = None
        for array, size in zip(arrays, sizes):
            array = np.asarray(array, dtype=complex)
            if array.shape[-1] != size:
                raise ValueError(f"Last axis must have length {size}")
            if shape is None:
                shape = array.shape[:-1]
            columns.append(array.reshape(-1, size))
        assert shape is not None
        x = np.concatenate(columns, axis=1)
        exponents, coefficients = self._compile()
        out = np.zeros(x.shape[0], dtype=complex)
        if not len(coefficients):
            return out.reshape(shape)
        top = int(exponents.max())
        powers = np.empty((top + 1,) + x.shape, dtype=complex)
        powers[0] = 1.0
        for k in range(1, top + 1):
            powers[k] = powers[k - 1] * x
        columns_index = np.arange(x.shape[1])
        for exponent, coefficient in zip(exponents, coefficients):
            out += coefficient * powers[exponent, :, columns_index].prod(axis=0)
        return out.reshape(shape)

    # Conversion

    def to_float(self) -> MultiPoly:
        if self.kind == "float":
            return self
        return MultiPoly._raw(
            self.grading, {e: to_complex(c) for e, c in self._terms.items()}, "float"
        )

    def to_exact(self) -> MultiPoly:
        if self.kind == "exact":
            return self
        return MultiPoly(self.grading, dict(self._terms), "exact")

    def normalized(self) -> MultiPoly:
        """
        Canonical scalar multiple. Exact: first graded-lex coefficient is 1.
        Float: unit max-absolute coefficient with the first graded-lex
        coefficient real and positive.
        """
        if not self._terms:
            return self
        first = self.sorted_terms()[0][1]
        if self.kind == "exact":
            return self.scale(1 / first)
        peak = max(abs(c) for c in self._terms.values())
        phase = abs(first) / first
        return self.scale(phase / peak)

    def chopped(self, tolerance: float) -> MultiPoly:
        if self.kind == "exact":
            return self
        peak = max((abs(c) for c in self._terms.values()), default=0.0)
        terms = {}
        for exponent, coefficient in self._terms.items():
            value = complex(coefficient)
            real = value.real if abs(value.real) > tolerance * peak else 0.0
            imag = value.imag if abs(value.imag) > tolerance * peak else 0.0
            if real or imag:
                terms[exponent] = complex(real, imag)
        return MultiPoly._raw(self.grading, terms, "float")

    def __str__(self) -> str:
        return format_poly(self)

    def __repr__(self) -> str:
        return (
            f"MultiPoly({format_poly(self)!r}, grading={self.grading}, "
            f"kind={self.kind})"
        )


# Text format


def _format_number(value: Fraction | float) -> str:
    if isinstance(value, Fraction):
        return str(value)
    return repr(float(value))


def _format_coefficient(value: Coefficient) -> str:
    real, imag = _parts(value)
    if not imag:
        return _format_number(real)
    if not real:
        return f"{_format_number(imag)}*i"
    sign = "-" if imag < 0 else "+"
    return f"({_format_number(real)}{sign}{_format_number(abs(imag))}*i)"


def _format_monomial(grading: BlockGrading, exponent: Exponent) -> str:
    factors = []
    for var, power in enumerate(exponent):
        if power:
            block, idx = grading.locate(var)
            token = f"x{block}_{idx}"
            factors.append(token if power == 1 else f"{token}^{power}")
    return "*".join(factors)


def format_poly(poly: MultiPoly) -> str:
    """
    Serialize as 'coeff*monomial' terms in graded-lex order, for example
    '4*x0_0*x0_2 - 1*x0_1^2'.
    """
    if not poly:
        return "0"
    pieces: list[str] = []
    for exponent, coefficient in poly.sorted_terms():
        real, imag = _parts(coefficient)
        negative = not imag and real < 0
        if pieces and negative:
            sign, coefficient = " - ", -coefficient
        elif pieces:
            sign = " + "
        else:
            sign = ""
        monomial = _format_monomial(poly.grading, exponent)
        text = _format_coefficient(coefficient)
        pieces.append(sign + (f"{text}*{monomial}" if monomial else text))
    return "".join(pieces)


_TOKEN_RE = re.compile(
    r"""
    \s*(?:
        (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
      | (?P<var>x(?P<first>\d+)(?:_(?P<second>\d+))?)
      | (?P<imag>i)
      | (?P<op>[-+*/^()])
    )""",
    re.VERBOSE,
)


class _Parser:
    def __init__(self, text: str, grading: BlockGrading, kind: CoeffKind) -> None:
        self.text = text
        self.grading = grading
        self.kind = kind
        self.tokens = list(self._tokenize(text))
        self.position = 0

    def _tokenize(self, text: str) -> Iterator[tuple[str, str, re.Match[str]]]:
        index = 0
        stripped = text.rstrip()
        while index < len(stripped):
            match = _TOKEN_RE.match(stripped, index)
            if match is None or match.end() == index:
                raise PolynomialSyntaxError(
                    f"Unexpected character at offset {index} in {text!r}"
                )
            group = match.lastgroup
            if group in ("first", "second"):
                group = "var"
            assert group is not None
            yield group, match.group(group), match
            index = match.end()

    def peek(self) -> tuple[str, str] | None:
        if self.position < len(self.tokens):
            kind, value, _ = self.tokens[self.position]
            return kind, value
        return None

    def take(self) -> tuple[str, str, re.Match[str]]:
        if self.position >= len(self.tokens):
            raise PolynomialSyntaxError(f"Unexpected end of input in {self.text!r}")
        token = self.tokens[self.position]
        self.position += 1
        return token

    def expect_op(self, op: str) -> None:
        kind, value, _ = self.take()
        if kind != "op" or value != op:
            raise PolynomialSyntaxError(f"Expected {op!r}, found {value!r}")

    def parse(self) -> MultiPoly:
        if not self.tokens:
            raise PolynomialSyntaxError("Empty polynomial")
        result = self.expression()
        if self.position != len(self.tokens):
            raise PolynomialSyntaxError(
                f"Trailing input {self.tokens[self.position][1]!r} in {self.text!r}"
            )
        return result

    def expression(self) -> MultiPoly:
        result = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            _, op, _ = self.take()
            right = self.term()
            result = result + right if op == "+" else result - right
        return result

    def term(self) -> MultiPoly:
        result = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            _, op, _ = self.take()
            right = self.unary()
            if op == "*":
                result = result * right
            else:
                if not right.is_constant() or not right:
                    raise PolynomialSyntaxError("Division only by nonzero constants")
                result = result / right.constant_value
        return result

    def unary(self) -> MultiPoly:
        if self.peek() == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> MultiPoly:
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            kind, value, _ = self.take()
            if kind != "number" or not value.isdigit():
                raise PolynomialSyntaxError(
                    f"Exponent must be an integer, not {value!r}"
                )
            base = base ** int(value)
        return base

    def atom(self) -> MultiPoly:
        kind, value, match = self.take()
        if kind == "number":
            number: Any
            if self.kind == "exact":
                number = Fraction(value)
            else:
                number = float(value)
            return MultiPoly.constant(self.grading, number, self.kind)
        if kind == "imag":
            unit = QQ_I(0, 1) if self.kind == "exact" else 1j
            return MultiPoly.constant(self.grading, unit, self.kind)
        if kind == "var":
            first, second = match.group("first"), match.group("second")
            if second is None:
                if len(self.grading.blocks) != 1:
                    raise PolynomialSyntaxError(
                        f"Variable {value!r} needs a block index (x<block>_<idx>)"
                    )
                block, idx = 0, int(first)
            else:
                block, idx = int(first), int(second)
            try:
                return MultiPoly.variable(self.grading, block, idx, self.kind)
            except ValueError as exc:
                raise PolynomialSyntaxError(f"Unknown variable {value!r}") from exc
        if value == "(":
            inner = self.expression()
            self.expect_op(")")
            return inner
        raise PolynomialSyntaxError(f"Unexpected token {value!r} in {self.text!r}")


def parse_poly(
    text: str, grading: BlockGrading, kind: CoeffKind = "exact"
) -> MultiPoly:
    """
    Read a polynomial written with + - * / ^, parentheses, the imaginary unit
    i, and variables x<block>_<idx> (or x<idx> for a single block).
    """
    return _Parser(text, grading, kind).parse()


def infer_grading(text: str, minimum: int = 3) -> BlockGrading:
    """
    Single-block grading large enough for every x<idx> in the text.
    """
    indices = [
        int(match.group(2) if match.group(2) is not None else match.group(1))
        for match in re.finditer(r"x(\d+)(?:_(\d+))?", text)
    ]
    size = max([minimum] + [i + 1 for i in indices])
    return BlockGrading.single(size)


# Exact algebra on sympy's sparse polynomial rings over QQ(i)


@lru_cache(maxsize=None)
def exact_ring(nvars: int) -> PolyRing:
    """
    Lex-ordered ring QQ(i)[v0, v1, ...]. Its monomials are the exponent tuples
    of a MultiPoly with the same number of variables.
    """
    return PolyRing([f"v{i}" for i in range(nvars)], QQ_I)


def _require_exact(*polys: MultiPoly) -> None:
    for poly in polys:
        if poly.kind != "exact":
            raise CoefficientKindError("Operation needs exact coefficients")


def to_ring(poly: MultiPoly) -> PolyElement:
    _require_exact(poly)
    return exact_ring(poly.grading.nvars).from_dict(dict(poly.terms))


def from_ring(element: PolyElement, grading: BlockGrading) -> MultiPoly:
    if element.ring.ngens != grading.nvars:
        raise GradingMismatchError(
            f"Ring has {element.ring.ngens} generators, grading {grading.nvars}"
        )
    terms = {tuple(monom): gaussian(c) for monom, c in element.items()}
    return MultiPoly._raw(grading, terms, "exact")


def divide_exact(dividend: MultiPoly, divisor: MultiPoly) -> MultiPoly:
    _require_exact(dividend, divisor)
    dividend._check_compatible(divisor)
    if not divisor:
        raise ZeroDivisionError("division by the zero polynomial")
    try:
        quotient = to_ring(dividend).exquo(to_ring(divisor))
    except ExactQuotientFailed:
        raise NotDivisibleError(f"{divisor} does not divide {dividend}") from None
    return from_ring(quotient, dividend.grading)


def divides(divisor: MultiPoly, dividend: MultiPoly) -> bool:
    try:
        divide_exact(dividend, divisor)
    except NotDivisibleError:
        return False
    return True


def _monic(poly: MultiPoly) -> MultiPoly:
    if not poly:
        return poly
    return poly / poly.leading_coefficient()


def poly_gcd(a: MultiPoly, b: MultiPoly) -> MultiPoly:
    """
    Greatest common divisor with leading (lex) coefficient 1.
    """
    _require_exact(a, b)
    a._check_compatible(b)
    return _monic(from_ring(to_ring(a).gcd(to_ring(b)), a.grading))


def squarefree_part(poly: MultiPoly) -> MultiPoly:
    """
    Product of the distinct irreducible factors, with leading coefficient 1.
    """
    _require_exact(poly)
    if not poly:
        raise ValueError("The zero polynomial has no squarefree part")
    return _monic(from_ring(to_ring(poly).sqf_part(), poly.grading))


def monomial_content(poly: MultiPoly) -> Exponent:
    if not poly:
        return (0,) * poly.grading.nvars
    exponents = list(poly.terms)
    return tuple(min(e[var] for e in exponents) for var in range(poly.grading.nvars))


def strip_monomial_content(poly: MultiPoly) -> MultiPoly:
    common = monomial_content(poly)
    if not any(common):
        return poly
    terms = {
        tuple(a - b for a, b in zip(exponent, common)): coefficient
        for exponent, coefficient in poly.terms.items()
    }
    return MultiPoly._raw(poly.grading, terms, poly.kind)


def determinant(matrix: Sequence[Sequence[Any]]) -> Any:
    """
    Exact determinant over QQ(i), or over QQ(i)[v] when any entry is an exact
    polynomial; float entries go through numpy.
    """
    rows = [list(row) for row in matrix]
    n = len(rows)
    if any(len(row) != n for row in rows):
        raise ValueError("Determinant needs a square matrix")
    if n == 0:
        return QQ_I.one
    flat = [v for row in rows for v in row]
    polys = [v for v in flat if isinstance(v, MultiPoly)]
    if polys:
        _require_exact(*polys)
        for poly in polys[1:]:
            polys[0]._check_compatible(poly)
        grading = polys[0].grading
        ring = exact_ring(grading.nvars)

        def lift(v: Any) -> PolyElement:
            if isinstance(v, MultiPoly):
                return to_ring(v)
            return ring.ground_new(gaussian(v))

        entries = [[lift(v) for v in row] for row in rows]
        value = DomainMatrix(entries, (n, n), ring.to_domain()).det()
        return from_ring(value, grading)
    if all(_is_exact_scalar(v) for v in flat):
        scalars = [[gaussian(v) for v in row] for row in rows]
        return DomainMatrix(scalars, (n, n), QQ_I).det()
    values = np.array([[to_complex(v) for v in row] for row in rows], dtype=complex)
    return complex(np.linalg.det(values))


def block_coefficients(poly: MultiPoly, block: int | str) -> dict[Exponent, MultiPoly]:
    """
    View poly as a polynomial in one block with coefficients on the
    remaining blocks.
    """
    index = poly.grading.block_index(block)
    rest = poly.grading.without(index)
    start = poly.grading.offsets[index]
    size = poly.grading.sizes[index]
    groups: dict[Exponent, dict[Exponent, Coefficient]] = {}
    for exponent, coefficient in poly.terms.items():
        inner = exponent[start : start + size]
        outer = exponent[:start] + exponent[start + size :]
        groups.setdefault(inner, {})[outer] = coefficient
    return {
        inner: MultiPoly._raw(rest, terms, poly.kind) for inner, terms in groups.items()
    }


def monomials(nvars: int, degree: int) -> list[Exponent]:
    """
    All exponents of the given total degree, in graded-lex order.
    """
    if nvars == 1:
        return [(degree,)]
    out: list[Exponent] = []
    for first in range(degree, -1, -1):
        for rest in monomials(nvars - 1, degree - first):
            out.append((first,) + rest)
    return out


@dataclass(frozen=True)
class DegreeData:
    """
    Intersection numbers of a hypersurface X of degree d in P^m with
    L = O(1)|X, n = m - 1.
    """

    ambient_dim: int
    degree: int
    deg_k: int
    volume: Fraction
    mu: Fraction
    chow_degrees: tuple[int, ...]
    disc_degrees: tuple[int, ...]
    nominal_disc_degrees: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.degree < 2:
            raise ValueError(f"Degree must be at least 2, got {self.degree}")

    @property
    def dim(self) -> int:
        return self.ambient_dim - 1

    @property
    def degree_discrepancy(self) -> bool:
        return self.disc_degrees != self.nominal_disc_degrees
