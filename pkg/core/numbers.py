"""Exact scalars: rationals, Gaussian rationals and certified moduli."""

from dataclasses import dataclass
from fractions import Fraction
from math import isqrt
from numbers import Rational
from typing import Any, Union

RationalLike = Union[int, Fraction, str]


def parse_rational(value: Any) -> Fraction:
    """Parse ints, "p/q" or decimal strings, and JSON floats (by their repr)."""
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValueError(f"not a rational: {value!r}")


@dataclass(frozen=True, slots=True)
class Gaussian:
    """A complex number with rational real and imaginary parts."""

    re: Fraction
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", Fraction(self.re))
        object.__setattr__(self, "im", Fraction(self.im))

    @classmethod
    def of(cls, value: Any) -> "Gaussian":
        if isinstance(value, Gaussian):
            return value
        if isinstance(value, (list, tuple)) and len(value) == 2:
            return cls(parse_rational(value[0]), parse_rational(value[1]))
        if isinstance(value, dict):
            return cls(parse_rational(value.get("re", 0)), parse_rational(value.get("im", 0)))
        return cls(parse_rational(value))

    @property
    def is_real(self) -> bool:
        return self.im == 0

    def __eq__(self, other: Any) -> bool:
        if isinstance(other, Gaussian):
            return self.re == other.re and self.im == other.im
        if isinstance(other, Rational):
            return self.im == 0 and self.re == other
        return NotImplemented

    def __hash__(self) -> int:
        # Real Gaussians hash like the equal Fraction.
        return hash(self.re) if self.im == 0 else hash((self.re, self.im))

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def norm(self) -> Fraction:
        """Squared modulus."""
        return self.re * self.re + self.im * self.im

    def __add__(self, other: Any) -> "Gaussian":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return Gaussian(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Gaussian":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return Gaussian(self.re - other.re, self.im - other.im)

    def __rsub__(self, other: Any) -> "Gaussian":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return other - self

    def __neg__(self) -> "Gaussian":
        return Gaussian(-self.re, -self.im)

    def __mul__(self, other: Any) -> "Gaussian":
        if isinstance(other, Rational):
            return Gaussian(self.re * other, self.im * other)
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return Gaussian(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Gaussian":
        if isinstance(other, Rational):
            if other == 0:
                raise ZeroDivisionError("division of a Gaussian rational by zero")
            return Gaussian(self.re / other, self.im / other)
        other = _coerce(other)
        if other is None:
            return NotImplemented
        n = other.norm()
        if n == 0:
            raise ZeroDivisionError("division of a Gaussian rational by zero")
        return Gaussian(
            (self.re * other.re + self.im * other.im) / n,
            (self.im * other.re - self.re * other.im) / n,
        )

    def __str__(self) -> str:
        if self.im == 0:
            return str(self.re)
        sign = "+" if self.im >= 0 else "-"
        return f"{self.re}{sign}{abs(self.im)}i"


ZERO = Gaussian(0)
ONE = Gaussian(1)


def _coerce(value: Any) -> Gaussian | None:
    if isinstance(value, Gaussian):
        return value
    if isinstance(value, Rational):
        return Gaussian(Fraction(value))
    return None


def sqrt_upper(x: Fraction, bits: int = 64) -> tuple[Fraction, bool]:
    """Smallest rational upper bound of sqrt(x) on a 2**-bits grid; exact when possible.

    Returns (bound, exact).
    """
    if x < 0:
        raise ValueError("square root of a negative rational")
    num, den = x.numerator, x.denominator
    # sqrt(num/den) = sqrt(num*den)/den
    radicand = num * den
    root = isqrt(radicand)
    if root * root == radicand:
        return Fraction(root, den), True
    scale = 1 << bits
    scaled = isqrt(radicand * scale * scale) + 1
    return Fraction(scaled, den * scale), False


def modulus(z: Gaussian | Fraction | float, bits: int = 64) -> Fraction | float:
    """|z| exactly for rational moduli, else a certified upper bound."""
    if isinstance(z, (float, complex)):
        return abs(z)
    if isinstance(z, Rational):
        return abs(Fraction(z))
    if z.im == 0:
        return abs(z.re)
    if z.re == 0:
        return abs(z.im)
    return sqrt_upper(z.norm(), bits)[0]


def saturate(x: Fraction | float) -> Fraction | float:
    """x / (1 + x), the bounded transform used by both metrics."""
    return x / (1 + x)


def to_float(x: Any) -> float | complex:
    if isinstance(x, Gaussian):
        return float(x.re) if x.im == 0 else complex(x)
    if isinstance(x, complex):
        return x
    return float(x)


def weighted(weight: Any, value: Any) -> Any:
    """weight * value, falling back to floats when the weight is inexact."""
    if isinstance(weight, float):
        return weight * to_float(value)
    return weight * value


def canonical(x: Any) -> Any:
    """Exact reals as Fraction, Gaussians only when non-real; other values unchanged."""
    if isinstance(x, bool):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, Gaussian) and x.im == 0:
        return x.re
    return x


def is_exact(x: Any) -> bool:
    return isinstance(x, (int, Fraction, Gaussian))
