"""Small exact-arithmetic helpers used throughout the package.

Rationals cross process boundaries as "num/den" strings (a bare integer is
accepted on input).  Floats are rejected wherever exactness matters; the
parser here is the single gate.
"""

from __future__ import annotations

import math
from fractions import Fraction

from .errors import ValidationError

__all__ = [
    "parse_fraction",
    "fraction_str",
    "ceil_fraction",
    "floor_fraction",
    "integer_root",
    "fraction_root",
    "floor_root",
]


def parse_fraction(text: str) -> Fraction:
    """Parse "num/den" or a bare integer; reject anything else (floats included)."""
    s = text.strip()
    num, slash, den = s.partition("/")
    try:
        if slash:
            value = Fraction(int(num), int(den))
        else:
            value = Fraction(int(num))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"not an exact rational: {text!r}") from exc
    return value


def fraction_str(value: Fraction) -> str:
    """Canonical "num/den" form (denominator kept even when it is 1)."""
    return f"{value.numerator}/{value.denominator}"


def ceil_fraction(value: Fraction) -> int:
    return -((-value.numerator) // value.denominator)


def floor_fraction(value: Fraction) -> int:
    return value.numerator // value.denominator


def integer_root(value: int, degree: int) -> int | None:
    """Exact d-th root of a nonnegative integer, or None if not a perfect power."""
    if value < 0 or degree < 1:
        raise ValidationError("integer_root wants value >= 0 and degree >= 1")
    if value in (0, 1) or degree == 1:
        return value
    root = round(value ** (1.0 / degree))
    # float seed can be off by a step near perfect powers
    for cand in (root - 1, root, root + 1):
        if cand >= 0 and cand**degree == value:
            return cand
    return None


def fraction_root(value: Fraction, degree: int) -> Fraction | None:
    """Exact d-th root of a nonnegative rational, or None when irrational."""
    num = integer_root(value.numerator, degree)
    if num is None:
        return None
    den = integer_root(value.denominator, degree)
    if den is None:
        return None
    return Fraction(num, den)


def floor_root(value: Fraction | int, degree: int) -> int:
    """Largest integer s >= 0 with s**degree <= value, by exact bisection."""
    value = Fraction(value)
    if value < 0 or degree < 1:
        raise ValidationError("floor_root wants value >= 0 and degree >= 1")
    num, den = value.numerator, value.denominator
    whole = num // den
    if whole == 0:
        return 0
    hi = 1 << (whole.bit_length() // degree + 1)  # hi**degree > value
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid**degree * den <= num:
            lo = mid
        else:
            hi = mid
    return lo


def _check_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def log2_lower_fraction(n: int, bits: int = 40) -> Fraction:
    """Rational lower bound on log2(n); exact when n is a power of two.

    The float seed is accurate to ~2**-50 relative, far inside the 2**-bits
    slack taken here, so the returned value never exceeds log2(n).
    """
    if n < 2:
        raise ValidationError("log2 bound wants n >= 2")
    if _check_pow2(n):
        return Fraction(n.bit_length() - 1)
    scaled = int(math.log2(n) * 2**bits) - 1
    return Fraction(scaled, 2**bits)


__all__.append("log2_lower_fraction")
