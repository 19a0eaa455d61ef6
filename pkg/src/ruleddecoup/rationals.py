"""Exact rational helpers: dyadic scales, integer roots, and power comparisons.

All partition geometry in this package is carried in `fractions.Fraction`
so that tiling, determinants, and box inclusions can be checked without
rounding.  Quantities of the form ``delta**(p/q)`` are irrational in
general; instead of approximating them inside predicates we compare
``x <= c * delta**(p/q)`` by cross-raising both sides to integer powers.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction

Rat = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)
TWO = Fraction(2)


def parse_scale(text) -> Fraction:
    """Parse a scale given as '2^-12', a fraction 'p/q', or a decimal string.

    Decimal inputs are normalized to the exact binary rational float(text)
    would round to only when they are already exact in binary; otherwise
    the exact decimal fraction is kept.
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    s = str(text).strip()
    m = re.fullmatch(r"2\^(-?\d+)", s)
    if m:
        e = int(m.group(1))
        return Fraction(2) ** e
    if "/" in s:
        num, den = s.split("/")
        return Fraction(int(num), int(den))
    return Fraction(s)  # exact decimal


def format_scale(x: Fraction) -> str:
    """Inverse of parse_scale, preferring the '2^k' form for powers of two."""
    if x > 0 and x.numerator == 1 and (x.denominator & (x.denominator - 1)) == 0:
        return f"2^{-(x.denominator.bit_length() - 1)}"
    if x > 0 and x.denominator == 1 and (x.numerator & (x.numerator - 1)) == 0:
        return f"2^{x.numerator.bit_length() - 1}"
    return f"{x.numerator}/{x.denominator}"


def is_dyadic(x: Fraction) -> bool:
    d = x.denominator
    return (d & (d - 1)) == 0


def integer_nth_root(a: int, k: int) -> int:
    """Largest r >= 0 with r**k <= a (a >= 0, k >= 1)."""
    if a < 0:
        raise ValueError("negative radicand")
    if k == 1 or a in (0, 1):
        return a
    if k == 2:
        return math.isqrt(a)
    r = int(round(a ** (1.0 / k))) if a.bit_length() < 900 else 1 << (a.bit_length() // k)
    r = max(r, 1)
    # Newton iteration on integers, then a final exact adjustment.
    while True:
        rk1 = r ** (k - 1)
        nr = ((k - 1) * r + a // rk1) // k
        if nr >= r:
            break
        r = nr
    while r ** k > a:
        r -= 1
    while (r + 1) ** k <= a:
        r += 1
    return r


def nth_root_floor(x: Fraction, k: int, bits: int = 48) -> Fraction:
    """Largest multiple of 2**-bits r with r**k <= x.  Exact floor semantics."""
    if x < 0:
        raise ValueError("negative radicand")
    scaled = x * (Fraction(2) ** (k * bits))
    r_int = integer_nth_root(scaled.numerator // scaled.denominator, k)
    return Fraction(r_int, 2 ** bits)


def sqrt_floor(x: Fraction, bits: int = 48) -> Fraction:
    return nth_root_floor(x, 2, bits)


def sqrt_ceil(x: Fraction, bits: int = 48) -> Fraction:
    r = sqrt_floor(x, bits)
    if r * r == x:
        return r
    return r + Fraction(1, 2 ** bits)


def cmp_pow(x: Fraction, base: Fraction, expo: Fraction, scale: Fraction = ONE) -> int:
    """Exact sign of x - scale * base**expo for x, scale >= 0, base > 0, expo >= 0.

    Cross-raises to integer powers: x <= s*b^(p/q)  <=>  (x/s)^q <= b^p.
    """
    if x < 0:
        return -1
    if scale <= 0:
        raise ValueError("scale must be positive")
    p, q = expo.numerator, expo.denominator
    lhs = (x / scale) ** q
    rhs = base ** p
    if lhs < rhs:
        return -1
    if lhs > rhs:
        return 1
    return 0


def le_pow(x: Fraction, base: Fraction, expo: Fraction, scale: Fraction = ONE) -> bool:
    return cmp_pow(x, base, expo, scale) <= 0


def cmp_roots(a: Fraction, p: int, b: Fraction, q: int) -> int:
    """Exact sign of a**(1/p) - b**(1/q) for a, b >= 0 and p, q >= 1."""
    l = math.lcm(p, q)
    lhs = a ** (l // p)
    rhs = b ** (l // q)
    if lhs < rhs:
        return -1
    if lhs > rhs:
        return 1
    return 0


def pow2_floor(x: Fraction):
    """Largest power of two <= x, returned as (value, exponent)."""
    if x <= 0:
        raise ValueError("needs positive input")
    e = 0
    v = Fraction(1)
    if x >= 1:
        while v * 2 <= x:
            v *= 2
            e += 1
    else:
        while v > x:
            v /= 2
            e -= 1
    return v, e


def tile_count(total: Fraction, target_len: Fraction) -> int:
    """Number of equal pieces of length <= target_len that tile a segment
    of length `total` exactly: ceil(total / target_len)."""
    r = total / target_len
    return int(math.ceil(r)) if r.denominator != 1 else int(r)
