"""Minimal exact polynomial arithmetic.

Univariate polynomials carry the curve components (rational coefficients,
constant term first).  The tiny multivariate type supports the expanded
second-difference gap ``(component i+1) - (component i)^2`` whose certified
supremum drives the cylinder-error bounds; exact expansion is required
there because the leading quadratic terms cancel.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, Sequence, Tuple

from .rationals import Rat


class RatPoly:
    """Univariate polynomial with Fraction coefficients, constant term first."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable):
        cs = [Fraction(c) for c in coeffs]
        while len(cs) > 1 and cs[-1] == 0:
            cs.pop()
        self.coeffs = tuple(cs) if cs else (Fraction(0),)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, t) -> Fraction:
        t = Fraction(t)
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * t + c
        return acc

    def derivative(self, order: int = 1) -> "RatPoly":
        p = self
        for _ in range(order):
            if p.degree == 0:
                return RatPoly([0])
            p = RatPoly([j * c for j, c in enumerate(p.coeffs)][1:])
        return p

    def abs_coeff_sum(self) -> Fraction:
        """Bounds |p(t)| on [-1, 1]."""
        return sum(abs(c) for c in self.coeffs)

    def lipschitz_on_unit(self) -> Fraction:
        """Bounds |p'(t)| on [-1, 1]."""
        return self.derivative().abs_coeff_sum()

    def __eq__(self, other):
        return isinstance(other, RatPoly) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"RatPoly({[str(c) for c in self.coeffs]})"


def interpolate(points: Sequence[Tuple[Fraction, Fraction]]) -> RatPoly:
    """Interpolation through exact points (Newton divided differences)."""
    xs = [Fraction(x) for x, _ in points]
    ys = [Fraction(y) for _, y in points]
    n = len(xs)
    coef = ys[:]  # divided differences, in place
    for j in range(1, n):
        for i in range(n - 1, j - 1, -1):
            coef[i] = (coef[i] - coef[i - 1]) / (xs[i] - xs[i - j])
    # Horner expansion of the Newton form
    poly = [coef[n - 1]]
    for j in range(n - 2, -1, -1):
        new = [Fraction(0)] * (len(poly) + 1)
        for i, c in enumerate(poly):
            new[i + 1] += c
            new[i] -= xs[j] * c
        new[0] += coef[j]
        poly = new
    return RatPoly(poly)


Monomial = Tuple[int, ...]  # exponent vector


class MPoly:
    """Sparse multivariate polynomial: {exponent tuple: Fraction coefficient}.

    Variable 0 is t; variables 1..m are the ruling coefficients s_1..s_m
    (with s_0 folded in as an extra slot by callers that need it).
    """

    __slots__ = ("terms", "nvars")

    def __init__(self, nvars: int, terms: Dict[Monomial, Fraction] | None = None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for e, c in terms.items():
                if c != 0:
                    self.terms[tuple(e)] = Fraction(c)

    @classmethod
    def constant(cls, nvars: int, c) -> "MPoly":
        return cls(nvars, {tuple([0] * nvars): Fraction(c)})

    @classmethod
    def var(cls, nvars: int, idx: int, power: int = 1) -> "MPoly":
        e = [0] * nvars
        e[idx] = power
        return cls(nvars, {tuple(e): Fraction(1)})

    def __add__(self, other: "MPoly") -> "MPoly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return MPoly(self.nvars, out)

    def __sub__(self, other: "MPoly") -> "MPoly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) - c
        return MPoly(self.nvars, out)

    def __mul__(self, other: "MPoly") -> "MPoly":
        out: Dict[Monomial, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + c1 * c2
        return MPoly(self.nvars, out)

    def scale(self, c) -> "MPoly":
        c = Fraction(c)
        return MPoly(self.nvars, {e: cc * c for e, cc in self.terms.items()})

    def eval_point(self, point: Sequence) -> Fraction:
        vals = [Fraction(v) for v in point]
        acc = Fraction(0)
        for e, c in self.terms.items():
            term = c
            for v, p in zip(vals, e):
                if p:
                    term *= v ** p
            acc += term
        return acc

    def eval_box(self, box: Sequence[Tuple[Fraction, Fraction]]) -> Tuple[Fraction, Fraction]:
        """Exact interval enclosure of the polynomial over a product box.

        Monomial-wise: exact for each monomial, conservative across
        monomials (correlations dropped), hence always an outer bound.
        """
        lo_acc = Fraction(0)
        hi_acc = Fraction(0)
        for e, c in self.terms.items():
            lo, hi = Fraction(1), Fraction(1)
            for (a, b), p in zip(box, e):
                if p == 0:
                    continue
                lo, hi = _interval_mul(lo, hi, *_interval_pow(Fraction(a), Fraction(b), p))
            tlo, thi = (c * lo, c * hi) if c >= 0 else (c * hi, c * lo)
            lo_acc += tlo
            hi_acc += thi
        return lo_acc, hi_acc


def _interval_pow(a: Fraction, b: Fraction, p: int) -> Tuple[Fraction, Fraction]:
    if p == 1:
        return a, b
    if p % 2 == 1 or a >= 0:
        return a ** p, b ** p
    if b <= 0:
        return b ** p, a ** p
    return Fraction(0), max(a ** p, b ** p)


def _interval_mul(a, b, c, d) -> Tuple[Fraction, Fraction]:
    vals = (a * c, a * d, b * c, b * d)
    return min(vals), max(vals)
