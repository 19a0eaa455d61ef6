"""Polynomial curves in R^(n+1), their derivative frames, and nondegeneracy
certificates.

A curve phi: [-1,1] -> R^(n+1) with rational polynomial components generates
the ruled hypersurface

    y(t, s) = phi(t) + s_1 phi'(t) + ... + s_{n-1} phi^(n-1)(t),

thickened transversally by v * phi^(n+1)(t) / (n+1)! with |v| <= delta.
Everything here is exact: derivatives, frame matrices, determinants, and the
certificate bounds are Fractions end to end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple

from .polynomials import RatPoly, interpolate
from .rationals import Rat

__all__ = [
    "Curve",
    "NondegeneracyCertificate",
    "DegenerateCurveError",
    "moment_curve",
    "derivative",
    "frenet_matrix",
    "certify_nondegeneracy",
    "surface_point",
    "surface_point_ext",
    "neighborhood_point",
    "curve_to_json",
    "curve_from_json",
]


class DegenerateCurveError(ValueError):
    """Raised when the certified lower bound on the frame determinant is <= 0."""


@dataclass(frozen=True)
class NondegeneracyCertificate:
    """Certified bounds for a curve's derivative frame on [-1, 1].

    c            lower bound on det Phi(t) (exact Fraction)
    C_sq         upper bound on max_{1<=i<=n+2} ||phi^(i)(t)||^2
    C_top_sq     upper bound on ||phi^(n+2)(t)||^2 (zero for degree <= n+1)
    sigma_lb_sq  squared lower bound on the least singular value of Phi(t),
                 via sigma >= c * (n / ||Phi||_F^2)^((n-1)/2)
    grid_step    sampling resolution used for the sampled extrema
    """

    c: Fraction
    C_sq: Fraction
    C_top_sq: Fraction
    sigma_lb_sq: Fraction
    grid_step: Fraction

    @property
    def C(self) -> float:
        return math.sqrt(float(self.C_sq))

    @property
    def sigma_lb(self) -> float:
        return math.sqrt(float(self.sigma_lb_sq))


@dataclass(frozen=True)
class Curve:
    """Polynomial curve with exact rational coefficients on [-1, 1].

    components[i] is the (i+1)-th coordinate polynomial; ambient dimension
    is n+1 where n >= 2 is the surface dimension.
    """

    components: Tuple[RatPoly, ...]
    domain: Tuple[Fraction, Fraction] = (Fraction(-1), Fraction(1))

    def __post_init__(self):
        if len(self.components) < 3:
            raise ValueError("ambient dimension must be at least 3 (n >= 2)")

    @property
    def ambient_dim(self) -> int:
        return len(self.components)

    @property
    def n(self) -> int:
        return len(self.components) - 1

    def eval(self, t) -> Tuple[Fraction, ...]:
        t = Fraction(t)
        return tuple(p(t) for p in self.components)

    def deriv_eval(self, order: int, t) -> Tuple[Fraction, ...]:
        t = Fraction(t)
        return tuple(p.derivative(order)(t) for p in self.components)

    def is_moment(self) -> bool:
        expect = [[Fraction(0)] * i + [Fraction(1)] for i in range(1, self.ambient_dim + 1)]
        return all(list(p.coeffs) == e for p, e in zip(self.components, expect))


def moment_curve(n: int) -> Curve:
    """The curve t -> (t, t^2, ..., t^(n+1)); requires n >= 2."""
    if n < 2:
        raise ValueError("the ruled-surface constructions assume n >= 2")
    comps = [RatPoly([0] * i + [1]) for i in range(1, n + 2)]
    return Curve(tuple(comps))


def derivative(curve: Curve, order: int, t) -> Tuple[Fraction, ...]:
    """Exact order-th derivative of the curve at t (zero vector past degree)."""
    if order < 0:
        raise ValueError("order must be >= 0")
    return curve.deriv_eval(order, t)


def frenet_matrix(curve: Curve, t0) -> List[List[Fraction]]:
    """Matrix with column j equal to phi^(j)(t0) / j!, j = 1..n+1."""
    t0 = Fraction(t0)
    m = curve.ambient_dim
    cols = []
    for j in range(1, m + 1):
        fj = math.factorial(j)
        cols.append([c / fj for c in curve.deriv_eval(j, t0)])
    return [[cols[j][i] for j in range(m)] for i in range(m)]


def det_exact(matrix: Sequence[Sequence[Fraction]]) -> Fraction:
    """Fraction-free (Bareiss) determinant; exact for rational entries."""
    m = [[Fraction(x) for x in row] for row in matrix]
    size = len(m)
    denom = Fraction(1)
    # clear denominators row-wise to keep the elimination in integers
    for i, row in enumerate(m):
        l = math.lcm(*[c.denominator for c in row]) if row else 1
        denom *= l
        m[i] = [int(c * l) for c in row]
    prev = 1
    sign = 1
    for k in range(size - 1):
        if m[k][k] == 0:
            for r in range(k + 1, size):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return Fraction(0)
        for i in range(k + 1, size):
            for j in range(k + 1, size):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
            m[i][k] = 0
        prev = m[k][k]
    return Fraction(sign * m[size - 1][size - 1], 1) / denom


def _det_poly(curve: Curve) -> RatPoly:
    """det Phi(t) as an exact univariate polynomial (by interpolation)."""
    deg_bound = sum(max(p.degree - 1, 0) for p in curve.components) + 1
    nodes = [Fraction(i, deg_bound + 1) for i in range(-(deg_bound + 1), deg_bound + 2)][: deg_bound + 1]
    pts = [(x, det_exact(frenet_matrix(curve, x))) for x in nodes]
    return interpolate(pts)


def _grid(step: Fraction, lo=Fraction(-1), hi=Fraction(1)) -> List[Fraction]:
    n = int((hi - lo) / step)
    ts = [lo + k * step for k in range(n + 1)]
    if ts[-1] != hi:
        ts.append(hi)
    return ts


def certify_nondegeneracy(curve: Curve, grid_step=Fraction(1, 256)) -> NondegeneracyCertificate:
    """Certified frame bounds by dense sampling plus exact Lipschitz padding.

    c is monotone under grid refinement: the padding uses a full grid step
    L * h rather than L * h / 2, so halving h never decreases the certified
    value.  Raises DegenerateCurveError when the padded lower bound on
    det Phi is <= 0.
    """
    grid_step = Fraction(grid_step)
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    n = curve.n

    detp = _det_poly(curve)
    lip_det = detp.lipschitz_on_unit()
    ts = _grid(grid_step)
    det_min = min(detp(t) for t in ts)
    c = det_min - lip_det * grid_step
    if c <= 0:
        raise DegenerateCurveError(
            f"certified det lower bound {c} <= 0 at grid_step {grid_step}"
        )

    # ||phi^(i)(t)||^2 is a polynomial; pad its sampled max by an exact
    # Lipschitz constant per order.
    C_sq = Fraction(0)
    C_top_sq = Fraction(0)
    for order in range(1, n + 3):
        norm_sq = _sum_of_squares([p.derivative(order) for p in curve.components])
        samp = max(norm_sq(t) for t in ts)
        bound = samp + norm_sq.lipschitz_on_unit() * grid_step
        C_sq = max(C_sq, bound)
        if order == n + 2:
            C_top_sq = bound

    # Frobenius bound for ||Phi(t)||: entries are polynomials in t.
    frob_sq = _frame_frobenius_sq(curve)
    frob_samp = max(frob_sq(t) for t in ts)
    C_phi_sq = frob_samp + frob_sq.lipschitz_on_unit() * grid_step

    sigma_lb_sq = c * c * (Fraction(n) / C_phi_sq) ** (n - 1)
    return NondegeneracyCertificate(
        c=c, C_sq=C_sq, C_top_sq=C_top_sq, sigma_lb_sq=sigma_lb_sq, grid_step=grid_step
    )


def _sum_of_squares(polys: Sequence[RatPoly]) -> RatPoly:
    acc = RatPoly([0])
    for p in polys:
        sq = _poly_mul(p, p)
        acc = _poly_add(acc, sq)
    return acc


def _poly_mul(a: RatPoly, b: RatPoly) -> RatPoly:
    out = [Fraction(0)] * (a.degree + b.degree + 1)
    for i, ca in enumerate(a.coeffs):
        for j, cb in enumerate(b.coeffs):
            out[i + j] += ca * cb
    return RatPoly(out)


def _poly_add(a: RatPoly, b: RatPoly) -> RatPoly:
    size = max(a.degree, b.degree) + 1
    out = [Fraction(0)] * size
    for i, c in enumerate(a.coeffs):
        out[i] += c
    for i, c in enumerate(b.coeffs):
        out[i] += c
    return RatPoly(out)


def _frame_frobenius_sq(curve: Curve) -> RatPoly:
    acc = RatPoly([0])
    m = curve.ambient_dim
    for j in range(1, m + 1):
        fj = math.factorial(j)
        for p in curve.components:
            col = p.derivative(j)
            scaled = RatPoly([c / fj for c in col.coeffs])
            acc = _poly_add(acc, _poly_mul(scaled, scaled))
    return acc


def surface_point(curve: Curve, t, s: Sequence) -> Tuple[Fraction, ...]:
    """phi(t) + sum_j s_j phi^(j)(t) with len(s) == n-1."""
    n = curve.n
    s = [Fraction(x) for x in s]
    if len(s) != n - 1:
        raise ValueError(f"expected {n - 1} ruling coefficients, got {len(s)}")
    pt = list(curve.eval(t))
    for j, sj in enumerate(s, start=1):
        if sj == 0:
            continue
        dj = curve.deriv_eval(j, t)
        pt = [a + sj * b for a, b in zip(pt, dj)]
    return tuple(pt)


def surface_point_ext(curve: Curve, t, s0, s: Sequence) -> Tuple[Fraction, ...]:
    """s0 * phi(t) + sum_j s_j phi^(j)(t); s0 = 1 recovers surface_point."""
    n = curve.n
    s = [Fraction(x) for x in s]
    if len(s) != n - 1:
        raise ValueError(f"expected {n - 1} ruling coefficients, got {len(s)}")
    s0 = Fraction(s0)
    pt = [s0 * c for c in curve.eval(t)]
    for j, sj in enumerate(s, start=1):
        if sj == 0:
            continue
        dj = curve.deriv_eval(j, t)
        pt = [a + sj * b for a, b in zip(pt, dj)]
    return tuple(pt)


def neighborhood_point(curve: Curve, t, s: Sequence, v, delta) -> Tuple[Fraction, ...]:
    """Surface point plus the transverse offset v * phi^(n+1)(t) / (n+1)!.

    Requires |v| <= delta; for the moment curve the offset is v * e_{n+1}.
    """
    v = Fraction(v)
    delta = Fraction(delta)
    if abs(v) > delta:
        raise ValueError(f"|v|={v} exceeds the neighborhood width {delta}")
    base = surface_point(curve, t, s)
    if v == 0:
        return base
    top = curve.deriv_eval(curve.n + 1, t)
    fn = math.factorial(curve.n + 1)
    return tuple(a + v * b / fn for a, b in zip(base, top))


def curve_to_json(curve: Curve) -> str:
    obj = {
        "n": curve.n,
        "components": [
            [[c.numerator, c.denominator] for c in p.coeffs] for p in curve.components
        ],
    }
    return json.dumps(obj, sort_keys=True)


def curve_from_json(text: str) -> Curve:
    obj = json.loads(text)
    comps = tuple(
        RatPoly([Fraction(num, den) for num, den in coeffs]) for coeffs in obj["components"]
    )
    curve = Curve(comps)
    if curve.n != obj["n"]:
        raise ValueError("component count inconsistent with declared dimension")
    return curve
