"""Caps, affine maps, and the geometric predicates behind the partitions.

A cap is a patch of the ruled surface cut by a t-interval and a box of
ruling coefficients (the "s-box").  The three map families that move caps
around are

  * translations  A(xi) = s0*phi(t0) + sum_j phi^(j)(t0)/j! * xi_j,
    which shift the t-coordinate of the extended parametrization,
  * diagonal dilations  xi_i -> d^(i-pivot) * xi_i,
  * curve maps  M(x) = Phi(t0)^(-1) (x - phi(t0)),
    which send a general curve-generated surface into a perturbation of
    the moment surface.

Predicates (standardization, cylinder gap, flatness, rectangularity,
overlap counting) are exact over Fractions; sup bounds are certified via
monomial-wise interval evaluation with targeted grouping of the cancelling
quadratic terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .curve import Curve, DegenerateCurveError, det_exact, frenet_matrix, moment_curve
from .polynomials import MPoly
from .rationals import ONE, Rat, ZERO, cmp_pow, is_dyadic, le_pow, sqrt_floor

__all__ = [
    "SCoord",
    "SBox",
    "Cap",
    "AffineMap",
    "CylinderError",
    "translation_map",
    "dilation_map",
    "apply_map",
    "c_constant",
    "is_standardized",
    "cylinder_error",
    "tail_bound_check",
    "flatness_deficit",
    "is_almost_rectangular",
    "overlap_counts",
    "curve_map",
    "component_gap_poly",
]


# ---------------------------------------------------------------------------
# s-boxes and caps


@dataclass(frozen=True)
class SCoord:
    """One ruling-coefficient interval, half-open in the signed coordinate.

    kind 'dyadic'   : |s| in [2^-k, 2^(1-k)), carries the index k
    kind 'zero'     : |s| in [0, hi)  (the innermost slot of each axis)
    kind 'interval' : |s| in [lo, hi) (images under maps, J-refinements)
    sign +1 / -1 mirrors the interval about the origin; the zero slot
    belongs to the + side as [0, hi) and to the - side as [-hi, 0).
    """

    kind: str
    sign: int = 1
    k: Optional[int] = None
    lo: Fraction = ZERO
    hi: Fraction = ZERO

    @classmethod
    def dyadic(cls, k: int, sign: int = 1) -> "SCoord":
        return cls("dyadic", sign, k, Fraction(1, 2 ** k), Fraction(2, 2 ** k))

    @classmethod
    def zero_anchored(cls, hi, sign: int = 1) -> "SCoord":
        return cls("zero", sign, None, ZERO, Fraction(hi))

    @classmethod
    def interval(cls, lo, hi, sign: int = 1) -> "SCoord":
        return cls("interval", sign, None, Fraction(lo), Fraction(hi))

    @property
    def abs_lo(self) -> Fraction:
        return self.lo

    @property
    def abs_hi(self) -> Fraction:
        return self.hi

    def signed_interval(self) -> Tuple[Fraction, Fraction]:
        """Half-open [lo, hi) in the signed coordinate."""
        if self.sign > 0:
            return self.lo, self.hi
        return -self.hi, -self.lo

    def scaled(self, factor: Fraction) -> "SCoord":
        factor = Fraction(factor)
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "zero":
            return SCoord.zero_anchored(self.hi * factor, self.sign)
        return SCoord.interval(self.lo * factor, self.hi * factor, self.sign)

    def measure(self) -> Fraction:
        return self.hi - self.lo


@dataclass(frozen=True)
class SBox:
    """Product of SCoord intervals for s_1 .. s_{n-1}."""

    coords: Tuple[SCoord, ...]

    @property
    def alpha(self) -> Tuple[int, ...]:
        return tuple(c.sign for c in self.coords)

    def abs_his(self) -> Tuple[Fraction, ...]:
        return tuple(c.abs_hi for c in self.coords)

    def abs_los(self) -> Tuple[Fraction, ...]:
        return tuple(c.abs_lo for c in self.coords)

    def measure(self) -> Fraction:
        m = ONE
        for c in self.coords:
            m *= c.measure()
        return m

    def key(self):
        return tuple((c.kind, c.sign, c.lo, c.hi) for c in self.coords)


@dataclass(frozen=True)
class Cap:
    """A t-interval x s-box patch of the surface at neighborhood scale delta.

    s0 is the extended-parametrization coefficient (1 for the plain
    parametrization); lineage lists the ids of maps applied since the
    original coordinates, newest last.
    """

    n: int
    t_lo: Fraction
    t_hi: Fraction
    sbox: SBox
    delta: Fraction
    s0: Fraction = ONE
    lineage: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.t_hi <= self.t_lo:
            raise ValueError("t-interval must have positive length")
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        if len(self.sbox.coords) != self.n - 1:
            raise ValueError("s-box dimension must be n-1")

    @property
    def t_len(self) -> Fraction:
        return self.t_hi - self.t_lo

    def measure(self) -> Fraction:
        return self.t_len * self.sbox.measure()

    def in_starting_position(self) -> bool:
        return self.t_lo == 0


@dataclass(frozen=True)
class AffineMap:
    """(n+1)x(n+1) rational matrix plus offset, with exact determinant."""

    matrix: Tuple[Tuple[Fraction, ...], ...]
    offset: Tuple[Fraction, ...]
    kind: str  # Translation | Dilation | CurveMap | Composite
    det: Fraction
    map_id: str
    params: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return len(self.offset)

    def __call__(self, xi: Sequence) -> Tuple[Fraction, ...]:
        xi = [Fraction(x) for x in xi]
        out = []
        for row, off in zip(self.matrix, self.offset):
            out.append(sum(a * b for a, b in zip(row, xi)) + off)
        return tuple(out)

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self after other: (self . other)(x) = self(other(x))."""
        m = len(self.offset)
        mat = tuple(
            tuple(
                sum(self.matrix[i][k] * other.matrix[k][j] for k in range(m))
                for j in range(m)
            )
            for i in range(m)
        )
        off = self(other.offset)
        return AffineMap(
            mat, off, "Composite", self.det * other.det,
            f"({self.map_id}.{other.map_id})",
        )

    def inverse(self) -> "AffineMap":
        if self.det == 0:
            raise ValueError("singular map")
        m = len(self.offset)
        inv = _invert_matrix(self.matrix)
        off = tuple(-sum(inv[i][j] * self.offset[j] for j in range(m)) for i in range(m))
        return AffineMap(inv, off, self.kind, ONE / self.det, f"{self.map_id}^-1",
                         dict(self.params))

    def is_identity(self) -> bool:
        m = len(self.offset)
        return (
            all(self.offset[i] == 0 for i in range(m))
            and all(self.matrix[i][j] == (1 if i == j else 0) for i in range(m) for j in range(m))
        )


def _invert_matrix(matrix) -> Tuple[Tuple[Fraction, ...], ...]:
    m = len(matrix)
    aug = [[Fraction(matrix[i][j]) for j in range(m)] + [Fraction(int(i == j)) for j in range(m)]
           for i in range(m)]
    for col in range(m):
        piv = next((r for r in range(col, m) if aug[r][col] != 0), None)
        if piv is None:
            raise ValueError("singular map")
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [x / pv for x in aug[col]]
        for r in range(m):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return tuple(tuple(row[m:]) for row in aug)


# ---------------------------------------------------------------------------
# map constructors


def translation_map(n: int, t0, s0=ONE, curve: Optional[Curve] = None) -> AffineMap:
    """Affine shift of the t-coordinate: x_ext(t+t0, s0, s) = A(x_ext(t, s0, s)).

    The matrix has column j equal to phi^(j)(t0)/j!; the offset is
    s0 * phi(t0).  For the moment curve the matrix is lower triangular
    with unit diagonal, so det = 1.
    """
    t0 = Fraction(t0)
    s0 = Fraction(s0)
    if abs(t0) > 1 or abs(s0) > 1:
        raise ValueError("translation parameters must satisfy |t0| <= 1, |s0| <= 1")
    cv = curve if curve is not None else moment_curve(n)
    mat = tuple(tuple(row) for row in frenet_matrix(cv, t0))
    off = tuple(s0 * c for c in cv.eval(t0))
    det = det_exact(mat)
    return AffineMap(mat, off, "Translation", det, f"A[t0={t0},s0={s0}]",
                     {"t0": t0, "s0": s0})


def dilation_map(n: int, d, pivot: int = 0) -> AffineMap:
    """Diagonal map xi_i -> d^(i-pivot) xi_i for components i = 1..n+1."""
    d = Fraction(d)
    if d <= 0:
        raise ValueError("dilation ratio must be positive")
    if not (0 <= pivot <= n):
        raise ValueError("pivot out of range")
    m = n + 1
    diag = [d ** (i - pivot) for i in range(1, m + 1)]
    mat = tuple(tuple(diag[i] if i == j else ZERO for j in range(m)) for i in range(m))
    det = ONE
    for v in diag:
        det *= v
    return AffineMap(mat, tuple([ZERO] * m), "Dilation", det,
                     f"D[d={d},p={pivot}]", {"d": d, "pivot": pivot})


def apply_map(amap: AffineMap, cap: Cap) -> Cap:
    """Image cap under a translation or dilation (parametrization-preserving).

    Dilations with ratio d and pivot p send t -> d*t, s_j -> d^(j-p) s_j,
    s0 -> d^(-p) s0 and multiply the neighborhood scale by the last
    diagonal entry d^(n+1-p).  Translations shift the t-interval.
    """
    if amap.det == 0:
        raise ValueError("singular map")
    if amap.is_identity():
        return replace(cap, lineage=cap.lineage + (amap.map_id,))
    if amap.kind == "Dilation":
        d = amap.params["d"]
        pivot = amap.params["pivot"]
        coords = tuple(
            c.scaled(d ** (j - pivot)) for j, c in enumerate(cap.sbox.coords, start=1)
        )
        return Cap(
            n=cap.n,
            t_lo=cap.t_lo * d,
            t_hi=cap.t_hi * d,
            sbox=SBox(coords),
            delta=cap.delta * d ** (cap.n + 1 - pivot),
            s0=cap.s0 * d ** (-pivot),
            lineage=cap.lineage + (amap.map_id,),
        )
    if amap.kind == "Translation":
        if amap.params.get("s0", cap.s0) != cap.s0:
            raise ValueError("translation built for a different s0")
        t0 = amap.params["t0"]
        return replace(
            cap, t_lo=cap.t_lo + t0, t_hi=cap.t_hi + t0,
            lineage=cap.lineage + (amap.map_id,),
        )
    raise ValueError(
        f"apply_map supports Translation/Dilation caps; {amap.kind} maps move "
        "neighborhoods, not parametric boxes"
    )


def curve_map(curve: Curve, t0, sigma_lb_sq: Optional[Fraction] = None,
              C_top_sq: Optional[Fraction] = None):
    """M(x) = Phi(t0)^(-1) (x - phi(t0)), plus a certified residual coefficient.

    Applied to y(t, s) the map reproduces the moment-surface point
    x(t - t0, s) exactly when every component has degree <= n+1 (the Taylor
    expansion terminates); otherwise the deviation is bounded by

        r(dt, s) = coeff * (|dt|^(n+2)/(n+2)! + sum_i |s_i| |dt|^(n+2-i)/(n+2-i)!)

    with coeff = sup||phi^(n+2)|| / sigma_min.  Returns (map, residual_coeff)
    where residual_coeff is an exact upper bound (0 for low degree).
    """
    t0 = Fraction(t0)
    mat = frenet_matrix(curve, t0)
    det = det_exact(mat)
    if det == 0:
        raise DegenerateCurveError(f"frame is singular at t0={t0}")
    phi0 = curve.eval(t0)
    inv = _invert_matrix(tuple(tuple(row) for row in mat))
    m = curve.ambient_dim
    off = tuple(-sum(inv[i][j] * phi0[j] for j in range(m)) for i in range(m))
    amap = AffineMap(inv, off, "CurveMap", ONE / det, f"M[t0={t0}]", {"t0": t0})

    top_degree = max(p.degree for p in curve.components)
    if top_degree <= curve.n + 1:
        return amap, ZERO
    if sigma_lb_sq is None or C_top_sq is None:
        from .curve import certify_nondegeneracy

        cert = certify_nondegeneracy(curve)
        sigma_lb_sq, C_top_sq = cert.sigma_lb_sq, cert.C_top_sq
    # ceil sqrt of the exact ratio: certified upper bound on C_top / sigma
    ratio = Fraction(C_top_sq) / Fraction(sigma_lb_sq)
    coeff = sqrt_floor(ratio) + Fraction(1, 2 ** 48)
    return amap, coeff


def residual_bound(coeff: Fraction, n: int, dt_max: Fraction,
                   s_abs_his: Sequence[Fraction]) -> Fraction:
    """Evaluate the curve_map residual bound over |t-t0| <= dt_max."""
    total = dt_max ** (n + 2) / math.factorial(n + 2)
    for i, si in enumerate(s_abs_his, start=1):
        total += si * dt_max ** (n + 2 - i) / math.factorial(n + 2 - i)
    return coeff * total


# ---------------------------------------------------------------------------
# constants and predicates


def c_constant(i: int) -> Fraction:
    """Normalization pinning |s_{i-1}|: (i+1)! / (2 * (i!)^2).

    This is the value of |s_{i-1}| at which the quadratic coefficient of
    the gap (component i+1) - (component i)^2 vanishes.
    """
    if i < 2:
        raise ValueError("defined for i >= 2")
    return Fraction(math.factorial(i + 1), 2 * math.factorial(i) ** 2)


def is_standardized(cap: Cap, i: int, delta, eps: Fraction,
                    strict: Optional[bool] = None) -> Tuple[bool, str]:
    """Size normalization enabling the cylinder decoupling step at component i.

    Three clauses, checked in order against the cap's exact box bounds:
      1. |s_{i-1}| fits a window of length delta^eps/(30 (i-1)!) that sits
         inside [(4 (i-1)!)^-1, ((i-1)!)^-1] and contains c_i;
      2. |s_j| <= 2/j! for j <= i-2;
      3. t-length <= delta^eps/(30 (i+1)).
    For n <= 4 the relaxed low-dimensional variant is used (wider window,
    |s_j| <= 2, T <= delta^eps).  Returns (ok, witness-of-first-violation).
    """
    delta = Fraction(delta)
    eps = Fraction(eps)
    n = cap.n
    if not (2 <= i <= n):
        raise ValueError("component index out of range")
    if strict is None:
        strict = n >= 5
    fct = math.factorial(i - 1)
    ci = c_constant(i)
    coord = cap.sbox.coords[i - 2]
    lo, hi = coord.abs_lo, coord.abs_hi

    hull_lo = min(lo, ci)
    hull_hi = max(hi, ci)
    if strict:
        window_scale = Fraction(1, 30 * fct)
    else:
        window_scale = ONE  # window length ~ delta^eps
    ok_window = (
        le_pow(hull_hi - hull_lo, delta, eps, scale=window_scale)
        and hull_lo >= Fraction(1, 4 * fct)
        and hull_hi <= Fraction(1, fct)
    )
    if not ok_window:
        return False, "s_{i-1} window"

    for j in range(1, i - 1):
        bound = Fraction(2, math.factorial(j)) if strict else Fraction(2)
        if cap.sbox.coords[j - 1].abs_hi > bound:
            return False, "s_j bound"

    t_scale = Fraction(1, 30 * (i + 1)) if strict else ONE
    if not le_pow(cap.t_len, delta, eps, scale=t_scale):
        return False, "T bound"
    return True, ""


def component_gap_poly(n: int, i: int) -> MPoly:
    """Expanded gap (xi_{i+1} o x_ext) - (xi_i o x_ext)^2 with s_j = 0 for j >= n.

    Variables: 0 -> t, 1..n-1 -> s_1..s_{n-1}, n -> s_0 (extended coefficient).
    """
    if not (1 <= i <= n):
        raise ValueError("component index out of range")
    nv = n + 1

    def component(m: int) -> MPoly:
        acc = MPoly(nv)
        for j in range(0, m + 1):
            if 1 <= j <= n - 1:
                svar = MPoly.var(nv, j)
            elif j == 0:
                svar = MPoly.var(nv, n)  # s_0 slot
            else:
                continue  # s_n = s_{n+1} = 0
            falling = Fraction(math.factorial(m), math.factorial(m - j))
            term = svar.scale(falling) * MPoly.var(nv, 0, m - j) if m - j > 0 else svar.scale(falling)
            acc = acc + term
        return acc

    comp_next = component(i + 1)
    comp_i = component(i)
    return comp_next - comp_i * comp_i


@dataclass(frozen=True)
class CylinderError:
    """Certified bracket for sup |xi_{i+1} o x - (xi_i o x)^2| over a cap."""

    component_index: int
    sup_error: Fraction
    grid_lower: Fraction
    method: str = "interval+grouped-quadratic"


def cylinder_error(cap: Cap, i: int, grid_per_axis: int = 8) -> CylinderError:
    """Certified sup of the parabolic-cylinder gap at component i over the cap.

    The quadratic monomials s_{i-1} t^2 and s_{i-1}^2 t^2 nearly cancel on
    standardized caps, so they are bounded jointly in the factored form
    (i!)^2 (c_i - s_{i-1}) s_{i-1} t^2; the rest is bounded monomial-wise.
    A coarse grid supplies the attached lower bracket.
    """
    n = cap.n
    poly = component_gap_poly(n, i)
    box = _cap_box(cap)

    sup = ZERO
    if i >= 2:
        key_lin = _expo(n + 1, {0: 2, i - 1: 1})
        key_quad = _expo(n + 1, {0: 2, i - 1: 2})
        c_lin = poly.terms.get(key_lin, ZERO)
        c_quad = poly.terms.get(key_quad, ZERO)
        rest = MPoly(n + 1, {e: c for e, c in poly.terms.items()
                             if e not in (key_lin, key_quad)})
        if c_quad != 0:
            ci = -c_lin / c_quad  # equals c_constant(i) when i <= n-1
            s_iv = box[i - 1]
            t_iv = box[0]
            diff_lo, diff_hi = ci - s_iv[1], ci - s_iv[0]
            prod = _imul(_imul((diff_lo, diff_hi), s_iv), _ipow(t_iv, 2))
            grouped_lo = -c_quad * prod[1] if -c_quad >= 0 else -c_quad * prod[0]
            grouped_hi = -c_quad * prod[0] if -c_quad >= 0 else -c_quad * prod[1]
            lo_r, hi_r = rest.eval_box(box)
            sup = max(abs(lo_r + grouped_lo), abs(hi_r + grouped_hi))
        else:
            lo, hi = poly.eval_box(box)
            sup = max(abs(lo), abs(hi))
    else:
        lo, hi = poly.eval_box(box)
        sup = max(abs(lo), abs(hi))

    grid_lower = _grid_abs_max(poly, box, grid_per_axis)
    if grid_lower > sup:  # soundness: a sample can never exceed a true sup bound
        sup = grid_lower
    return CylinderError(i, sup, grid_lower)


def _expo(nv: int, assign: Dict[int, int]) -> Tuple[int, ...]:
    e = [0] * nv
    for k, v in assign.items():
        e[k] = v
    return tuple(e)


def _cap_box(cap: Cap) -> List[Tuple[Fraction, Fraction]]:
    box = [(cap.t_lo, cap.t_hi)]
    for c in cap.sbox.coords:
        box.append(c.signed_interval())
    box.append((cap.s0, cap.s0))
    return box


def _imul(a, b):
    vals = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return min(vals), max(vals)


def _ipow(iv, p):
    a, b = iv
    if p % 2 == 1 or a >= 0:
        return a ** p, b ** p
    if b <= 0:
        return b ** p, a ** p
    return ZERO, max(a ** p, b ** p)


def _grid_abs_max(poly: MPoly, box, per_axis: int) -> Fraction:
    axes = []
    total = 1
    for lo, hi in box:
        if hi == lo:
            axes.append([lo])
            continue
        npts = per_axis if total <= 4096 else 2
        total *= npts
        axes.append([lo + (hi - lo) * Fraction(k, npts - 1) for k in range(npts)])
    best = ZERO
    idx = [0] * len(axes)
    while True:
        pt = [axes[d][idx[d]] for d in range(len(axes))]
        val = abs(poly.eval_point(pt))
        if val > best:
            best = val
        d = 0
        while d < len(axes):
            idx[d] += 1
            if idx[d] < len(axes[d]):
                break
            idx[d] = 0
            d += 1
        if d == len(axes):
            return best


def tail_bound_check(M: int, m: int, t, s: Sequence) -> Tuple[bool, Fraction, Fraction]:
    """Geometric-series bound absorbing low-order ruling terms.

    Under |s_j| <= 1/j! (j <= m) and |t| <= 1/(2M), verifies

        |t^M + sum_{j=1..m} (M)_j s_j t^(M-j)|  <=  2 (M |t|)^(M-m).

    Returns (holds, lhs, rhs); hypothesis violations raise ValueError so
    they are reported distinctly from an inequality failure.
    """
    if not (1 <= m <= M):
        raise ValueError("need 1 <= m <= M")
    t = Fraction(t)
    s = [Fraction(x) for x in s]
    if len(s) < m:
        raise ValueError("need at least m ruling values")
    for j in range(1, m + 1):
        if abs(s[j - 1]) > Fraction(1, math.factorial(j)):
            raise ValueError(f"hypothesis violated: |s_{j}| > 1/{j}!")
    if abs(t) > Fraction(1, 2 * M):
        raise ValueError("hypothesis violated: |t| > 1/(2M)")
    lhs = t ** M
    for j in range(1, m + 1):
        lhs += Fraction(math.factorial(M), math.factorial(M - j)) * s[j - 1] * t ** (M - j)
    lhs = abs(lhs)
    rhs = 2 * (M * abs(t)) ** (M - m)
    return lhs <= rhs, lhs, rhs


def flatness_deficit(cap: Cap, anchor=None) -> Fraction:
    """Certified tangency gap of the cap, minimized over the anchor point.

    For anchor t0 the gap is

        sup  |t-t0|^(n+1) + sum_j (n+1)_j |s_j| |t-t0|^(n+1-j),

    attained at the corner of the box because every coefficient is
    nonnegative; the sup is exact.  With anchor=None the minimum over 33
    equispaced candidates is returned (the midpoint always wins since the
    gap is increasing in the anchor-to-endpoint distance).
    """
    n = cap.n
    s_his = cap.sbox.abs_his()

    def gap(t0: Fraction) -> Fraction:
        d = max(cap.t_hi - t0, t0 - cap.t_lo)
        total = d ** (n + 1)
        for j, sj in enumerate(s_his, start=1):
            falling = Fraction(math.factorial(n + 1), math.factorial(n + 1 - j))
            total += falling * sj * d ** (n + 1 - j)
        return total

    if anchor is not None:
        if anchor == "left":
            return gap(cap.t_lo)
        return gap(Fraction(anchor))
    candidates = [cap.t_lo + cap.t_len * Fraction(k, 32) for k in range(33)]
    mid = cap.t_lo + cap.t_len / 2
    if mid not in candidates:
        candidates.append(mid)
    return min(gap(t0) for t0 in candidates)


# frozen by the calibration sweep over n in {3,4,5} (see tests): the largest
#观察ed outer/inner side ratio on condition-passing caps, rounded up.
RECT_RATIO_BOUND = 50


def rectangularity_threshold(cap: Cap) -> Fraction:
    """The exact right-hand side of the rectangularity condition (factor 1/10).

    min over { i^-1 * r_i/r_{i-1} (2<=i<=n-1),  sqrt(delta/(r_{n-1} (n+1)!)),
    r_1 } with r_i = hi_i / 2 (equal to the dyadic lower endpoint for dyadic
    slots); the square root is kept implicit via exact squared comparisons by
    callers, here a certified floor is returned.
    """
    n = cap.n
    r = [c.abs_hi / 2 for c in cap.sbox.coords]
    vals = [r[0]]
    for i in range(2, n - 1 + 1):
        if r[i - 2] == 0:
            continue
        vals.append(Fraction(1, i) * r[i - 1] / r[i - 2])
    curv_sq = cap.delta / (r[n - 2] * math.factorial(n + 1))
    vals.append(sqrt_floor(curv_sq))
    return min(vals) / 10


def is_almost_rectangular(cap: Cap):
    """Test the rectangularity condition and build the certified box pair.

    Requires starting position (t-interval anchored at 0) and dyadic or
    zero-anchored s-box slots.  Returns (ok, inner_box, outer_box) where the
    boxes are lists of per-component (lo, hi) in the ambient coordinates:
    inner is the box guaranteed inside the cap neighborhood by the geometric
    construction (halved s-slots, height n!/2 * r_{n-1} * T, thickness
    delta), outer is a certified bounding box of the neighborhood.
    """
    n = cap.n
    if cap.t_lo != 0:
        raise ValueError("cap must be in starting position")
    for c in cap.sbox.coords:
        if c.kind == "interval":
            raise ValueError("rectangularity requires dyadic or zero-anchored slots")

    T = cap.t_len
    r = [c.abs_hi / 2 for c in cap.sbox.coords]
    ok = T <= r[0] / 10
    for i in range(2, n):
        if r[i - 2] == 0:
            continue
        if not T <= Fraction(1, 10 * i) * r[i - 1] / r[i - 2]:
            ok = False
            break
    if ok:
        # T <= (1/10) sqrt(delta / (r_{n-1} (n+1)!)) ... squared comparison:
        # wait: the curvature budget is sqrt(r_{n-1}... see callers) --
        # condition: T <= (1/10) (delta / (r_{n-1} (n+1)!))^(1/2)
        ok = (10 * T) ** 2 <= cap.delta / (r[n - 2] * math.factorial(n + 1))

    if not ok:
        return False, None, None

    inner = []
    for i, c in enumerate(cap.sbox.coords, start=1):
        fi = math.factorial(i)
        lo, hi = c.signed_interval()
        width = (hi - lo) / 2
        mid_lo = lo + width / 2
        if c.kind == "zero":
            # keep the zero anchor, halve the reach
            if c.sign > 0:
                inner.append((ZERO, fi * hi / 2))
            else:
                inner.append((fi * lo / 2, ZERO))
        else:
            inner.append((fi * mid_lo, fi * (mid_lo + width)))
    beta = Fraction(math.factorial(n), 2) * r[n - 2] * T
    sign_last = cap.sbox.coords[n - 2].sign
    inner.append((ZERO, beta) if sign_last > 0 else (-beta, ZERO))
    inner.append((-cap.delta, cap.delta))

    outer = _neighborhood_bounding_box(cap)
    return True, inner, outer


def _neighborhood_bounding_box(cap: Cap) -> List[Tuple[Fraction, Fraction]]:
    """Exact interval bounding box of the cap neighborhood, component-wise."""
    n = cap.n
    box = _cap_box(cap)
    out = []
    nv = n + 1
    for m in range(1, n + 2):
        poly = MPoly(nv)
        for j in range(0, min(m, n - 1) + 1):
            if j == 0:
                svar = MPoly.var(nv, n)
            else:
                svar = MPoly.var(nv, j)
            falling = Fraction(math.factorial(m), math.factorial(m - j))
            term = svar.scale(falling)
            if m - j > 0:
                term = term * MPoly.var(nv, 0, m - j)
            poly = poly + term
        lo, hi = poly.eval_box(box)
        if m == n + 1:
            lo, hi = lo - cap.delta, hi + cap.delta
        out.append((lo, hi))
    return out


def overlap_counts(caps: Sequence[Cap], i: int, E) -> Tuple[int, int]:
    """Bounded-overlap counts between cylinder slabs and shifted cap intervals.

    The xi_i axis is cut into cells of width E^(1/2); each cap of t-interval
    [b, b+L) is assigned the interval

        I = [i! * alpha * c_i * b - 5 E^(1/2),  i! * alpha * c_i * b + 5 E^(1/2)]

    and the two maximal intersection counts (cells per cap interval, cap
    intervals per cell) are returned.  E^(1/2) is realized as an exact
    rational 2^-48-floor; all interval arithmetic after that is exact.
    """
    if not caps:
        raise ValueError("empty cap family")
    E = Fraction(E)
    if E <= 0:
        raise ValueError("error budget must be positive")
    w = sqrt_floor(E)
    if w == 0:
        raise ValueError("error budget underflows the root resolution")
    ci = c_constant(i)
    fct = math.factorial(i)
    ivals = []
    for cap in caps:
        alpha = cap.sbox.coords[i - 2].sign
        center = fct * alpha * ci * cap.t_lo
        ivals.append((center - 5 * w, center + 5 * w))

    def cell_range(lo: Fraction, hi: Fraction) -> Tuple[int, int]:
        j_lo = math.floor(lo / w)
        j_hi = math.floor(hi / w) if (hi / w) % 1 != 0 else int(hi / w) - 1
        return j_lo, j_hi

    per_cap = 0
    cell_hits: Dict[int, int] = {}
    for lo, hi in ivals:
        j_lo, j_hi = cell_range(lo, hi)
        per_cap = max(per_cap, j_hi - j_lo + 1)
        for j in range(j_lo, j_hi + 1):
            cell_hits[j] = cell_hits.get(j, 0) + 1
    per_cell = max(cell_hits.values())
    return per_cap, per_cell
