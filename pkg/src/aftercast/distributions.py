"""Error-density kernels for the three AFTER families and a quadrature KL oracle.

Every density here is location-0 with a scale parameter:

    Normal               (1/s) phi(x/s)
    DoubleExponential    (1/(2d)) exp(-|x|/d)
    ScaledStudentT(nu)   (1/s) f_t(x/s | nu)

The Student's t CDF is evaluated through the regularized incomplete beta
function (modified Lentz continued fraction), which also drives the
abs-median constant used by the t scale estimator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)

_BETA_RTOL = 1e-12
_BETA_MAXITER = 100_000
_TINY = 1e-300


class Family(str, enum.Enum):
    NORMAL = "normal"
    DOUBLE_EXPONENTIAL = "double_exponential"
    SCALED_T = "scaled_t"

    @classmethod
    def parse(cls, name: "str | Family") -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {
            "normal": cls.NORMAL, "gaussian": cls.NORMAL, "n": cls.NORMAL,
            "double_exponential": cls.DOUBLE_EXPONENTIAL, "de": cls.DOUBLE_EXPONENTIAL,
            "laplace": cls.DOUBLE_EXPONENTIAL,
            "scaled_t": cls.SCALED_T, "t": cls.SCALED_T, "student_t": cls.SCALED_T,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown distribution family {name!r}") from None


@dataclass(frozen=True)
class DistributionSpec:
    """A location-0 error density. ``scale`` is sigma, d or s depending on family."""

    family: Family
    scale: float = 1.0
    dof: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if self.family is Family.SCALED_T:
            if self.dof is None or not (self.dof > 0 and math.isfinite(self.dof)):
                raise ValueError("ScaledStudentT requires a positive finite dof")
        elif self.dof is not None:
            raise ValueError(f"dof must be absent for family {self.family.value}")

    def with_scale(self, scale: float) -> "DistributionSpec":
        return DistributionSpec(self.family, scale, self.dof)


def normal(scale: float = 1.0) -> DistributionSpec:
    return DistributionSpec(Family.NORMAL, scale)


def double_exponential(scale: float = 1.0) -> DistributionSpec:
    return DistributionSpec(Family.DOUBLE_EXPONENTIAL, scale)


def scaled_t(dof: float, scale: float = 1.0) -> DistributionSpec:
    return DistributionSpec(Family.SCALED_T, scale, float(dof))


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

Z_MAX = 1e100


@lru_cache(maxsize=256)
def _t_log_norm(nu: float) -> float:
    return math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2) - 0.5 * math.log(nu * math.pi)


def log_pdf(spec: DistributionSpec, x: float) -> float:
    """Natural log of the density of ``spec`` at ``x``.

    |x / scale| is clamped at 1e100 so the result stays finite even against
    a floored, vanishingly small scale.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"log_pdf needs a finite argument, got {x}")
    s = spec.scale
    try:
        z = x / s
    except OverflowError:  # pragma: no cover
        z = math.copysign(Z_MAX, x)
    z = max(-Z_MAX, min(Z_MAX, z))
    if spec.family is Family.NORMAL:
        return -LOG_SQRT_2PI - math.log(s) - 0.5 * z * z
    if spec.family is Family.DOUBLE_EXPONENTIAL:
        return -LOG_2 - math.log(s) - abs(z)
    nu = spec.dof
    return _t_log_norm(nu) - math.log(s) - 0.5 * (nu + 1) * math.log1p(z * z / nu)


def pdf(spec: DistributionSpec, x: float) -> float:
    return math.exp(log_pdf(spec, x))


def log_pdf_array(family: Family, dof: Optional[float], scale, x) -> np.ndarray:
    """Vectorized log density; ``scale`` and ``x`` broadcast against each other."""
    scale = np.asarray(scale, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        z = np.clip(x / scale, -Z_MAX, Z_MAX)
    if family is Family.NORMAL:
        return -LOG_SQRT_2PI - np.log(scale) - 0.5 * z * z
    if family is Family.DOUBLE_EXPONENTIAL:
        return -LOG_2 - np.log(scale) - np.abs(z)
    return _t_log_norm(float(dof)) - np.log(scale) - 0.5 * (dof + 1) * np.log1p(z * z / dof)


# ---------------------------------------------------------------------------
# Student's t CDF via the regularized incomplete beta function
# ---------------------------------------------------------------------------

def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_RTOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


_STIRLING = (1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0)


def log_beta(a: float, b: float) -> float:
    """log B(a, b), accurate when one argument is large.

    lgamma(a + b) - lgamma(a) cancels badly for a ~ 1e6; there the difference
    is taken term by term in the Stirling series.
    """
    big, small = (a, b) if a >= b else (b, a)
    if big < 1e3:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    z = big + small
    diff = small * math.log(big) + (z - 0.5) * math.log1p(small / big) - small
    diff += _STIRLING[0] * (-small / (big * z))
    for k, ck in enumerate(_STIRLING[1:], start=2):
        p = 2 * k - 1
        diff += ck * (z ** -p - big ** -p)
    return math.lgamma(small) - diff


def betainc_reg(a: float, b: float, x: float, one_minus_x: Optional[float] = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``one_minus_x`` may be supplied when 1 - x is known more accurately than
    the subtraction would give (the t CDF passes it for large dof).
    """
    if a <= 0 or b <= 0:
        raise ValueError("betainc_reg requires a, b > 0")
    y = 1.0 - x if one_minus_x is None else one_minus_x
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    lx = math.log(x) if x < 0.5 else math.log1p(-y)
    ly = math.log(y) if y < 0.5 else math.log1p(-x)
    log_front = a * lx + b * ly - log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, y) / b


def t_two_sided_tail(nu: float, x: float) -> float:
    """P(|T| > x) for T ~ t_nu, computed without cancellation."""
    x = abs(float(x))
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    denom = nu + x * x
    return betainc_reg(nu / 2.0, 0.5, nu / denom, x * x / denom)


def t_cdf(nu: float, x: float) -> float:
    """CDF of the standard Student's t distribution with ``nu`` degrees of freedom."""
    if not nu > 0:
        raise ValueError(f"dof must be positive, got {nu}")
    x = float(x)
    if math.isnan(x):
        raise ValueError("t_cdf of NaN")
    tail = 0.5 * t_two_sided_tail(nu, x)
    return 1.0 - tail if x > 0 else tail


@lru_cache(maxsize=512)
def abs_median(nu: float) -> float:
    """Median of |T| for T ~ t_nu, i.e. the 0.75 quantile of t_nu."""
    if not nu > 0:
        raise ValueError(f"dof must be positive, got {nu}")
    hi = 2.0
    while t_cdf(nu, hi) < 0.75:
        hi *= 2.0
    return brentq(lambda m: t_cdf(nu, m) - 0.75, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample(spec: DistributionSpec, rng: np.random.Generator, size=None):
    """Draw from ``spec``; advances ``rng``."""
    s = spec.scale
    if spec.family is Family.NORMAL:
        return s * rng.standard_normal(size)
    if spec.family is Family.DOUBLE_EXPONENTIAL:
        return rng.laplace(0.0, s, size)
    nu = spec.dof
    z = rng.standard_normal(size)
    chi2 = rng.chisquare(nu, size)
    return s * z / np.sqrt(chi2 / nu)


def sample_lognormal(sigma: float, rng: np.random.Generator, size=None):
    return np.exp(sigma * rng.standard_normal(size))


def t_scale_for_variance(nu: float, variance: float) -> float:
    """Scale k with Var(k t_nu) = variance; needs nu > 2."""
    if nu <= 2:
        raise ValueError("variance targeting needs dof > 2")
    return math.sqrt(variance * (nu - 2.0) / nu)


def de_scale_for_variance(variance: float) -> float:
    return math.sqrt(variance / 2.0)


# ---------------------------------------------------------------------------
# quadrature oracle
# ---------------------------------------------------------------------------

class QuadratureAccuracyError(ArithmeticError):
    """Raised when a requested integration window leaves too much tail mass."""

    def __init__(self, msg: str, tail_mass: float):
        super().__init__(msg)
        self.tail_mass = tail_mass


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings for the real-line adaptive Simpson integrator.

    ``half_width`` fixes the window [-L, L]; by default L is grown until the
    analytic tail mass of every operand is below ``tail_tol``.
    """

    abs_tol: float = 1e-12
    tail_tol: float = 1e-12
    max_tail: float = 1e-10
    half_width: Optional[float] = None
    max_depth: int = 48
    initial_panels: int = 32


def tail_mass(spec: DistributionSpec, half_width: float) -> float:
    """P(|X| > half_width) under ``spec``."""
    z = half_width / spec.scale
    if spec.family is Family.NORMAL:
        return math.erfc(z / math.sqrt(2.0))
    if spec.family is Family.DOUBLE_EXPONENTIAL:
        return math.exp(-z)
    return t_two_sided_tail(spec.dof, z)


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float,
                      max_depth: int) -> float:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1))
            stack.append((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1))
    return total


def _to_unit(x: float, c: float) -> float:
    # inverse of x = c u / (1 - u^2)
    if x == 0.0:
        return 0.0
    return 2.0 * x / (c + math.sqrt(c * c + 4.0 * x * x))


def integrate_line(g: Callable[[float], float], half_width: float, center_scale: float,
                   breakpoints: Sequence[float] = (), quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Integrate ``g`` over [-half_width, half_width].

    The line is compactified by x = c u / (1 - u^2) so that windows of width
    1e12 cost no more than width 10; ``breakpoints`` mark kinks of ``g``.
    """
    c = center_scale

    def h(u: float) -> float:
        one_m = 1.0 - u * u
        x = c * u / one_m
        return g(x) * c * (1.0 + u * u) / (one_m * one_m)

    umax = _to_unit(half_width, c)
    cuts = sorted({-umax, umax, *(_to_unit(b, c) for b in breakpoints if abs(b) < half_width)})
    # seed panels uniformly inside each piece so narrow features are not skipped
    edges = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n = max(2, int(math.ceil(quad.initial_panels * (hi - lo) / (2 * umax))))
        edges.extend(np.linspace(lo, hi, n + 1)[:-1].tolist())
    edges.append(cuts[-1])
    npanel = len(edges) - 1
    return math.fsum(_adaptive_simpson(h, lo, hi, quad.abs_tol / npanel, quad.max_depth)
                     for lo, hi in zip(edges[:-1], edges[1:]))


def _window(specs: Sequence[DistributionSpec], shifts: Sequence[float], quad: QuadratureSpec):
    if quad.half_width is not None:
        L = quad.half_width
        tm = max(tail_mass(s, max(L - abs(t), 0.0)) for s, t in zip(specs, shifts))
        if tm > quad.max_tail:
            raise QuadratureAccuracyError(
                f"integration window [-{L}, {L}] leaves tail mass {tm:.3g} > {quad.max_tail:.1g}", tm)
        return L, tm
    L = 10.0 * max(s.scale for s in specs) + max(abs(t) for t in shifts)
    while True:
        tm = max(tail_mass(s, L - abs(t)) for s, t in zip(specs, shifts))
        if tm < quad.tail_tol or L > 1e200:
            return L, tm
        L *= 4.0


def expect(spec: DistributionSpec, func: Callable[[float], float],
           quad: QuadratureSpec = QuadratureSpec()) -> float:
    """E[func(X)] under ``spec`` by quadrature; ``func`` must be bounded in the tails."""
    L, tm = _window([spec], [0.0], quad)

    def g(x):
        return func(x) * math.exp(log_pdf(spec, x))

    body = integrate_line(g, L, spec.scale, (0.0,), quad)
    # tails: mass beyond L carries func evaluated at the window edge
    return body + 0.5 * tm * (func(L) + func(-L))


def total_mass(spec: DistributionSpec, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Quadrature of the density over the window, without any tail correction."""
    L, _ = _window([spec], [0.0], quad)
    return integrate_line(lambda x: math.exp(log_pdf(spec, x)), L, spec.scale, (0.0,), quad)


def kl_numeric(p: DistributionSpec, q: DistributionSpec, shift: float = 0.0,
               quad: QuadratureSpec = QuadratureSpec()) -> float:
    """D(p || q(. - shift)) = int p(x) log(p(x) / q(x - shift)) dx by quadrature.

    Tails beyond the window are added to first order: tail mass times the log
    ratio at the window edge (the algebraic tails of t make this sufficient).
    """
    L, tm = _window([p, q], [0.0, shift], quad)

    def g(x):
        lp = log_pdf(p, x)
        if lp < -700.0:
            return 0.0
        return math.exp(lp) * (lp - log_pdf(q, x - shift))

    body = integrate_line(g, L, p.scale, (0.0, shift), quad)
    tp = tail_mass(p, L)
    edge = 0.5 * tp * ((log_pdf(p, L) - log_pdf(q, L - shift))
                       + (log_pdf(p, -L) - log_pdf(q, -L - shift)))
    return body + edge


def kl_normal_closed(s: float, t: float) -> float:
    """D(N(0,1) || N(t, s^2))."""
    return math.log(s) + (1.0 + t * t - s * s) / (2.0 * s * s)


def kl_de_closed(s: float, t: float) -> float:
    """D(DE(1) || DE(t, s)) for t >= 0."""
    return math.log(s) + (math.exp(-t) + t) / s - 1.0
