"""CDFs for the F, t and studentized-range distributions.

The incomplete beta function is evaluated by its continued fraction (modified
Lentz); the studentized range by two-level quadrature.
"""

import math

import numpy as np
from scipy.special import ndtr

from ..errors import InvalidInput, NumericalFailure

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 20000

OUTER_NODES = 64
INNER_TOL = 1e-12
_GL_X, _GL_W = np.polynomial.legendre.leggauss(OUTER_NODES)
_PANEL_X, _PANEL_W = np.polynomial.legendre.leggauss(15)


def _betacf(a, b, x):
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _CF_TINY if abs(d) < _CF_TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NumericalFailure(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a, b, x):
    """Regularised incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise InvalidInput("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f, d1, d2):
    """Upper tail ``P(F > f)`` of the F(d1, d2) distribution."""
    if np.isinf(f):
        return 0.0
    if f <= 0.0:
        return 1.0
    return betainc_reg(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))


def f_cdf(f, d1, d2):
    if np.isinf(f):
        return 1.0
    if f <= 0.0:
        return 0.0
    return betainc_reg(0.5 * d1, 0.5 * d2, d1 * f / (d1 * f + d2))


def t_sf_two_sided(t, df):
    """``P(|T| > |t|)`` for Student's t with ``df`` degrees of freedom."""
    t = abs(t)
    if np.isinf(t):
        return 0.0
    return betainc_reg(0.5 * df, 0.5, df / (df + t * t))


def _range_integrand(z, w, k):
    diff = ndtr(z) - ndtr(z - w)
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) * np.power(np.maximum(diff, 0.0), k - 1)


def _panel(a, b, w, k):
    half = 0.5 * (b - a)
    return half * float(np.dot(_PANEL_W, _range_integrand(a + half * (_PANEL_X + 1.0), w, k)))


def _adaptive(a, b, w, k, whole, tol, depth):
    mid = 0.5 * (a + b)
    left = _panel(a, mid, w, k)
    right = _panel(mid, b, w, k)
    if depth == 0 or abs(left + right - whole) <= tol:
        return left + right
    return (_adaptive(a, mid, w, k, left, 0.5 * tol, depth - 1)
            + _adaptive(mid, b, w, k, right, 0.5 * tol, depth - 1))


def range_cdf_normal(w, k, tol=INNER_TOL):
    """``P(R <= w)`` for the range of ``k`` iid standard normals (adaptive quadrature)."""
    if w <= 0.0:
        return 0.0
    # integrand is negligible outside [-9, w + 9] (normal density below 1e-17)
    a, b = -9.0, w + 9.0
    cuts = np.linspace(a, b, 5)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += _adaptive(lo, hi, w, k, _panel(lo, hi, w, k), tol, 40)
    return min(1.0, k * total)


def _scaled_chi_bounds(df):
    sd = 1.0 / math.sqrt(2.0 * df)
    lo = max(0.0, 1.0 - 9.0 * sd)
    hi = max(1.0 + 12.0 * sd, math.sqrt(90.0 / df))
    return lo, hi


def _scaled_chi_logpdf(s, df):
    """Log density of ``chi_df / sqrt(df)``."""
    return (0.5 * df * math.log(df) - math.lgamma(0.5 * df) - (0.5 * df - 1.0) * math.log(2.0)
            + (df - 1.0) * np.log(s) - 0.5 * df * s * s)


def studentized_range_cdf(q, k, df):
    """``P(Q <= q)`` for the studentized range with ``k`` groups and ``df`` error df.

    Outer integral: 64-node Gauss-Legendre over the scaled chi variable.
    Inner integral: adaptive Gauss-Legendre over the normal location.
    """
    if k < 2:
        raise InvalidInput("studentized range needs k >= 2")
    if df <= 0:
        raise InvalidInput("df must be positive")
    if q <= 0.0:
        return 0.0
    if np.isinf(q):
        return 1.0
    lo, hi = _scaled_chi_bounds(df)
    half = 0.5 * (hi - lo)
    s = lo + half * (_GL_X + 1.0)
    dens = np.exp(_scaled_chi_logpdf(s, df))
    inner = np.array([range_cdf_normal(q * si, k) for si in s])
    return float(min(1.0, max(0.0, half * np.dot(_GL_W, dens * inner))))


def studentized_range_sf(q, k, df):
    return 1.0 - studentized_range_cdf(q, k, df)


def studentized_range_quantile(prob, k, df, tol=1e-10):
    """Invert :func:`studentized_range_cdf` by bisection."""
    if not 0.0 < prob < 1.0:
        raise InvalidInput("prob must lie in (0, 1)")
    lo, hi = 0.0, 4.0
    while studentized_range_cdf(hi, k, df) < prob:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise NumericalFailure("studentized range quantile bracket failed")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if studentized_range_cdf(mid, k, df) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
