"""Small self-contained numeric kernel.

Special functions (regularized incomplete gamma, normal quantile), dense
linear solves used as oracles for the structured fast paths, and closed-form
polynomial root finding.  Everything here is pure and deterministic; matrices
stay small (at most a few dozen rows), so O(n^3) pivoted elimination is
adequate and no external numeric library is required.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Cubic",
    "SingularMatrixError",
    "real_roots_cubic",
    "normal_cdf",
    "normal_quantile",
    "chi2_sf",
    "chi2_quantile",
    "dense_solve",
    "dense_inverse",
]

_EPS = 1e-15
_MAX_ITER = 300


class SingularMatrixError(ValueError):
    """Raised when a dense solve meets a numerically singular matrix."""


@dataclass(frozen=True)
class Cubic:
    """Coefficients of ``c3*x**3 + c2*x**2 + c1*x + c0``."""

    c3: float
    c2: float
    c1: float
    c0: float


# ---------------------------------------------------------------------------
# polynomial roots


def _polish_root(c3, c2, c1, c0, x):
    # a couple of Newton steps against the original polynomial; guarded so a
    # multiple root (f' ~ 0) is left where the closed form put it
    for _ in range(3):
        f = ((c3 * x + c2) * x + c1) * x + c0
        fp = (3.0 * c3 * x + 2.0 * c2) * x + c1
        if fp == 0.0:
            break
        step = f / fp
        if not math.isfinite(step):
            break
        x -= step
        if abs(step) < 1e-16 * (1.0 + abs(x)):
            break
    return x


def real_roots_cubic(c: Cubic) -> tuple[float, ...]:
    """All real roots of the cubic, ascending, polished by Newton steps.

    A vanishing leading coefficient falls through to the quadratic/linear
    case.  Raises ``ValueError`` for the all-zero polynomial.
    """
    return cubic_roots(c.c3, c.c2, c.c1, c.c0)


def cubic_roots(c3: float, c2: float, c1: float, c0: float) -> tuple[float, ...]:
    scale = max(abs(c3), abs(c2), abs(c1), abs(c0))
    if scale == 0.0:
        raise ValueError("all-zero polynomial has no well-defined roots")
    if abs(c3) <= 1e-14 * scale:
        # quadratic / linear fallthrough
        if abs(c2) <= 1e-14 * scale:
            if c1 == 0.0:
                return ()
            return (-c0 / c1,)
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return ()
        sq = math.sqrt(disc)
        q = -0.5 * (c1 + math.copysign(sq, c1)) if c1 != 0.0 else 0.5 * sq
        if q == 0.0:
            r = (0.0, 0.0) if disc == 0.0 else (0.0,)
            return tuple(sorted(_polish_root(c3, c2, c1, c0, x) for x in r))
        roots = sorted((q / c2, c0 / q))
        return tuple(_polish_root(c3, c2, c1, c0, x) for x in roots)

    p = c2 / c3
    q = c1 / c3
    r = c0 / c3
    # depressed cubic t^3 + a t + b with x = t - p/3
    a = q - p * p / 3.0
    b = (2.0 * p * p * p - 9.0 * p * q + 27.0 * r) / 27.0
    shift = p / 3.0
    disc = 0.25 * b * b + a * a * a / 27.0
    if disc > 0.0:
        sq = math.sqrt(disc)
        # avoid cancellation: pick the cube-root argument with the larger
        # magnitude first
        if b >= 0.0:
            u = _cbrt(-0.5 * b - sq)
        else:
            u = _cbrt(-0.5 * b + sq)
        v = 0.0 if u == 0.0 else -a / (3.0 * u)
        roots = [u + v - shift]
    elif a == 0.0 and b == 0.0:
        roots = [-shift, -shift, -shift]
    else:
        m = 2.0 * math.sqrt(-a / 3.0)
        arg = 3.0 * b / (a * m)
        arg = min(1.0, max(-1.0, arg))
        theta = math.acos(arg) / 3.0
        roots = [
            m * math.cos(theta) - shift,
            m * math.cos(theta - 2.0 * math.pi / 3.0) - shift,
            m * math.cos(theta - 4.0 * math.pi / 3.0) - shift,
        ]
    roots = [_polish_root(c3, c2, c1, c0, x) for x in roots]
    roots.sort()
    return tuple(roots)


def _cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


# ---------------------------------------------------------------------------
# normal distribution

# Acklam's rational approximation for the inverse normal CDF, refined below
# with one Newton step through math.erf, which puts |Phi(q) - p| well under
# the 1e-9 contract.
_ACK_A = (
    -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
    1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00,
)
_ACK_B = (
    -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
    6.680131188771972e+01, -1.328068155288572e+01,
)
_ACK_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
    -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00,
)
_ACK_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
    3.754408661907416e+00,
)


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF with |Phi(result) - p| < 1e-9."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"normal_quantile requires 0 < p < 1, got {p}")
    a, b, c, d = _ACK_A, _ACK_B, _ACK_C, _ACK_D
    plow, phigh = 0.02425, 1.0 - 0.02425
    if p < plow:
        qq = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * qq + c[1]) * qq + c[2]) * qq + c[3]) * qq + c[4]) * qq + c[5]) / \
            ((((d[0] * qq + d[1]) * qq + d[2]) * qq + d[3]) * qq + 1.0)
    elif p <= phigh:
        qq = p - 0.5
        rr = qq * qq
        x = (((((a[0] * rr + a[1]) * rr + a[2]) * rr + a[3]) * rr + a[4]) * rr + a[5]) * qq / \
            (((((b[0] * rr + b[1]) * rr + b[2]) * rr + b[3]) * rr + b[4]) * rr + 1.0)
    else:
        qq = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * qq + c[1]) * qq + c[2]) * qq + c[3]) * qq + c[4]) * qq + c[5]) / \
            ((((d[0] * qq + d[1]) * qq + d[2]) * qq + d[3]) * qq + 1.0)
    # one Newton refinement through the exact CDF
    err = normal_cdf(x) - p
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if pdf > 0.0:
        x -= err / pdf
    return x


# ---------------------------------------------------------------------------
# chi-square via the regularized incomplete gamma function


def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x) by series, valid for x < a + 1
    ap = a
    s = 1.0 / a
    term = s
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        s += term
        if abs(term) < abs(s) * _EPS:
            break
    return s * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_cf(a: float, x: float) -> float:
    # upper regularized Q(a, x) by continued fraction (modified Lentz)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _reg_gamma_upper(a: float, x: float) -> float:
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution."""
    if x < 0.0:
        raise ValueError("chi2_sf requires x >= 0")
    if df < 1:
        raise ValueError("chi2_sf requires df >= 1")
    return _reg_gamma_upper(0.5 * df, 0.5 * x)


def _chi2_pdf(x: float, df: int) -> float:
    if x <= 0.0:
        return 0.0
    a = 0.5 * df
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


def chi2_quantile(p: float, df: int) -> float:
    """Value x with ``1 - chi2_sf(x, df) == p``, accurate to ~1e-12 in p."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"chi2_quantile requires 0 < p < 1, got {p}")
    if df < 1:
        raise ValueError("chi2_quantile requires df >= 1")
    target = 1.0 - p
    # Wilson-Hilferty starting point, then bracket [lo, hi] with sf(lo) >=
    # target >= sf(hi) before the safeguarded Newton loop
    z = normal_quantile(p)
    t = 1.0 - 2.0 / (9.0 * df) + z * math.sqrt(2.0 / (9.0 * df))
    guess = df * t * t * t if t > 0.0 else 1e-6
    lo = 0.0
    hi = max(guess, 1e-6)
    for _ in range(400):
        if chi2_sf(hi, df) <= target:
            break
        lo = hi
        hi *= 2.0
    x = min(max(guess, lo + 1e-12), hi)
    for _ in range(200):
        err = chi2_sf(x, df) - target  # decreasing in x
        if abs(err) < 1e-14:
            break
        if err > 0.0:
            lo = x
        else:
            hi = x
        pdf = _chi2_pdf(x, df)
        x_new = x + err / pdf if pdf > 0.0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < 1e-15 * (1.0 + x):
            x = x_new
            break
        x = x_new
    return x


# ---------------------------------------------------------------------------
# dense linear algebra (partial-pivot Gauss-Jordan on small matrices)


def dense_solve(a, b):
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting."""
    m = np.array(a, dtype=float, copy=True)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("matrix must be square")
    rhs = np.array(b, dtype=float, copy=True)
    vector = rhs.ndim == 1
    if vector:
        rhs = rhs[:, None]
    scale = np.max(np.abs(m)) or 1.0
    for k in range(n):
        piv = k + int(np.argmax(np.abs(m[k:, k])))
        if abs(m[piv, k]) <= 1e-14 * scale:
            raise SingularMatrixError(
                f"singular matrix: pivot {m[piv, k]:.3e} at column {k} "
                f"(scale {scale:.3e})"
            )
        if piv != k:
            m[[k, piv]] = m[[piv, k]]
            rhs[[k, piv]] = rhs[[piv, k]]
        inv_p = 1.0 / m[k, k]
        for i in range(k + 1, n):
            f = m[i, k] * inv_p
            if f != 0.0:
                m[i, k:] -= f * m[k, k:]
                rhs[i] -= f * rhs[k]
    for k in range(n - 1, -1, -1):
        rhs[k] -= m[k, k + 1:] @ rhs[k + 1:]
        rhs[k] /= m[k, k]
    return rhs[:, 0] if vector else rhs


def dense_inverse(a):
    a = np.asarray(a, dtype=float)
    return dense_solve(a, np.eye(a.shape[0]))
