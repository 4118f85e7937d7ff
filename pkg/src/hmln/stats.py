"""Welch's unequal-variance t-test with a self-contained Student-t tail."""
from __future__ import annotations

import math

import numpy as np

_EPS = 1e-15
_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 500) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(lbeta)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


def welch_t_test(a, b) -> tuple[float, float, float]:
    """(t, df, two-sided p) for mean(a) - mean(b).

    A sample of size one contributes zero variance. With zero combined
    variance, equal means give (0, nan, 1) and unequal means (+-inf, nan, 0).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be nonempty")
    ma, mb = float(a.mean()), float(b.mean())
    va = float(a.var(ddof=1)) if len(a) > 1 else 0.0
    vb = float(b.var(ddof=1)) if len(b) > 1 else 0.0
    sa, sb = va / len(a), vb / len(b)
    se2 = sa + sb
    scale = max(abs(ma), abs(mb), 1.0)
    if se2 <= (1e-13 * scale) ** 2:
        if abs(ma - mb) <= 1e-12 * scale:
            return 0.0, math.nan, 1.0
        return math.copysign(math.inf, ma - mb), math.nan, 0.0
    t = (ma - mb) / math.sqrt(se2)
    den = (sa * sa / (len(a) - 1) if len(a) > 1 else 0.0) + (sb * sb / (len(b) - 1) if len(b) > 1 else 0.0)
    df = se2 * se2 / den
    return t, df, t_two_sided_p(t, df)
