"""Chi-square CDF and the one-sample Kolmogorov-Smirnov distance."""

from __future__ import annotations

import math

from .errors import InsufficientSamples

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100000


def _gamma_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a: float, x: float) -> float:
    """Upper regularized gamma Q(a, x) by the modified Lentz method."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(a: float, x: float) -> float:
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cont_frac(a, x))


def chi_square_cdf(x: float, k: int) -> float:
    """``P(chi2_k <= x)`` as ``P(k/2, x/2)``; series below ``x/2 < k/2 + 1``."""
    if k <= 0:
        raise ValueError("degrees of freedom must be positive")
    return regularized_lower_gamma(0.5 * k, 0.5 * x)


def ks_distance(samples, k: int) -> float:
    """Two-sided one-sample KS statistic of ``samples`` against chi2_k."""
    xs = sorted(float(s) for s in samples)
    m = len(xs)
    if m < 2:
        raise InsufficientSamples("ks_distance needs at least 2 samples")
    d = 0.0
    for i, x in enumerate(xs):
        F = chi_square_cdf(x, k)
        d = max(d, (i + 1) / m - F, F - i / m)
    return d


def ks_critical_value(m: int, alpha: float = 0.01) -> float:
    """Asymptotic Kolmogorov critical value ``c(alpha) / sqrt(m)``."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(m)
