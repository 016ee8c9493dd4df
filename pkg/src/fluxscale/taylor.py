"""Mean-variance statistics and the log-log power-law regression.

The regression machinery is shared: :func:`linefit` performs a plain OLS of
y on x with t-based inference, :func:`fit_taylor` applies it to
(log10 mean, log10 variance) pairs. Summations use numpy's pairwise
accumulation, which keeps results stable under permutation of the inputs
to well below 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateAbscissaError, EmptySeriesError, InsufficientPointsError
from .model import IlliquiditySeries, MeanVariancePoint, SummaryStats, TaylorFit

# Residual sums below this are treated as an exact (zero-residual) fit.
EXACT_RSS = 1e-20


# ---------------------------------------------------------------------------
# Mean / variance / summary statistics
# ---------------------------------------------------------------------------


def mean_variance(series: IlliquiditySeries) -> MeanVariancePoint:
    """Sample mean and population variance <f^2> - <f>^2 of one series.

    The variance uses the population form with the J denominator, not the
    J-1 sample form. Tiny negative values produced by cancellation are
    clamped to zero; a negative beyond rounding level raises.
    """
    j = series.defined_count
    if j == 0:
        raise EmptySeriesError(f"empty series for {series.instrument_id}")
    f = series.values
    mean = float(np.sum(f) / j)
    msq = float(np.sum(f * f) / j)
    var = msq - mean * mean
    if var < 0:
        # The population variance is mathematically non-negative, so any
        # negative here is floating-point cancellation. Guard scales with
        # the magnitude of the cancelled terms.
        guard = max(1e-18, 8.0 * np.finfo(float).eps * msq)
        if var < -guard:
            raise ValueError(f"variance {var} below rounding guard {-guard}")
        var = 0.0
    return MeanVariancePoint(series.instrument_id, series.delta_t, mean, var, j)


def summary_stats(values) -> SummaryStats:
    """Distribution summary of a pooled sample (lower median, raw kurtosis)."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n == 0:
        raise EmptySeriesError("empty sample")
    k = (n - 1) // 2
    median = float(np.partition(v, k)[k])
    mean = float(np.mean(v))
    centered = v - mean
    m2 = float(np.mean(centered ** 2))
    std = math.sqrt(m2)
    if std == 0:
        skew = kurt = float("nan")
    else:
        skew = float(np.mean(centered ** 3)) / m2 ** 1.5
        kurt = float(np.mean(centered ** 4)) / (m2 * m2)
    return SummaryStats(
        count=n, max=float(np.max(v)), min=float(np.min(v)),
        mean=mean, median=median, std=std, skewness=skew, kurtosis=kurt,
    )


# ---------------------------------------------------------------------------
# Ordinary least squares with t inference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LineFit:
    """OLS fit of y = intercept + slope * x."""

    n: int
    slope: float
    intercept: float
    se_slope: float
    se_intercept: float
    p_slope: float
    p_intercept: float
    adj_r2: float
    rss: float


def linefit(x, y) -> LineFit:
    """Least-squares line through (x, y) with standard errors and p-values.

    Raises InsufficientPointsError for n < 3 and DegenerateAbscissaError
    when all x coincide. p-values are two-sided under the t distribution
    with n - 2 degrees of freedom; an exact fit reports zero standard
    errors and zero p-values.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if n < 3:
        raise InsufficientPointsError(f"insufficient points: {n} < 3", usable=n)
    xbar = float(np.sum(x) / n)
    ybar = float(np.sum(y) / n)
    dx = x - xbar
    dy = y - ybar
    sxx = float(np.sum(dx * dx))
    if sxx == 0.0:
        raise DegenerateAbscissaError("degenerate abscissa: all x identical")
    sxy = float(np.sum(dx * dy))
    syy = float(np.sum(dy * dy))
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    rss = float(np.sum(resid * resid))
    df = n - 2
    if rss < EXACT_RSS:
        return LineFit(n, slope, intercept, 0.0, 0.0, 0.0, 0.0, 1.0, rss)
    s2 = rss / df
    se_slope = math.sqrt(s2 / sxx)
    se_intercept = math.sqrt(s2 * (1.0 / n + xbar * xbar / sxx))
    p_slope = t_two_sided_p(slope / se_slope, df)
    p_intercept = t_two_sided_p(intercept / se_intercept, df) if se_intercept > 0 else 0.0
    r2 = 1.0 - rss / syy if syy > 0 else 1.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df
    return LineFit(n, slope, intercept, se_slope, se_intercept,
                   p_slope, p_intercept, adj_r2, rss)


def fit_taylor(points: Iterable[MeanVariancePoint]) -> TaylorFit:
    """Power-law fit V = a * m^b via OLS of log10 V on log10 m.

    Points with zero mean or zero variance have no logarithm and are
    excluded (counted in ``excluded``); at least 3 usable points are
    required.
    """
    pts = list(points)
    usable = [p for p in pts if p.mean > 0 and p.variance > 0]
    excluded = len(pts) - len(usable)
    if len(usable) < 3:
        raise InsufficientPointsError(
            f"insufficient points: {len(usable)} usable of {len(pts)}",
            usable=len(usable))
    x = np.log10(np.array([p.mean for p in usable]))
    y = np.log10(np.array([p.variance for p in usable]))
    lf = linefit(x, y)
    return TaylorFit(
        n=lf.n, b=lf.slope, se_b=lf.se_slope, p_b=lf.p_slope,
        log_a=lf.intercept, se_log_a=lf.se_intercept, p_a=lf.p_intercept,
        adj_r2=lf.adj_r2, excluded=excluded,
    )


# ---------------------------------------------------------------------------
# Student t tail probability via the regularized incomplete beta function
# ---------------------------------------------------------------------------

_BETA_EPS = 1e-15
_BETA_TINY = 1e-300
_BETA_MAX_ITER = 500


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), accurate to ~1e-14."""
    if x < 0.0 or x > 1.0:
        raise ValueError(f"x out of [0, 1]: {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: int) -> float:
    """Two-sided p-value P(|T| >= |t|) for the t distribution with df dof."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    t = abs(float(t))
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return betainc_reg(df / 2.0, 0.5, x)
