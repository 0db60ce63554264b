"""Paired Student's t statistics with a self-contained t CDF.

The two-sided p-value is evaluated through the regularized incomplete beta
function in its continued-fraction form (modified Lentz), so results do not
depend on a statistics library and are accurate to well below 1e-10 for the
degrees of freedom used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

_CF_MAX_ITER = 300
_CF_EPS = 3e-16
_CF_TINY = 1e-300


class DegenerateStatisticError(ValueError):
    """Raised when a statistic is undefined for the given inputs."""


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta integral (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # The continued fraction converges fast only on one side of the mean;
    # use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for T ~ Student's t with df degrees of freedom."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if math.isnan(t):
        raise ValueError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def student_t_cdf(t: float, df: int) -> float:
    p_two = student_t_two_sided_p(t, df)
    return p_two / 2.0 if t < 0 else 1.0 - p_two / 2.0


def student_t_ppf(q: float, df: int) -> float:
    """Quantile function of Student's t, by bisection on the CDF."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    if q == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while student_t_cdf(lo, df) > q:
        lo *= 2.0
    while student_t_cdf(hi, df) < q:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PairedTTest:
    """Two-sided paired t-test result over n paired observations."""

    t: float
    p: float
    n: int
    degenerate: bool = False


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> PairedTTest:
    """Student's paired t-test on the differences a - b.

    Uses the sample standard deviation (n-1 denominator) and a two-sided
    p-value. Zero-variance differences are degenerate: p=0 for a nonzero
    mean difference, p=1 for a zero one.
    """
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise DegenerateStatisticError("paired t-test needs at least 2 pairs")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    mean_d = math.fsum(diffs) / n
    var_d = math.fsum((d - mean_d) ** 2 for d in diffs) / (n - 1)
    sd_d = math.sqrt(var_d)
    if sd_d == 0.0:
        if mean_d == 0.0:
            return PairedTTest(t=0.0, p=1.0, n=n, degenerate=True)
        return PairedTTest(t=math.copysign(math.inf, mean_d), p=0.0, n=n, degenerate=True)
    t = mean_d / (sd_d / math.sqrt(n))
    return PairedTTest(t=t, p=student_t_two_sided_p(t, n - 1), n=n)


def mean_sd_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float, tuple[float, float]]:
    """Mean, sample sd, and t-distribution CI of the mean of fold-level values."""
    n = len(values)
    if n < 2:
        raise DegenerateStatisticError("need at least 2 values for a t interval")
    mean = math.fsum(values) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))
    tcrit = student_t_ppf(1.0 - (1.0 - level) / 2.0, n - 1)
    half = tcrit * sd / math.sqrt(n)
    return mean, sd, (mean - half, mean + half)
