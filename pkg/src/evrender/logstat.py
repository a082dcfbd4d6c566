"""Streaming statistics over log-luminance samples and the Student's t-test
that decides whether a pixel's brightness gap is significantly below the
event threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc


@dataclass
class LogLumStats:
    """Running count / mean / sum-of-squared-deviations for one pixel.

    The unbiased variance M2 / (n - 1) is exposed as ``variance``.
    """

    n: int = 0
    mean: float = 0.0
    M2: float = 0.0

    @property
    def variance(self) -> float:
        if self.n < 2:
            return 0.0
        return self.M2 / (self.n - 1)

    def merge(self, other: "LogLumStats") -> "LogLumStats":
        """Combine two accumulators as if their samples were concatenated."""
        if self.n == 0:
            return LogLumStats(other.n, other.mean, other.M2)
        if other.n == 0:
            return LogLumStats(self.n, self.mean, self.M2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        M2 = self.M2 + other.M2 + delta * delta * self.n * other.n / n
        return LogLumStats(n, mean, M2)


def accumulate(stats: LogLumStats, values) -> LogLumStats:
    """Welford update of ``stats`` with a batch of log-luminance values.

    Returns a new accumulator; the input is not mutated.
    """
    n = stats.n
    mean = stats.mean
    M2 = stats.M2
    for x in values:
        n += 1
        delta = x - mean
        mean += delta / n
        M2 += delta * (x - mean)
    return LogLumStats(n, mean, M2)


@dataclass
class TestOutcome:
    t: float
    p: float
    dof: int
    decision: str  # "terminate" or "continue"


def t_statistic(a: LogLumStats, b: LogLumStats, theta: float) -> float:
    """t-value of the shifted gap |mean_b - mean_a| - theta.

    The standard error uses the pooled variance sum over b's sample count.
    A zero pooled variance degenerates to +/-inf by the sign of the gap.
    """
    if a.n < 2 or b.n < 2:
        raise ValueError("t_statistic needs at least 2 samples on each side")
    gap = abs(b.mean - a.mean) - theta
    pooled = a.variance + b.variance
    if pooled == 0.0:
        if gap > 0.0:
            return math.inf
        if gap < 0.0:
            return -math.inf
        return 0.0
    return gap / math.sqrt(pooled / b.n)


def student_t_cdf(t: float, dof: float) -> float:
    """Lower-tail CDF of Student's t, via the regularized incomplete beta."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    x = dof / (dof + t * t)
    half_tail = 0.5 * betainc(0.5 * dof, 0.5, x)
    if t <= 0:
        return float(half_tail)
    return float(1.0 - half_tail)


def one_tailed_test(a: LogLumStats, b: LogLumStats, theta: float,
                    alpha: float) -> TestOutcome:
    """Terminate sampling only when the gap is significantly BELOW theta.

    Small lower-tail p means confident non-occurrence of an event; a pixel
    trending toward an event keeps sampling.
    """
    t = t_statistic(a, b, theta)
    dof = b.n - 1
    p = student_t_cdf(t, dof)
    decision = "terminate" if p < alpha else "continue"
    return TestOutcome(t=t, p=p, dof=dof, decision=decision)


# Array forms of the same formulas, used by the per-frame pixel loop.

def merge_stats_arrays(n1, mean1, M2_1, n2, mean2, M2_2):
    """Elementwise pairwise-merge of Welford accumulators.

    Arrays may contain zero counts; those positions pass the other side
    through unchanged.
    """
    n = n1 + n2
    safe_n = np.where(n > 0, n, 1)
    delta = mean2 - mean1
    mean = np.where(n1 == 0, mean2,
                    np.where(n2 == 0, mean1, mean1 + delta * n2 / safe_n))
    M2 = np.where(n1 == 0, M2_2,
                  np.where(n2 == 0, M2_1,
                           M2_1 + M2_2 + delta * delta * n1 * n2 / safe_n))
    return n, mean, M2


def variance_array(n, M2):
    return np.where(n > 1, M2 / np.maximum(n - 1, 1), 0.0)


def t_statistic_arrays(mean_a, var_a, mean_b, var_b, n_b, theta):
    """Vectorized t-values; zero pooled variance maps to +/-inf or 0."""
    gap = np.abs(mean_b - mean_a) - theta
    pooled = var_a + var_b
    with np.errstate(divide="ignore", invalid="ignore"):
        t = gap / np.sqrt(pooled / n_b)
    degenerate = pooled == 0.0
    if np.any(degenerate):
        t = np.where(degenerate & (gap > 0), np.inf, t)
        t = np.where(degenerate & (gap < 0), -np.inf, t)
        t = np.where(degenerate & (gap == 0), 0.0, t)
    return t


def student_t_cdf_arrays(t, dof):
    """Vectorized lower-tail Student t CDF."""
    t = np.asarray(t, dtype=np.float64)
    dof = np.asarray(dof, dtype=np.float64)
    finite = np.isfinite(t)
    t_safe = np.where(finite, t, 0.0)
    x = dof / (dof + t_safe * t_safe)
    half_tail = 0.5 * betainc(0.5 * dof, 0.5, x)
    cdf = np.where(t_safe <= 0, half_tail, 1.0 - half_tail)
    cdf = np.where(finite, cdf, np.where(t < 0, 0.0, 1.0))
    return cdf
