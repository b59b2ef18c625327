"""Statistical plumbing: KS tests, Monte Carlo summaries, slope fits.

P-values use the asymptotic Kolmogorov distribution with the
Stephens effective-size correction; the sample sizes in this package
(hundreds to thousands) make that adequate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "SampleSummary",
    "KsResult",
    "kolmogorov_sf",
    "ks_two_sample",
    "ks_one_sample_normal",
    "fit_log2_slope",
    "mc_mean_ci",
]


@dataclass(frozen=True)
class SampleSummary:
    count: int
    mean: float
    variance: float
    p10: float
    p50: float
    p90: float
    stderr: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")
        if not (self.p10 <= self.p50 <= self.p90):
            raise ValueError("percentiles must be monotone")

    @classmethod
    def from_samples(cls, samples) -> "SampleSummary":
        x = np.asarray(samples, dtype=float)
        if x.size < 2:
            raise ValueError("need at least 2 samples")
        var = float(x.var(ddof=1))
        p10, p50, p90 = (float(v) for v in np.percentile(x, [10, 50, 90]))
        return cls(count=int(x.size), mean=float(x.mean()), variance=var,
                   p10=p10, p50=p50, p90=p90,
                   stderr=float(np.sqrt(var / x.size)))

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "variance": self.variance,
                "p10": self.p10, "p50": self.p50, "p90": self.p90,
                "stderr": self.stderr}


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    sizes: tuple

    def __post_init__(self):
        if not (0.0 <= self.statistic <= 1.0):
            raise ValueError("KS statistic must lie in [0, 1]")
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError("p-value must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "sizes": list(self.sizes)}


def kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(x) = 2 sum (-1)^{k-1} e^{-2k^2x^2}."""
    if x < 1.1e-8:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * x * x)
        total += sign * term
        if term < 1e-16 * max(total, 1e-300):
            break
        sign = -sign
    return min(max(2.0 * total, 0.0), 1.0)


def _stephens_pvalue(d: float, en: float) -> float:
    return kolmogorov_sf((en + 0.12 + 0.11 / en) * d)


def ks_two_sample(a, b) -> KsResult:
    """Sup-distance of empirical CDFs with asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be nonempty")
    data = np.concatenate([a, b])
    cdf1 = np.searchsorted(a, data, side="right") / n1
    cdf2 = np.searchsorted(b, data, side="right") / n2
    d = float(np.max(np.abs(cdf1 - cdf2)))
    en = math.sqrt(n1 * n2 / (n1 + n2))
    return KsResult(statistic=d, p_value=_stephens_pvalue(d, en), sizes=(n1, n2))


def ks_one_sample_normal(samples, mean: float = 0.0, std: float = 1.0) -> KsResult:
    """KS distance of a sample against N(mean, std^2)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("sample must be nonempty")
    if std <= 0:
        raise ValueError("std must be positive")
    cdf = ndtr((x - mean) / std)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    d = float(max(np.max(ecdf_hi - cdf), np.max(cdf - ecdf_lo)))
    en = math.sqrt(n)
    return KsResult(statistic=d, p_value=_stephens_pvalue(d, en), sizes=(n,))


def fit_log2_slope(points) -> tuple:
    """Least-squares slope of log2(v) against n, with its standard error."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    n = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(v <= 0):
        raise ValueError("values must be positive for a log fit")
    y = np.log2(v)
    nbar = n.mean()
    sxx = float(np.sum((n - nbar) ** 2))
    slope = float(np.sum((n - nbar) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * nbar)
    resid = y - (intercept + slope * n)
    dof = len(pts) - 2
    sigma2 = float(np.sum(resid**2) / dof) if dof > 0 else 0.0
    return slope, float(np.sqrt(sigma2 / sxx))


def mc_mean_ci(samples, confidence: float = 0.95) -> tuple:
    """Normal-approximation confidence interval: (mean, half_width)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    if not (0.0 < confidence < 1.0):
        raise ValueError("confidence must lie in (0, 1)")
    z = float(ndtri(0.5 * (1.0 + confidence)))
    stderr = float(x.std(ddof=1) / np.sqrt(x.size))
    return float(x.mean()), z * stderr
