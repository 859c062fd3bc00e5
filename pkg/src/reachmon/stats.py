"""Small statistics toolkit for the Monte Carlo validation harness.

Nothing here is novel: Wilson score intervals for binomial rates, a
pool-adjacent-violators isotonic fit with a parametric-bootstrap
goodness test for "is this rate curve nondecreasing", the exact
one-sided sign test, and ordinary least squares with R² for the
latency-scaling fits.  They live in one place so the harness and the
acceptance checks share identical arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import DomainError

__all__ = [
    "wilson_interval",
    "LineFit",
    "fit_line",
    "isotonic_fit",
    "monotone_trend_pvalue",
    "sign_test_pvalue",
]


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise DomainError("trials must be positive")
    if not 0 <= successes <= trials:
        raise DomainError(f"successes {successes} outside [0, {trials}]")
    z = float(sps.norm.ppf(0.5 + confidence / 2.0))
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = (z / denom) * np.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials))
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float


def fit_line(x, y) -> LineFit:
    """Ordinary least squares y = slope*x + intercept with R²."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DomainError("need two equal-length 1-D samples of size >= 2")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise DomainError("x values are all identical")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    syy = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if syy == 0.0 else 1.0 - float(np.sum(resid**2)) / syy
    return LineFit(slope=slope, intercept=intercept, r_squared=r2)


def isotonic_fit(values, weights=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit (pool adjacent violators)."""
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.ndim != 1:
        raise DomainError("values and weights must be matching 1-D arrays")
    if np.any(w <= 0):
        raise DomainError("weights must be positive")
    # Blocks of (weighted mean, weight, run length), merged on violation.
    means: list[float] = []
    wts: list[float] = []
    runs: list[int] = []
    for val, wt in zip(v, w):
        means.append(float(val))
        wts.append(float(wt))
        runs.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, r2 = means.pop(), wts.pop(), runs.pop()
            m1, w1, r1 = means.pop(), wts.pop(), runs.pop()
            means.append((m1 * w1 + m2 * w2) / (w1 + w2))
            wts.append(w1 + w2)
            runs.append(r1 + r2)
    return np.repeat(means, runs)


def _rate_residual_stat(successes, trials, fitted) -> float:
    phat = successes / trials
    var = np.maximum(fitted * (1.0 - fitted), 1e-12)
    return float(np.sum(trials * (phat - fitted) ** 2 / var))


def monotone_trend_pvalue(
    successes, trials, *, resamples: int = 500, seed: int = 1234
) -> float:
    """Parametric-bootstrap p-value for "the rate curve is nondecreasing".

    Fits the isotonic (nondecreasing) rate curve to the observed
    binomial counts, measures the chi-square-style residual of the data
    against it, and compares with residuals of counts resampled from the
    fitted curve.  A small p-value means the data deviate from every
    nondecreasing curve more than binomial noise explains — i.e. the
    monotone hypothesis is rejected.
    """
    s = np.asarray(successes, dtype=float)
    n = np.asarray(trials, dtype=float)
    if s.shape != n.shape or s.ndim != 1 or s.size < 2:
        raise DomainError("need matching 1-D success/trial arrays, length >= 2")
    if np.any(n <= 0):
        raise DomainError("trial counts must be positive")
    fitted = np.clip(isotonic_fit(s / n, weights=n), 0.0, 1.0)
    observed = _rate_residual_stat(s, n, fitted)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(resamples):
        sim = rng.binomial(n.astype(int), fitted)
        sim_fit = np.clip(isotonic_fit(sim / n, weights=n), 0.0, 1.0)
        if _rate_residual_stat(sim, n, sim_fit) >= observed - 1e-12:
            hits += 1
    return (hits + 1) / (resamples + 1)


def sign_test_pvalue(positives: int, pairs: int) -> float:
    """Exact one-sided sign test: P[X >= positives], X ~ Binomial(pairs, 1/2).

    Ties must be dropped by the caller before counting.
    """
    if pairs <= 0:
        raise DomainError("need at least one untied pair")
    if not 0 <= positives <= pairs:
        raise DomainError(f"positives {positives} outside [0, {pairs}]")
    return float(sps.binom.sf(positives - 1, pairs, 0.5))
