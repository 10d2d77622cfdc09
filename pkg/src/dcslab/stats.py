"""Goodness-of-fit tests used by the verification suites.

All p-values are asymptotic: the Kolmogorov limit law for KS (with Stephens'
finite-n scaling of the statistic) and the chi-square law for Pearson and
dispersion statistics.  Nothing here draws random numbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

DEFAULT_SIGNIFICANCE = 1e-3


@dataclass(frozen=True)
class TestReport:
    test_id: str
    statistic: float
    p_value: float
    n: int
    significance: float = DEFAULT_SIGNIFICANCE
    flags: tuple = ()
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value out of range: {self.p_value}")

    @property
    def passed(self) -> bool:
        return self.p_value > self.significance

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n": self.n,
            "significance": self.significance,
            "pass": self.passed,
            "flags": list(self.flags),
            **({"details": self.details} if self.details else {}),
        }


def _nonempty(sample) -> np.ndarray:
    x = np.asarray(sample, float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    return x


def ks_statistic(sample, cdf) -> float:
    x = np.sort(_nonempty(sample))
    n = x.size
    f = np.asarray(cdf(x), float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def kolmogorov_pvalue(d: float, n: int) -> float:
    sn = math.sqrt(n)
    return float(np.clip(special.kolmogorov((sn + 0.12 + 0.11 / sn) * d), 0.0, 1.0))


def ks_test(sample, cdf, test_id: str = "ks", significance: float = DEFAULT_SIGNIFICANCE) -> TestReport:
    """One-sample KS test of ``sample`` against the continuous CDF ``cdf``."""
    x = _nonempty(sample)
    d = ks_statistic(x, cdf)
    return TestReport(test_id, d, kolmogorov_pvalue(d, x.size), x.size, significance)


def chi_square(observed, probs, test_id: str = "chi2", significance: float = DEFAULT_SIGNIFICANCE,
               ddof: int = 0) -> TestReport:
    """Pearson test of cell counts against cell probabilities (flattened)."""
    o = np.asarray(observed, float).ravel()
    p = np.asarray(probs, float).ravel()
    n = o.sum()
    if n == 0:
        raise ValueError("empty sample")
    e = n * p / p.sum()
    stat = float(np.sum((o - e) ** 2 / e))
    dof = o.size - 1 - ddof
    flags = ("low_expected",) if e.min() < 5 else ()
    return TestReport(test_id, stat, float(special.chdtrc(dof, stat)), int(n), significance, flags,
                      {"dof": dof, "min_expected": float(e.min())})


def chi_square_uniform(sample, bins: int, test_id: str = "chi2_uniform",
                       significance: float = DEFAULT_SIGNIFICANCE) -> TestReport:
    """Equal-probability Pearson test for a sample on [0, 1)."""
    if bins < 2:
        raise ValueError("need at least two bins")
    x = _nonempty(sample)
    if np.any((x < 0) | (x >= 1)):
        raise ValueError("sample must lie in [0, 1)")
    counts = np.bincount(np.minimum((x * bins).astype(int), bins - 1), minlength=bins)
    return chi_square(counts, np.full(bins, 1.0 / bins), test_id, significance)


def poisson_dispersion(counts, test_id: str = "poisson_dispersion",
                       significance: float = DEFAULT_SIGNIFICANCE) -> TestReport:
    """Index-of-dispersion test: ``(n-1) s^2 / mean`` against chi-square(n-1), two-sided."""
    c = np.asarray(counts, float).ravel()
    if c.size < 2:
        raise ValueError("need at least two counts")
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    n = c.size
    mean = c.mean()
    if mean == 0:
        return TestReport(test_id, math.nan, 0.0, n, significance, ("degenerate",))
    stat = float((n - 1) * c.var(ddof=1) / mean)
    lower = float(special.chdtr(n - 1, stat))
    upper = float(special.chdtrc(n - 1, stat))
    flags = []
    if lower < significance:
        flags.append("underdispersed")
    if upper < significance:
        flags.append("overdispersed")
    return TestReport(test_id, stat, min(1.0, 2 * min(lower, upper)), n, significance, tuple(flags),
                      {"mean": float(mean), "variance": float(c.var(ddof=1))})


def ecdf(sample):
    x = np.sort(_nonempty(sample))
    return lambda t: np.searchsorted(x, np.asarray(t, float), side="right") / x.size


def correlation_matrix(a, b) -> np.ndarray:
    """Pearson correlations between the columns of ``a`` and the columns of ``b``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    az = (a - a.mean(0)) / a.std(0)
    bz = (b - b.mean(0)) / b.std(0)
    return az.T @ bz / a.shape[0]


def exp_cdf(x):
    return -np.expm1(-np.maximum(np.asarray(x, float), 0.0))


def uniform_cdf(x):
    return np.clip(np.asarray(x, float), 0.0, 1.0)


def arcsine_cdf(x):
    return 2.0 / np.pi * np.arcsin(np.sqrt(np.clip(np.asarray(x, float), 0.0, 1.0)))


def write_summary_csv(reports, file) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["test_id", "statistic", "p", "pass"])
        for r in reports:
            w.writerow([r.test_id, repr(r.statistic), repr(r.p_value), r.passed])
