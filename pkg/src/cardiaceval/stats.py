"""Nonparametric statistics for paired and grouped comparisons: Wilcoxon
signed-rank (exact DP or tie-corrected normal approximation), Wilcoxon
rank-sum / Mann-Whitney for unpaired groups, Spearman rank correlation,
Bonferroni correction, and mean/std summaries.

Exact p-values come from dynamic programming over the actual rank multiset
(tie-aware), so they agree with full enumeration of sign assignments or
group assignments. Two-sided p doubles the smaller tail, capped at 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Default sample-size ceilings for exact distributions (DP cost bound).
SIGNED_RANK_EXACT_MAX_N = 25
RANK_SUM_EXACT_MAX_N = 20

METHOD_EXACT = "exact"
METHOD_NORMAL = "normal_approx"

# Star thresholds for report annotations.
SIGNIFICANCE_LEVELS = ((0.0001, "****"), (0.001, "***"), (0.01, "**"), (0.05, "*"))


class ConstantInputError(ValueError):
    """Correlation is undefined for a constant vector."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n_effective: int
    method: str
    p_corrected: float | None = None
    family_size: int | None = None
    degenerate: bool = False

    def corrected(self, family_size: int) -> "TestResult":
        return replace(
            self,
            p_corrected=bonferroni(self.p_value, family_size),
            family_size=family_size,
        )


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    n: int
    covariate: str | None = None


def significance_stars(p: float) -> str:
    for threshold, stars in SIGNIFICANCE_LEVELS:
        if p < threshold:
            return stars
    return ""


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _two_sided(lower_tail: float, upper_tail: float) -> float:
    return min(1.0, 2.0 * min(lower_tail, upper_tail))


def _subset_sum_counts(doubled_ranks: list[int]) -> list[int]:
    """counts[s] = number of subsets of the rank multiset with doubled-rank
    sum s (exact integer arithmetic)."""
    total = sum(doubled_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled_ranks:
        for s in range(total, r - 1, -1):
            if counts[s - r]:
                counts[s] += counts[s - r]
    return counts


def _choose_sum_counts(doubled_ranks: list[int], k: int) -> list[int]:
    """counts[s] = number of k-element subsets of the rank multiset with
    doubled-rank sum s."""
    total = sum(doubled_ranks)
    counts = [[0] * (total + 1) for _ in range(k + 1)]
    counts[0][0] = 1
    for r in doubled_ranks:
        for c in range(min(k, len(doubled_ranks)), 0, -1):
            row_prev = counts[c - 1]
            row = counts[c]
            for s in range(total, r - 1, -1):
                prev = row_prev[s - r]
                if prev:
                    row[s] += prev
    return counts[k]


def wilcoxon_signed_rank(
    x,
    y,
    exact_max_n: int = SIGNED_RANK_EXACT_MAX_N,
) -> TestResult:
    """Two-sided paired Wilcoxon signed-rank test.

    Zero differences are discarded (classic reduction); |d| is ranked with
    average ranks; the statistic is W+ (sum of ranks of positive
    differences). Exact DP over the rank multiset for n_effective <=
    exact_max_n, else normal approximation with tie-corrected variance and
    0.5 continuity correction.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired samples must be two equal-length 1D sequences")
    if x.size == 0:
        raise ValueError("need at least one pair")
    d = x - y
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return TestResult(statistic=0.0, p_value=1.0, n_effective=0, method=METHOD_EXACT, degenerate=True)

    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= exact_max_n:
        doubled = [int(round(2.0 * r)) for r in ranks]
        counts = _subset_sum_counts(doubled)
        denom = 2**n
        w2 = int(round(2.0 * w_plus))
        lower = sum(counts[: w2 + 1])
        upper = sum(counts[w2:])
        p = _two_sided(lower / denom, upper / denom)
        return TestResult(statistic=w_plus, p_value=p, n_effective=n, method=METHOD_EXACT)

    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts)).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    sd = math.sqrt(var)
    lower = _norm_cdf((w_plus - mu + 0.5) / sd)
    upper = 1.0 - _norm_cdf((w_plus - mu - 0.5) / sd)
    return TestResult(
        statistic=w_plus,
        p_value=_two_sided(lower, upper),
        n_effective=n,
        method=METHOD_NORMAL,
    )


def rank_sum_unpaired(
    group_a,
    group_b,
    exact_max_n: int = RANK_SUM_EXACT_MAX_N,
) -> TestResult:
    """Two-sided Wilcoxon rank-sum (Mann-Whitney U) test for two groups.

    The statistic is U for group_a computed from joint average ranks. Exact
    tie-aware DP over the rank multiset when n_a + n_b <= exact_max_n, else
    normal approximation with tie correction and continuity correction.
    """
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    na, nb = a.size, b.size
    n = na + nb
    combined = np.concatenate([a, b])
    ranks = average_ranks(combined)
    r_a = float(ranks[:na].sum())
    u_a = r_a - na * (na + 1) / 2.0

    if n <= exact_max_n:
        doubled = [int(round(2.0 * r)) for r in ranks]
        counts = _choose_sum_counts(doubled, na)
        denom = math.comb(n, na)
        r2 = int(round(2.0 * r_a))
        lower = sum(counts[: r2 + 1])
        upper = sum(counts[r2:])
        p = _two_sided(lower / denom, upper / denom)
        return TestResult(statistic=u_a, p_value=p, n_effective=n, method=METHOD_EXACT)

    mu = na * nb / 2.0
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float((tie_counts**3 - tie_counts).sum()) / (n * (n - 1))
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return TestResult(statistic=u_a, p_value=1.0, n_effective=n, method=METHOD_NORMAL, degenerate=True)
    sd = math.sqrt(var)
    lower = _norm_cdf((u_a - mu + 0.5) / sd)
    upper = 1.0 - _norm_cdf((u_a - mu - 0.5) / sd)
    return TestResult(
        statistic=u_a,
        p_value=_two_sided(lower, upper),
        n_effective=n,
        method=METHOD_NORMAL,
    )


def spearman(xs, ys) -> CorrelationResult:
    """Spearman rank correlation via Pearson correlation of average ranks
    (tie-robust; reduces to 1 - 6*sum(d^2)/(n(n^2-1)) without ties)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length 1D sequences")
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 observations, got {n}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantInputError("correlation undefined for a constant vector")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    rho = float((rx * ry).sum() / math.sqrt((rx**2).sum() * (ry**2).sum()))
    return CorrelationResult(rho=rho, n=n)


def bonferroni(p: float, family_size: int) -> float:
    """min(1, family_size * p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if family_size < 1:
        raise ValueError(f"family_size must be >= 1, got {family_size}")
    return min(1.0, family_size * p)


def summarize(values) -> tuple[float, float | None]:
    """(mean, sample std with n-1 denominator); std is None for n=1."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot summarize an empty list")
    mean = float(v.mean())
    if v.size == 1:
        return mean, None
    return mean, float(v.std(ddof=1))
