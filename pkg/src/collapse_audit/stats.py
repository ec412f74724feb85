"""Two-sided significance tests, paired effect size and inter-rater agreement.

Exact null distributions are built by dynamic programming over doubled
mid-ranks, which keeps them integer-valued in the presence of ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .errors import DegenerateSampleError, InsufficientSampleError

EXACT_MAX_N = 20
EXACT = "exact"
NORMAL = "normal_approx"


@dataclass
class TestResult:
    statistic: float
    p_value: float
    method: str
    n_effective: int
    notes: list[str] = field(default_factory=list)
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "n_effective": self.n_effective,
            "notes": self.notes,
            "warning": self.warning,
            "stars": stars(self.p_value),
        }


@dataclass
class EffectSize:
    d: float
    n: int

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n}


def stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def _clip(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def _differences(a, b=None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if b is None:
        return a
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    return b - a


def _two_sided_from_counts(counts: np.ndarray, observed: int) -> float:
    """Doubled smaller tail of an integer-supported null given as counts per value."""
    total = counts.sum()
    lower = counts[: observed + 1].sum() / total
    upper = counts[observed:].sum() / total
    return _clip(2.0 * min(lower, upper))


def signed_rank_null(doubled_ranks: Sequence[int]) -> np.ndarray:
    """Counts of each attainable doubled positive-rank sum over all 2^n sign patterns."""
    top = int(sum(doubled_ranks))
    counts = np.zeros(top + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: top + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(a, b=None, exact_max_n: int = EXACT_MAX_N) -> TestResult:
    """Paired two-sided signed-rank test on ``b - a`` (or on ``a`` alone as differences).

    Zero differences are dropped and tied magnitudes get mid-ranks. The
    reported statistic is ``min(W+, W-)``.
    """
    d = _differences(a, b)
    zeros = int(np.sum(d == 0))
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DegenerateSampleError("all paired differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    notes = [f"{zeros} zero differences dropped"] if zeros else []
    tie_sizes = np.unique(np.abs(d), return_counts=True)[1]
    if np.any(tie_sizes > 1):
        notes.append(f"{int(np.sum(tie_sizes > 1))} tie groups given mid-ranks")
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(int)
        counts = signed_rank_null(doubled)
        p = _two_sided_from_counts(counts, int(round(2 * w_plus)))
        return TestResult(min(w_plus, w_minus), p, EXACT, n, notes)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return TestResult(min(w_plus, w_minus), _clip(2 * norm.sf(z)), NORMAL, n, notes)


def rank_sum_null(doubled_ranks: Sequence[int], n_a: int) -> np.ndarray:
    """Counts of each doubled rank sum over all size-``n_a`` subsets of the pooled ranks."""
    top = int(sum(sorted(doubled_ranks, reverse=True)[:n_a]))
    # dp[k, s]: number of k-subsets seen so far with doubled rank sum s
    dp = np.zeros((n_a + 1, top + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    for r in doubled_ranks:
        for k in range(n_a, 0, -1):
            dp[k, r:] += dp[k - 1, : top + 1 - r]
    return dp[n_a]


def mann_whitney_u(a, b, exact_max_n: int = EXACT_MAX_N) -> TestResult:
    """Two-sided rank-sum test; the statistic is U for sample ``a``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise InsufficientSampleError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    offset = n_a * (n_a + 1) / 2.0
    u_a = float(ranks[:n_a].sum() - offset)
    tie_sizes = np.unique(pooled, return_counts=True)[1]
    notes = [f"{int(np.sum(tie_sizes > 1))} tie groups given mid-ranks"] if np.any(tie_sizes > 1) else []
    N = n_a + n_b
    if N <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(int)
        counts = rank_sum_null(doubled, n_a)
        p = _two_sided_from_counts(counts, int(round(2 * ranks[:n_a].sum())))
        return TestResult(u_a, p, EXACT, N, notes)
    mean = n_a * n_b / 2.0
    var = n_a * n_b / 12.0 * ((N + 1) - float(np.sum(tie_sizes**3 - tie_sizes)) / (N * (N - 1)))
    if var <= 0:
        return TestResult(u_a, 1.0, NORMAL, N, notes + ["all values tied"])
    z = max(abs(u_a - mean) - 0.5, 0.0) / math.sqrt(var)
    return TestResult(u_a, _clip(2 * norm.sf(z)), NORMAL, N, notes)


def chi_square_proportions(count_a: int, n_a: int, count_b: int, n_b: int) -> TestResult:
    """Pearson statistic on the 2x2 success/failure table, 1 df, no continuity correction."""
    if n_a < 1 or n_b < 1:
        raise InsufficientSampleError("both groups need at least one observation")
    if not (0 <= count_a <= n_a and 0 <= count_b <= n_b):
        raise ValueError("counts must lie in [0, n]")
    obs = np.array([[count_a, n_a - count_a], [count_b, n_b - count_b]], dtype=float)
    rows = obs.sum(axis=1, keepdims=True)
    cols = obs.sum(axis=0, keepdims=True)
    expected = rows * cols / obs.sum()
    warning = "expected cell count below 1" if np.any(expected < 1) else None
    if np.any(cols == 0):
        return TestResult(0.0, 1.0, "chi_square", n_a + n_b, ["a table column is empty"], warning)
    stat = float(np.sum((obs - expected) ** 2 / expected))
    return TestResult(stat, _clip(chi2.sf(stat, 1)), "chi_square", n_a + n_b, [], warning)


def cohen_d_paired(a, b=None) -> EffectSize:
    """Mean over sample standard deviation of the paired differences ``b - a``."""
    d = _differences(a, b)
    if len(d) < 2:
        raise InsufficientSampleError("need at least 2 pairs")
    sd = float(np.std(d, ddof=1))
    if not sd > 0:
        raise DegenerateSampleError("paired differences have zero spread")
    return EffectSize(float(np.mean(d)) / sd, len(d))


def cohen_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement; defined as 1 when both raters are constant and equal."""
    if len(labels_a) != len(labels_b) or len(labels_a) == 0:
        raise ValueError("label sequences must have equal non-zero length")
    n = len(labels_a)
    levels = sorted(set(labels_a) | set(labels_b), key=repr)
    p_o = sum(x == y for x, y in zip(labels_a, labels_b)) / n
    p_e = math.fsum((list(labels_a).count(c) / n) * (list(labels_b).count(c) / n) for c in levels)
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)
