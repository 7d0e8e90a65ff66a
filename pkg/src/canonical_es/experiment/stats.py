"""Two-sided Mann-Whitney U test.

Exact null distribution (by counting rank-sum subsets) when the smaller
sample has at most 8 observations, otherwise the normal approximation with
tie-corrected variance and continuity correction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

EXACT_MAX_MIN_SIZE = 8
_EXACT_MAX_TOTAL = 5000


@dataclass(frozen=True)
class ComparisonResult:
    u: float
    u_other: float
    p_value: float
    significant: bool
    method: str

    def to_dict(self) -> dict:
        return asdict(self)


def midranks(values) -> np.ndarray:
    """1-based ranks, tied values share the mean of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=np.float64)
    sx = x[order]
    i = 0
    n = x.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _subset_sum_counts(doubled: np.ndarray, k: int) -> np.ndarray:
    """``counts[s]`` = number of ``k``-subsets whose doubled-rank sum is ``s``."""
    total = int(doubled.sum())
    n = doubled.shape[0]
    dtype = np.int64 if math.comb(n, k) < 2 ** 62 else np.float64
    dp = np.zeros((k + 1, total + 1), dtype=dtype)
    dp[0, 0] = 1
    for r in doubled:
        r = int(r)
        for j in range(k, 0, -1):
            dp[j, r:] += dp[j - 1, :total + 1 - r]
    return dp[k]


def _exact_p(ra_doubled: int, doubled: np.ndarray, k: int):
    counts = _subset_sum_counts(doubled, k)
    le = counts[:ra_doubled + 1].sum()
    ge = counts[ra_doubled:].sum()
    total = counts.sum()
    if counts.dtype == np.int64:
        le, ge, total = int(le), int(ge), int(total)
    return min(1.0, 2 * min(le, ge) / total)


def mann_whitney_u(a: Sequence[float], b: Sequence[float], alpha: float = 0.05,
                   method: str = "auto") -> ComparisonResult:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n, m = a.shape[0], b.shape[0]
    if n < 1 or m < 1:
        raise ValueError("both samples need at least one observation")
    if np.any(np.isnan(a)) or np.any(np.isnan(b)):
        raise ValueError("NaN in sample")
    ranks = midranks(np.concatenate([a, b]))
    r_a = float(ranks[:n].sum())
    u_a = r_a - n * (n + 1) / 2.0
    u_b = n * m - u_a
    if method == "auto":
        method = "exact" if min(n, m) <= EXACT_MAX_MIN_SIZE and n + m <= _EXACT_MAX_TOTAL else "normal"
    if method == "exact":
        doubled = np.rint(2 * ranks).astype(np.int64)
        if n <= m:
            p = _exact_p(int(doubled[:n].sum()), doubled, n)
        else:
            p = _exact_p(int(doubled[n:].sum()), doubled, m)
    elif method == "normal":
        big_n = n + m
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts))
        var = n * m / 12.0 * ((big_n + 1) - tie_term / (big_n * (big_n - 1))) if big_n > 1 else 0.0
        if var <= 0:
            p = 1.0
        else:
            z = max(0.0, abs(u_a - n * m / 2.0) - 0.5) / math.sqrt(var)
            # clamp away from 0 so p stays in (0, 1] for extreme separations
            p = min(1.0, max(math.erfc(z / math.sqrt(2.0)), np.finfo(np.float64).tiny))
    else:
        raise ValueError(f"unknown method {method!r}")
    return ComparisonResult(u_a, u_b, p, p < alpha, method)
