"""Rank-based fitness shaping.

Both functions only look at the order of the scores, which is what makes the
ES updates invariant to strictly increasing transforms of the fitness.
"""

from __future__ import annotations

import math

import numpy as np


def order_best_first(scores) -> np.ndarray:
    """Indices sorted by descending score, ties broken by ascending index."""
    s = np.asarray(scores, dtype=np.float64)
    if np.any(np.isnan(s)):
        raise ValueError("NaN score")
    # stable sort on the negated scores keeps lower indices first among ties
    return np.argsort(-s, kind="stable")


def normalized_ranks(scores) -> np.ndarray:
    """Map scores to ``k / lam`` where ``k`` is the ascending position (0 = worst).

    Ties are ordered by original index, so ``[5, 5]`` maps to ``[0, 0.5]``.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] < 2:
        raise ValueError("need at least two scores")
    if np.any(np.isnan(s)):
        raise ValueError("NaN score")
    lam = s.shape[0]
    order = np.argsort(s, kind="stable")
    positions = np.empty(lam, dtype=np.int64)
    positions[order] = np.arange(lam)
    return positions / lam


def recombination_weights(mu: int) -> np.ndarray:
    """Log-linear weights ``(ln(mu + 0.5) - ln i) / sum_j (ln(mu + 0.5) - ln j)``."""
    if mu < 1:
        raise ValueError(f"mu must be >= 1, got {mu}")
    raw = np.array([math.log(mu + 0.5) - math.log(i) for i in range(1, mu + 1)])
    return raw / math.fsum(raw)


def effective_mu(weights) -> float:
    w = np.asarray(weights, dtype=np.float64)
    return float(1.0 / np.sum(w * w))
