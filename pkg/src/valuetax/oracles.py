"""Naive reference implementations used to validate the metric stack.

Everything here is written the slow, obvious way on purpose: explicit rank
construction, exhaustive O(n^2) pair classification, the double-sum Gini.
Nothing imports from the metrics module, so agreement between the two paths
is meaningful evidence.
"""

from __future__ import annotations

import math
from typing import Sequence


def _naive_ranks(xs: Sequence[float]) -> list[float]:
    # rank = (#strictly smaller) + (1 + ... + #equal)/#equal, spelled out
    ranks = []
    for xi in xs:
        less = sum(1 for xj in xs if xj < xi)
        equal = sum(1 for xj in xs if xj == xi)
        first = less + 1
        last = less + equal
        ranks.append(sum(range(first, last + 1)) / equal)
    return ranks


def oracle_spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Textbook Pearson correlation computed on explicitly built ranks."""
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    if len(xs) < 2:
        raise ValueError("need at least 2 observations")
    a = _naive_ranks(xs)
    b = _naive_ranks(ys)
    n = len(a)
    mean_a = sum(a) / n
    mean_b = sum(b) / n
    num = 0.0
    ssa = 0.0
    ssb = 0.0
    for i in range(n):
        da = a[i] - mean_a
        db = b[i] - mean_b
        num += da * db
        ssa += da * da
        ssb += db * db
    den = math.sqrt(ssa * ssb)
    if den == 0.0:
        return 0.0
    return num / den


def oracle_kendall(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Tau-b by exhaustive classification of every pair."""
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least 2 observations")
    concordant = 0
    discordant = 0
    ties_x = 0
    ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            if dx == 0 and dy == 0:
                ties_x += 1
                ties_y += 1
            elif dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) / 2
    den = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if den == 0.0:
        return 0.0
    return (concordant - discordant) / den


def oracle_gini(xs: Sequence[float]) -> float:
    """Gini via the mean-absolute-difference double sum."""
    n = len(xs)
    if n == 0:
        raise ValueError("empty profile")
    if any(x < 0 for x in xs):
        raise ValueError("negative component")
    mu = sum(xs) / n
    if mu == 0.0:
        return 0.0
    double_sum = 0.0
    for xi in xs:
        for xj in xs:
            double_sum += abs(xi - xj)
    return double_sum / (2 * n * n * mu)


def oracle_rank_sum(group_a: Sequence[float], group_b: Sequence[float]) -> float:
    """Mann-Whitney statistic for group_a by direct pair counting:
    one point per b beaten, half a point per tie."""
    u = 0.0
    for a in group_a:
        for b in group_b:
            if a > b:
                u += 1.0
            elif a == b:
                u += 0.5
    return u
