"""Statistical reporting: rank-based effect size, rank-sum test, hypervolume.

All functions are pure.  The rank-sum p-value uses the normal approximation
with mid-rank tie handling and a continuity correction; a companion exact
enumeration lives in the test suite as its oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .errors import EmptySample, PointBeyondReference, SampleTooSmall

MAGNITUDE_NEGLIGIBLE = "negligible"
MAGNITUDE_SMALL = "small"
MAGNITUDE_MEDIUM = "medium"
MAGNITUDE_LARGE = "large"


@dataclass(frozen=True)
class EffectSize:
    a12: float
    magnitude: str
    direction: str        # "x", "y", or "none": which sample tends larger


def classify_magnitude(e: float) -> str:
    """Magnitude class of a stochastic-superiority value.

    Small:  0.56 <= e < 0.64  or  0.36 < e <= 0.44
    Medium: 0.64 <= e < 0.71  or  0.29 < e <= 0.36
    Large:  e >= 0.71         or  e <= 0.29
    """
    if e >= 0.71 or e <= 0.29:
        return MAGNITUDE_LARGE
    if 0.64 <= e or e <= 0.36:
        return MAGNITUDE_MEDIUM
    if 0.56 <= e or e <= 0.44:
        return MAGNITUDE_SMALL
    return MAGNITUDE_NEGLIGIBLE


def a12(sample_x: list[float], sample_y: list[float]) -> EffectSize:
    """Probability-of-superiority effect size of X over Y.

    a12 = (#{x > y} + 0.5 #{x == y}) / (|X| |Y|); ties split evenly, so
    a12(X, Y) + a12(Y, X) == 1.
    """
    if not sample_x or not sample_y:
        raise EmptySample("both samples must be non-empty")
    wins = 0.0
    for x in sample_x:
        for y in sample_y:
            if x > y:
                wins += 1.0
            elif x == y:
                wins += 0.5
    value = wins / (len(sample_x) * len(sample_y))
    if value > 0.5:
        direction = "x"
    elif value < 0.5:
        direction = "y"
    else:
        direction = "none"
    return EffectSize(a12=value, magnitude=classify_magnitude(value),
                      direction=direction)


# ---------------------------------------------------------------------------
# Rank-sum test
# ---------------------------------------------------------------------------

def _midranks(values: list[float]) -> list[float]:
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_ranksum(sample_x: list[float], sample_y: list[float]) -> float:
    """Two-sided rank-sum p-value via the normal approximation.

    Uses mid-ranks for ties, the tie-corrected variance, and a 0.5
    continuity correction.  Degenerate data (zero variance) returns 1.0.
    """
    n1, n2 = len(sample_x), len(sample_y)
    if n1 < 3 or n2 < 3:
        raise SampleTooSmall("need at least 3 observations per sample")
    combined = list(sample_x) + list(sample_y)
    n = n1 + n2
    ranks = _midranks(combined)
    w = sum(ranks[:n1])
    mean = n1 * (n + 1) / 2.0

    counts: dict[float, int] = {}
    for v in combined:
        counts[v] = counts.get(v, 0) + 1
    tie_term = sum(t ** 3 - t for t in counts.values())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return 1.0
    dev = abs(w - mean) - 0.5
    if dev < 0:
        dev = 0.0
    z = dev / math.sqrt(var)
    return min(1.0, 2.0 * _norm_sf(z))


def exact_ranksum_p(sample_x: list[float], sample_y: list[float]) -> float:
    """Exact two-sided rank-sum p by enumerating every balanced assignment.

    Feasible for small samples only (C(n1+n2, n1) subsets); serves as the
    reference the normal approximation is checked against.
    """
    n1 = len(sample_x)
    combined = list(sample_x) + list(sample_y)
    n = len(combined)
    ranks = _midranks(combined)
    w_obs = sum(ranks[:n1])
    mean = n1 * (n + 1) / 2.0
    d_obs = abs(w_obs - mean)
    hits = 0
    total = 0
    for subset in itertools.combinations(range(n), n1):
        w = sum(ranks[i] for i in subset)
        total += 1
        if abs(w - mean) >= d_obs - 1e-12:
            hits += 1
    return hits / total


# ---------------------------------------------------------------------------
# Hypervolume (2-D, minimization)
# ---------------------------------------------------------------------------

def hypervolume_2d(front: list[tuple[float, float]],
                   reference: tuple[float, float]) -> float:
    """Area dominated by a 2-D front relative to the reference point.

    Dominated front members contribute nothing; any point beyond the
    reference raises PointBeyondReference.
    """
    if not front:
        return 0.0
    rx, ry = reference
    for p in front:
        if p[0] > rx or p[1] > ry:
            raise PointBeyondReference(f"{p} does not dominate {reference}")
    # keep non-dominated points only
    pts = sorted(set(front))
    nd = []
    best_y = math.inf
    for x, y in pts:
        if y < best_y:
            nd.append((x, y))
            best_y = y
    area = 0.0
    for i, (x, y) in enumerate(nd):
        next_x = nd[i + 1][0] if i + 1 < len(nd) else rx
        area += (next_x - x) * (ry - y)
    return area
