"""Independent brute-force reference implementations.

Everything here is deliberately naive (python loops, exhaustive search)
and shares no code with the library, so tests can check the fast paths
against first-principles computations.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np


def percentile_sorted(values, q: float) -> float:
    """Percentile by sorting + linear interpolation between order stats."""
    vals = sorted(float(v) for v in np.asarray(values).ravel())
    pos = q * (len(vals) - 1)
    lo = int(math.floor(pos))
    hi = int(math.ceil(pos))
    frac = pos - lo
    return vals[lo] * (1 - frac) + vals[hi] * frac


def local_mean_brute(channel: np.ndarray, window: int) -> np.ndarray:
    """Windowed mean with edge replication, by explicit loops."""
    ch = np.asarray(channel, dtype=float)
    h, w = ch.shape
    r = window // 2
    out = np.empty_like(ch)
    for i in range(h):
        for j in range(w):
            total = 0.0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    total += ch[ii, jj]
            out[i, j] = total / (window * window)
    return out


def otsu_exhaustive(values, bins: int = 256) -> float:
    """Scan every candidate split, maximizing between-class variance.

    Class statistics are recomputed from scratch per split as exact
    Fractions over bin indices (between-class variance in index units is
    w0*w1*(mu0-mu1)^2, and the index->value map is affine, so the ranking
    is identical). Ties resolve to the middle of the tied plateau.
    """
    from fractions import Fraction

    vals = np.asarray(values, dtype=float).ravel()
    vmin, vmax = vals.min(), vals.max()
    assert vmin < vmax, "constant input"
    hist, edges = np.histogram(vals, bins=bins, range=(vmin, vmax))
    counts = [int(c) for c in hist]
    n = sum(counts)
    scores = []
    for i in range(bins - 1):
        n0 = sum(counts[: i + 1])
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            scores.append(Fraction(0))
            continue
        mu0 = Fraction(sum(c * j for j, c in enumerate(counts[: i + 1])), n0)
        mu1 = Fraction(sum(c * j for j, c in enumerate(counts) if j > i), n1)
        scores.append(Fraction(n0, n) * Fraction(n1, n) * (mu0 - mu1) ** 2)
    best = max(scores)
    tied = [i for i, s in enumerate(scores) if s == best]
    mids = (edges[:-1] + edges[1:]) / 2
    return float(mids[tied[len(tied) // 2]])


def knn_brute(ambiguous, exemplars, classes, k: int):
    """Exhaustive k-nearest-neighbor vote.

    Neighbor order is (squared distance, exemplar index); vote ties go to
    the best-ranked neighbor carrying a tied class.
    """
    exemplars = [tuple(map(float, e)) for e in np.atleast_2d(exemplars)]
    classes = list(np.asarray(classes))
    out = []
    for a in np.atleast_2d(ambiguous):
        a = tuple(map(float, a))
        ranked = sorted(
            range(len(exemplars)),
            key=lambda j: (sum((x - y) ** 2 for x, y in zip(a, exemplars[j])), j),
        )[:k]
        votes = Counter(classes[j] for j in ranked)
        top = max(votes.values())
        tied = {c for c, v in votes.items() if v == top}
        for j in ranked:
            if classes[j] in tied:
                out.append(classes[j])
                break
    return out


def iou_count(a, b) -> float:
    """IoU by explicit pixel counting."""
    inter = 0
    union = 0
    for x, y in zip(np.asarray(a, dtype=bool).ravel(), np.asarray(b, dtype=bool).ravel()):
        if x and y:
            inter += 1
        if x or y:
            union += 1
    return 1.0 if union == 0 else inter / union


def pearson_direct(a, b) -> float:
    """Pearson coefficient via fsum of the textbook formula."""
    xs = [float(v) for v in np.asarray(a).ravel()]
    ys = [float(v) for v in np.asarray(b).ravel()]
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    cov = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = math.fsum((x - mx) ** 2 for x in xs)
    vy = math.fsum((y - my) ** 2 for y in ys)
    return cov / math.sqrt(vx * vy)
