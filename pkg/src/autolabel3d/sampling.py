"""Farthest point sampling."""
from __future__ import annotations

import numpy as np


def farthest_point_indices(points, m, seed_index=0):
    """Greedy farthest point sampling.

    Starts at ``seed_index``; every step picks the point whose squared
    distance to the selected set is largest, ties going to the smallest index.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if m > n:
        raise ValueError(f"cannot sample {m} points from {n}")
    if m <= 0:
        return np.zeros(0, dtype=np.int64)
    if not 0 <= seed_index < n:
        raise IndexError(f"seed_index {seed_index} out of range for {n} points")
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = seed_index
    dist = ((points - points[seed_index]) ** 2).sum(axis=1)
    dist[seed_index] = -1.0
    for k in range(1, m):
        i = int(np.argmax(dist))
        chosen[k] = i
        d = ((points - points[i]) ** 2).sum(axis=1)
        np.minimum(dist, d, out=dist)
        dist[i] = -1.0
    return chosen


def fps(points, m, seed_index=0):
    """The ``m`` points chosen by :func:`farthest_point_indices`, in selection order."""
    points = np.asarray(points, dtype=float)
    return points[farthest_point_indices(points, m, seed_index)]
