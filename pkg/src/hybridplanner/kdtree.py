"""Nearest-neighbour indices over joint-space points.

:class:`KDTree` wraps :class:`scipy.spatial.cKDTree` with lowest-index tie
breaking; :class:`GrowingKDTree` supports insertion by keeping a
logarithmic family of static trees (the Bentley-Saxe construction).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

LEAF_SIZE = 16


class KDTree:
    """Static tree with exact Euclidean nearest and radius queries.

    ``indices`` relabels the points (default ``0..N-1``); all queries
    report labels and break distance ties by the lowest label.
    """

    def __init__(self, points, indices=None, leaf_size=LEAF_SIZE):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("KDTree needs a non-empty (N, k) array")
        self.points = pts
        self.indices = np.arange(len(pts)) if indices is None else np.asarray(indices)
        self._tree = cKDTree(pts, leafsize=leaf_size)

    def __len__(self):
        return len(self.points)

    def nearest(self, x):
        """``(label, distance)`` of the closest point to ``x``."""
        i, d2 = self.nearest_sq(x)
        return i, float(np.sqrt(d2))

    def nearest_sq(self, x):
        """``(label, squared distance)`` of the closest point to ``x``."""
        x = np.asarray(x, dtype=float)
        d, _ = self._tree.query(x)
        # recompute candidates at the reported radius so exact ties resolve
        cand = np.asarray(self._tree.query_ball_point(x, d * (1 + 1e-9) + 1e-300), dtype=int)
        diff = self.points[cand] - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        best = cand[d2 == d2.min()]
        k = int(self.indices[best].min())
        return k, float(d2.min())

    def query_radius(self, x, r):
        """Labels of points within distance ``r`` of ``x`` (sorted)."""
        hits = self._tree.query_ball_point(np.asarray(x, dtype=float), r)
        return np.sort(self.indices[np.asarray(hits, dtype=int)])


class GrowingKDTree:
    """Insert-only nearest-neighbour index with amortised rebuilds.

    Points get consecutive indices in insertion order.  Recent insertions
    live in a small buffer that is scanned linearly.
    """

    def __init__(self, dim, leaf_size=LEAF_SIZE):
        self.dim = dim
        self.leaf_size = leaf_size
        self._data = np.empty((64, dim))
        self._count = 0
        self._trees = []  # static trees over disjoint index ranges
        self._buffer_start = 0

    def __len__(self):
        return self._count

    @property
    def points(self):
        return self._data[:self._count]

    def add(self, x):
        if self._count == len(self._data):
            grown = np.empty((2 * len(self._data), self.dim))
            grown[:self._count] = self._data[:self._count]
            self._data = grown
        self._data[self._count] = x
        self._count += 1
        if self._count - self._buffer_start >= self.leaf_size * 4:
            self._flush()
        return self._count - 1

    def _flush(self):
        lo, hi = self._buffer_start, self._count
        size = hi - lo
        # merge trees of size no larger than the incoming block
        while self._trees and len(self._trees[-1]) <= size:
            t = self._trees.pop()
            lo = int(t.indices.min())
            size = hi - lo
        idx = np.arange(lo, hi)
        self._trees.append(KDTree(self._data[lo:hi].copy(), idx, self.leaf_size))
        self._buffer_start = hi

    def nearest(self, x):
        x = np.asarray(x, dtype=float)
        best_i, best_d2 = -1, np.inf
        for t in self._trees:
            i, d2 = t.nearest_sq(x)
            if d2 < best_d2 or (d2 == best_d2 and i < best_i):
                best_i, best_d2 = i, d2
        lo, hi = self._buffer_start, self._count
        if hi > lo:
            diff = self._data[lo:hi] - x
            d2 = np.einsum("ij,ij->i", diff, diff)
            k = int(np.argmin(d2))
            if d2[k] < best_d2:
                best_i, best_d2 = lo + k, float(d2[k])
        return best_i, float(np.sqrt(best_d2))

    def query_radius(self, x, r):
        x = np.asarray(x, dtype=float)
        parts = [t.query_radius(x, r) for t in self._trees]
        lo, hi = self._buffer_start, self._count
        if hi > lo:
            diff = self._data[lo:hi] - x
            d2 = np.einsum("ij,ij->i", diff, diff)
            parts.append(lo + np.nonzero(d2 <= r * r)[0])
        if not parts:
            return np.zeros(0, dtype=int)
        return np.sort(np.concatenate(parts))
