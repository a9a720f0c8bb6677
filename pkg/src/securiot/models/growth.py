"""Exact greedy binary tree growth shared by CART and the boosted regression trees.

Trees are flat arrays in breadth-first order. Node ``i`` is a leaf when
``feature[i] == -1``; otherwise rows with ``x[feature] <= threshold`` go to
``left[i]`` and the rest to ``right[i]``. Candidate thresholds are midpoints
between consecutive distinct sorted values of the rows reaching the node.
Among equally scored splits the lowest feature index wins, then the lowest
threshold.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .base import EmptyNode

# elements per working block when scanning features (bounds peak memory)
_BLOCK = 20_000_000


def gini(counts) -> float:
    """Gini impurity ``1 - sum((c/n)^2)`` of a class-count vector."""
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 1 or np.any(c < 0):
        raise ValueError("counts must be a non-negative vector")
    n = c.sum()
    if n <= 0:
        raise EmptyNode("gini of an empty node")
    p = c / n
    return float(1.0 - np.dot(p, p))


@dataclass
class TreeArrays:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while rows.size:
            f = self.feature[node[rows]]
            internal = f >= 0
            rows, f = rows[internal], f[internal]
            if not rows.size:
                break
            cur = node[rows]
            go_left = X[rows, f] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
        return node


def _midpoints(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    t = lo + (hi - lo) / 2.0
    # guard adjacent floats where the midpoint rounds onto the upper value
    return np.where(t < hi, t, lo)


# A scorer maps cumulative left statistics and node totals to a split score
# (higher is better, -inf for inadmissible positions).
Scorer = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def best_split(Xn: np.ndarray, stats: np.ndarray, scorer: Scorer) -> tuple[int, float, float] | None:
    """Exhaustive split search; returns ``(feature, threshold, score)`` or None.

    ``stats`` is an ``(m, s)`` matrix of additive per-row statistics
    (one-hot labels for CART, gradient and hessian for boosting).
    """
    m, d = Xn.shape
    if m < 2:
        return None
    total = stats.sum(axis=0)
    counts_left = np.arange(1, m, dtype=np.float64)
    chunk = max(1, _BLOCK // max(1, m * stats.shape[1]))
    best: tuple[int, float, float] | None = None
    for start in range(0, d, chunk):
        cols = slice(start, min(d, start + chunk))
        order = np.argsort(Xn[:, cols], axis=0, kind="stable")
        xs = np.take_along_axis(Xn[:, cols], order, axis=0)
        distinct = xs[1:] > xs[:-1]
        if not distinct.any():
            continue
        cum = np.cumsum(stats[order], axis=0)[:-1]          # (m-1, c, s)
        score = scorer(cum, total, counts_left[:, None])       # (m-1, c)
        score = np.where(distinct, score, -np.inf)
        flat = score.T.ravel()                                  # feature-major
        k = int(np.argmax(flat))
        if not np.isfinite(flat[k]):
            continue
        if best is None or flat[k] > best[2]:
            j, pos = divmod(k, m - 1)
            thr = float(_midpoints(xs[pos, j:j + 1], xs[pos + 1, j:j + 1])[0])
            best = (start + j, thr, float(flat[k]))
    return best


def grow(X: np.ndarray, stats: np.ndarray, scorer: Scorer,
         leaf_value: Callable[[np.ndarray], np.ndarray],
         should_split: Callable[[np.ndarray, np.ndarray, int], bool],
         accept: Callable[[float, np.ndarray], bool] = lambda score, node_stats: True) -> TreeArrays:
    """Breadth-first growth; every node's value is ``leaf_value(sum of its stats)``."""
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[np.ndarray] = []

    def new_node(rows: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_value(stats[rows].sum(axis=0)))
        return len(feature) - 1

    queue = deque([(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]), 0)])
    while queue:
        node, rows, depth = queue.popleft()
        node_stats = stats[rows]
        if not should_split(rows, node_stats, depth):
            continue
        found = best_split(X[rows], node_stats, scorer)
        if found is None or not accept(found[2], node_stats):
            continue
        f, thr, _ = found
        mask = X[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        queue.append((left[node], lrows, depth + 1))
        queue.append((right[node], rrows, depth + 1))
    return TreeArrays(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                      np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                      np.array(value, dtype=np.float64))


def gini_scorer(cum: np.ndarray, total: np.ndarray, n_left: np.ndarray) -> np.ndarray:
    """``SL/nL + SR/nR`` with ``S = sum of squared class counts``; maximizing it minimizes
    the size-weighted child impurity."""
    n = total.sum()
    n_right = n - n_left
    sl = np.einsum("pfk,pfk->pf", cum, cum)
    rest = total - cum
    sr = np.einsum("pfk,pfk->pf", rest, rest)
    return sl / n_left + sr / n_right
