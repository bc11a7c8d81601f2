"""Adjusted Rand index (Hubert-Arabie, contingency-table form)."""

from __future__ import annotations

import numpy as np

from dualclust.core import DualClustError, Partition


def _labels(x) -> np.ndarray:
    if isinstance(x, Partition):
        return x.assignment
    if hasattr(x, "assignment"):
        return np.asarray(x.assignment)
    return np.asarray(x)


def _comb2(x: np.ndarray) -> float:
    x = x.astype(np.float64)
    return float(np.sum(x * (x - 1) / 2))


def adjusted_rand_index(a, b) -> float:
    """ARI between two partitions or label sequences.

    Returns 1.0 in the degenerate case where both labelings are all-one-
    cluster or both all-singletons.
    """
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape or la.ndim != 1:
        raise DualClustError("length", "partitions must have the same length")
    n = la.shape[0]
    if n < 2:
        raise DualClustError("length", "ARI needs at least two points")
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    index = _comb2(table.ravel())
    sa, sb = _comb2(table.sum(axis=1)), _comb2(table.sum(axis=0))
    expected = sa * sb / (n * (n - 1) / 2)
    maximum = (sa + sb) / 2
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))
