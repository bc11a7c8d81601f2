"""Unconstrained clustering solvers and the single-point move algebra.

Both k-medoids solvers work on a generic cost matrix ``C`` (n points x m
candidate medoids), so the Lagrangian module can reuse them with
penalty-modified costs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Collection

import numpy as np

from dualclust.core import Dataset, DissimilarityMatrix, DualClustError, Partition

EXACT_BUDGET = 10**7


def _points(data) -> np.ndarray:
    X = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] == 0:
        raise DualClustError("no_data", "empty dataset")
    return X


def _values(D) -> np.ndarray:
    return D.values if isinstance(D, DissimilarityMatrix) else np.asarray(D, dtype=float)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# MSSC

@dataclass(frozen=True)
class MsscState:
    """A k-means state: partition with exact centroids and its objective."""

    partition: Partition
    objective: float

    @property
    def cluster_sizes(self) -> np.ndarray:
        return self.partition.sizes

    @property
    def assignment(self) -> np.ndarray:
        return self.partition.assignment

    @property
    def centers(self) -> np.ndarray:
        return self.partition.centers

    @property
    def k(self) -> int:
        return self.partition.k


def centroids(X: np.ndarray, assignment: np.ndarray, k: int, fallback: np.ndarray | None = None) -> np.ndarray:
    """Per-cluster means; empty clusters take the ``fallback`` row (or zeros)."""
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, assignment, X)
    counts = np.bincount(assignment, minlength=k)
    out = np.zeros_like(sums) if fallback is None else np.array(fallback, dtype=float)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def sse(X: np.ndarray, assignment: np.ndarray, k: int) -> float:
    """Sum of squared distances to cluster means."""
    C = centroids(X, assignment, k)
    diff = X - C[assignment]
    return float(np.einsum("ij,ij->", diff, diff))


def mssc_objective(data, partition: Partition | np.ndarray, k: int | None = None) -> float:
    """Sum of squared distances of each point to its cluster mean.

    Centers stored on the partition are ignored; means are recomputed.
    """
    X = _points(data)
    if isinstance(partition, Partition):
        return sse(X, partition.assignment, partition.k)
    a = np.asarray(partition, dtype=np.int64)
    return sse(X, a, int(a.max()) + 1 if k is None else k)


def mssc_state(data, assignment, k: int) -> MsscState:
    X = _points(data)
    a = np.asarray(assignment, dtype=np.int64)
    C = centroids(X, a, k)
    return MsscState(Partition(a, k, C), sse(X, a, k))


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations from ``centers`` until the assignment is stable.

    Returns the assignment, the centroids and the objective after every
    iteration. Empty clusters are refilled with the point farthest from its
    centroid, taken from a cluster with at least two points.
    """
    k = centers.shape[0]
    C = np.array(centers, dtype=float)
    assignment = None
    history: list[float] = []
    for _ in range(max_iter):
        d2 = sq_dists(X, C)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=k)
        while np.any(counts == 0):
            empty = int(np.flatnonzero(counts == 0)[0])
            own = d2[np.arange(len(X)), new]
            own = np.where(counts[new] >= 2, own, -1.0)
            far = int(np.argmax(own))
            counts[new[far]] -= 1
            new[far] = empty
            counts[empty] += 1
        C = centroids(X, new, k, fallback=C)
        diff = X - C[new]
        history.append(float(np.einsum("ij,ij->", diff, diff)))
        if assignment is not None and np.array_equal(new, assignment):
            break
        assignment = new
    return assignment, C, history


def kmeans_multistart(data, k: int, restarts: int = 100, seed=0, max_iter: int = 300) -> MsscState:
    """Best Lloyd fixed point over ``restarts`` uniform random initializations."""
    X = _points(data)
    n = X.shape[0]
    if k < 1 or k > n:
        raise DualClustError("k", f"k={k} must be in 1..n={n}")
    if restarts < 1:
        raise DualClustError("restarts", "restarts must be >= 1")
    rng = _rng(seed)
    best = None
    for _ in range(restarts):
        init = X[rng.choice(n, size=k, replace=False)]
        a, C, hist = lloyd(X, init, max_iter)
        if best is None or hist[-1] < best[2] - 1e-12 * (1 + abs(best[2])):
            best = (a, C, hist[-1])
    a, _, _ = best
    return mssc_state(X, a, k)


def delta_move(state: MsscState, data, i: int, c_from: int, c_to: int) -> float:
    """Objective change when point ``i`` moves from ``c_from`` to ``c_to``.

    Closed form from the cluster sizes and the distances of the point to
    the two current centroids; both clusters are implicitly recentered.
    """
    X = _points(data)
    a = state.assignment
    if a[i] != c_from:
        raise DualClustError("move", f"point {i} is not in cluster {c_from}")
    if c_from == c_to:
        return 0.0
    sizes = state.cluster_sizes
    n_from, n_to = int(sizes[c_from]), int(sizes[c_to])
    if n_from < 2:
        raise DualClustError("move", f"moving point {i} would empty cluster {c_from}")
    o = X[i]
    d_to = float(np.sum((o - state.centers[c_to]) ** 2))
    d_from = float(np.sum((o - state.centers[c_from]) ** 2))
    return n_to / (n_to + 1) * d_to - n_from / (n_from - 1) * d_from


def delta_guarded(state: MsscState, data, i: int, c_from: int, c_to: int,
                  forbidden: Collection[tuple[int, int]] = ()) -> float:
    """:func:`delta_move`, or ``inf`` when ``(i, c_to)`` is forbidden."""
    if c_from == c_to:
        return 0.0
    if (i, c_to) in forbidden:
        return math.inf
    return delta_move(state, data, i, c_from, c_to)


# ---------------------------------------------------------------------------
# k-medoids / p-median

@dataclass(frozen=True)
class KMedoidsState:
    """``medoids[c]`` is the point serving cluster c; ``assignment`` maps points to clusters."""

    medoids: tuple[int, ...]
    assignment: np.ndarray
    objective: float

    @property
    def k(self) -> int:
        return len(self.medoids)

    @property
    def serving_medoid(self) -> np.ndarray:
        return np.asarray(self.medoids)[self.assignment]

    def partition(self) -> Partition:
        return Partition(self.assignment, self.k)


def pmedian_value(C: np.ndarray, medoids) -> float:
    return float(C[:, list(medoids)].min(axis=1).sum())


def pmedian_exact(C: np.ndarray, k: int, budget: int = EXACT_BUDGET, batch: int = 4096) -> tuple[tuple[int, ...], float]:
    """Globally optimal medoid set by enumeration of all C(m, k) subsets.

    Ties go to the lexicographically first subset.
    """
    n, m = C.shape
    if k < 1 or k > m:
        raise DualClustError("k", f"k={k} must be in 1..{m}")
    if math.comb(m, k) > budget:
        raise DualClustError("budget", f"C({m},{k}) = {math.comb(m, k)} medoid sets exceeds the exact budget {budget}")
    combos = itertools.combinations(range(m), k)
    best_val, best_set = math.inf, None
    while True:
        chunk = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, batch)), dtype=np.int64)
        if chunk.size == 0:
            break
        chunk = chunk.reshape(-1, k)
        vals = C[:, chunk].min(axis=2).sum(axis=0)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_set = float(vals[j]), tuple(int(v) for v in chunk[j])
    return best_set, best_val


def pmedian_swap(C: np.ndarray, init, tol: float = 1e-12) -> tuple[tuple[int, ...], float]:
    """Best-improvement interchange local search from the medoid list ``init``.

    Each step replaces one medoid by the non-medoid that lowers the total
    cost most; stops when no interchange improves.
    """
    n, m = C.shape
    meds = list(init)
    k = len(meds)
    cur = pmedian_value(C, meds)
    while True:
        Cm = C[:, meds]
        best_gain, best_move = 0.0, None
        for s in range(k):
            if k == 1:
                other = np.full(n, np.inf)
            else:
                other = np.delete(Cm, s, axis=1).min(axis=1)
            totals = np.minimum(other[:, None], C).sum(axis=0)
            totals[meds] = np.inf
            p = int(np.argmin(totals))
            gain = cur - totals[p]
            if gain > best_gain + tol * (1 + abs(cur)):
                best_gain, best_move = gain, (s, p)
        if best_move is None:
            return tuple(meds), cur
        s, p = best_move
        meds[s] = p
        cur = pmedian_value(C, meds)


def pmedian_local_search(C: np.ndarray, k: int, restarts: int, rng: np.random.Generator,
                         warm_starts=()) -> tuple[tuple[int, ...], float]:
    n, m = C.shape
    if k < 1 or k > m:
        raise DualClustError("k", f"k={k} must be in 1..{m}")
    starts = [list(w) for w in warm_starts]
    starts += [list(rng.choice(m, size=k, replace=False)) for _ in range(restarts)]
    best = None
    for s in starts:
        meds, val = pmedian_swap(C, s)
        if best is None or val < best[1] - 1e-12 * (1 + abs(best[1])):
            best = (meds, val)
    return best


def _medoid_state(C: np.ndarray, medoids: tuple[int, ...]) -> KMedoidsState:
    medoids = tuple(sorted(medoids))
    Cm = C[:, list(medoids)]
    a = np.argmin(Cm, axis=1)
    return KMedoidsState(medoids, a, float(Cm[np.arange(len(a)), a].sum()))


def kmedoids_solve(D, k: int, mode: str = "local_search", restarts: int = 10, seed=0) -> KMedoidsState:
    """Unconstrained k-medoids (p-median) on a dissimilarity matrix.

    ``exact`` enumerates every medoid set (at most ``EXACT_BUDGET``);
    ``local_search`` keeps the best interchange local optimum over
    ``restarts`` random starts.
    """
    V = _values(D)
    n = V.shape[0]
    if k < 1 or k > n:
        raise DualClustError("k", f"k={k} must be in 1..n={n}")
    if mode == "exact":
        meds, _ = pmedian_exact(V, k)
    elif mode == "local_search":
        if restarts < 1:
            raise DualClustError("restarts", "restarts must be >= 1")
        meds, _ = pmedian_local_search(V, k, restarts, _rng(seed))
    else:
        raise DualClustError("mode", f"unknown k-medoids mode {mode!r}")
    return _medoid_state(V, meds)


def kmedoids_objective(D, state: KMedoidsState) -> float:
    V = _values(D)
    return float(V[np.arange(V.shape[0]), state.serving_medoid].sum())
