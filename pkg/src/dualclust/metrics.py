"""Distance functions behind a single :class:`Metric` value, and pairwise matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from dualclust.core import Dataset, DissimilarityMatrix, DualClustError

KINDS = (
    "euclidean",
    "sqeuclidean",
    "manhattan",
    "chebyshev",
    "mahalanobis",
    "cosine",
    "dl",
    "segmented",
)


@dataclass(frozen=True, eq=False)
class Metric:
    kind: str
    matrix: np.ndarray | None = None
    inner: "Metric | None" = None
    segment_length: int | None = None
    name: str = field(default="")

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DualClustError("metric", f"unknown metric kind {self.kind!r}")
        if self.kind == "mahalanobis":
            if self.matrix is None:
                raise DualClustError("metric", "mahalanobis metric needs a matrix")
            a = np.array(self.matrix, dtype=float, ndmin=2)
            if a.shape[0] != a.shape[1]:
                raise DualClustError("metric", "mahalanobis matrix must be square")
            if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
                raise DualClustError("not_psd", "mahalanobis matrix must be symmetric")
            if np.linalg.eigvalsh(a).min() < -1e-9:
                raise DualClustError("not_psd", "mahalanobis matrix must be positive semidefinite")
            a.setflags(write=False)
            object.__setattr__(self, "matrix", a)
        if self.kind == "segmented":
            if self.inner is None or self.segment_length is None or int(self.segment_length) < 1:
                raise DualClustError("metric", "segmented metric needs an inner metric and a positive segment length")
            if self.inner.kind in ("dl", "segmented"):
                raise DualClustError("metric", f"segmented metric cannot wrap {self.inner.kind!r}")
            object.__setattr__(self, "segment_length", int(self.segment_length))
        if not self.name:
            label = self.kind
            if self.kind == "segmented":
                label = f"segmented:{self.segment_length}:{self.inner.name}"
            object.__setattr__(self, "name", label)

    @classmethod
    def euclidean(cls) -> "Metric":
        return cls("euclidean")

    @classmethod
    def mahalanobis(cls, matrix) -> "Metric":
        return cls("mahalanobis", matrix=matrix)

    @classmethod
    def segmented(cls, inner: "Metric", segment_length: int) -> "Metric":
        return cls("segmented", inner=inner, segment_length=segment_length)

    def __repr__(self):
        return f"Metric({self.name})"


def damerau_levenshtein(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Unrestricted Damerau-Levenshtein distance with unit costs.

    Counts insertions, deletions, substitutions and transpositions of
    adjacent symbols; a transposed pair may be edited again (Lowrance-Wagner
    recurrence), so the result is a true metric.
    """
    la, lb = len(a), len(b)
    inf = la + lb
    d = [[0] * (lb + 2) for _ in range(la + 2)]
    d[0][0] = inf
    for i in range(la + 1):
        d[i + 1][0] = inf
        d[i + 1][1] = i
    for j in range(lb + 1):
        d[0][j + 1] = inf
        d[1][j + 1] = j
    last_row: dict[Hashable, int] = {}
    for i in range(1, la + 1):
        last_match_col = 0
        for j in range(1, lb + 1):
            i1 = last_row.get(b[j - 1], 0)
            j1 = last_match_col
            cost = 1
            if a[i - 1] == b[j - 1]:
                cost = 0
                last_match_col = j
            d[i + 1][j + 1] = min(
                d[i][j] + cost,
                d[i + 1][j] + 1,
                d[i][j + 1] + 1,
                d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1),
            )
        last_row[a[i - 1]] = i
    return d[la + 1][lb + 1]


def _vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        v = v.ravel()
    return v


def distance(metric: Metric, a, b) -> float:
    """Distance between two points (or two sequences, for ``dl``)."""
    if metric.kind == "dl":
        return float(damerau_levenshtein(a, b))
    u, v = _vector(a), _vector(b)
    if u.shape != v.shape:
        raise DualClustError("dimension", f"dimension mismatch: {u.size} vs {v.size}")
    diff = u - v
    kind = metric.kind
    if kind == "euclidean":
        return float(np.sqrt(diff @ diff))
    if kind == "sqeuclidean":
        return float(diff @ diff)
    if kind == "manhattan":
        return float(np.abs(diff).sum())
    if kind == "chebyshev":
        return float(np.abs(diff).max()) if diff.size else 0.0
    if kind == "mahalanobis":
        if metric.matrix.shape[0] != u.size:
            raise DualClustError("dimension", "mahalanobis matrix does not match point dimension")
        return float(np.sqrt(max(diff @ metric.matrix @ diff, 0.0)))
    if kind == "cosine":
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            raise DualClustError("zero_vector", "cosine distance undefined for an all-zero vector")
        if np.array_equal(u, v):
            return 0.0
        return float(min(max(1.0 - (u @ v) / (nu * nv), 0.0), 2.0))
    # segmented
    L = metric.segment_length
    if u.size % L:
        raise DualClustError("dimension", f"dimension {u.size} not divisible by segment length {L}")
    return float(sum(distance(metric.inner, u[s:s + L], v[s:s + L]) for s in range(0, u.size, L)))


def _block(metric: Metric, X: np.ndarray) -> np.ndarray:
    kind = metric.kind
    if kind == "euclidean":
        return cdist(X, X, "euclidean")
    if kind == "sqeuclidean":
        return cdist(X, X, "sqeuclidean")
    if kind == "manhattan":
        return cdist(X, X, "cityblock")
    if kind == "chebyshev":
        return cdist(X, X, "chebyshev")
    if kind == "mahalanobis":
        if metric.matrix.shape[0] != X.shape[1]:
            raise DualClustError("dimension", "mahalanobis matrix does not match point dimension")
        diff = X[:, None, :] - X[None, :, :]
        q = np.einsum("ijk,kl,ijl->ij", diff, metric.matrix, diff)
        return np.sqrt(np.maximum(q, 0.0))
    if kind == "cosine":
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            raise DualClustError("zero_vector", "cosine distance undefined for an all-zero vector")
        U = X / norms[:, None]
        return np.clip(1.0 - U @ U.T, 0.0, 2.0)
    L = metric.segment_length
    if X.shape[1] % L:
        raise DualClustError("dimension", f"dimension {X.shape[1]} not divisible by segment length {L}")
    return sum(_block(metric.inner, X[:, s:s + L]) for s in range(0, X.shape[1], L))


def pairwise_matrix(metric: Metric, data: Dataset | np.ndarray | Sequence[Sequence]) -> DissimilarityMatrix:
    """All pairwise distances; ``data`` may be a list of sequences for ``dl``."""
    if metric.kind == "dl":
        seqs = list(data.points) if isinstance(data, Dataset) else list(data)
        n = len(seqs)
        M = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                M[i, j] = damerau_levenshtein(seqs[i], seqs[j])
    else:
        X = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        M = np.triu(_block(metric, X), 1)
        if metric.kind == "cosine":
            # identical directions are exactly zero
            M[M < 1e-15] = 0.0
    M = M + M.T
    return DissimilarityMatrix(M)


def mahalanobis_from_covariance(data: Dataset | np.ndarray, ridge: float | None = None) -> Metric:
    """Mahalanobis metric with matrix (cov + ridge * I)^-1.

    The default ridge is ``1e-6 * trace(cov) / d``.
    """
    X = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] < 2:
        raise DualClustError("degenerate", "need at least two points to estimate a covariance")
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    d = cov.shape[0]
    tr = float(np.trace(cov))
    if tr <= 0:
        raise DualClustError("degenerate", "all points are identical; covariance is zero")
    rho = 1e-6 * tr / d if ridge is None else float(ridge)
    try:
        A = np.linalg.inv(cov + rho * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise DualClustError("degenerate", "covariance is singular") from exc
    A = (A + A.T) / 2
    return Metric("mahalanobis", matrix=A)


def parse_metric(spec: str, data: Dataset | None = None) -> Metric:
    """Build a metric from a CLI string such as ``segmented:10:euclidean``.

    ``mahalanobis`` (alone or as an inner metric) is estimated from ``data``.
    """
    spec = spec.strip().lower()
    if spec.startswith("segmented:"):
        parts = spec.split(":", 2)
        if len(parts) != 3:
            raise DualClustError("metric", "expected segmented:<len>:<inner>")
        try:
            L = int(parts[1])
        except ValueError as exc:
            raise DualClustError("metric", f"bad segment length {parts[1]!r}") from exc
        inner_spec = parts[2]
        if inner_spec == "mahalanobis":
            if data is None:
                raise DualClustError("metric", "mahalanobis needs a dataset")
            segs = [data.points[:, s:s + L] for s in range(0, data.d, L)]
            inner = mahalanobis_from_covariance(np.vstack(segs))
        else:
            inner = parse_metric(inner_spec)
        return Metric.segmented(inner, L)
    if spec == "mahalanobis":
        if data is None:
            raise DualClustError("metric", "mahalanobis needs a dataset")
        return mahalanobis_from_covariance(data)
    aliases = {"damerau-levenshtein": "dl", "cityblock": "manhattan", "l1": "manhattan", "l2": "euclidean"}
    return Metric(aliases.get(spec, spec))
