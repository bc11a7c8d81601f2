"""Synthetic benchmarks, constraint generators and experiment harnesses."""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dualclust.clustering import kmedoids_solve
from dualclust.core import ConstraintSet, Dataset, DualClustError
from dualclust.dualtools import fitness_score
from dualclust.evaluation import adjusted_rand_index
from dualclust.lagrangian import LagrangianConfig, subgradient_solve
from dualclust.metrics import Metric, distance, mahalanobis_from_covariance, pairwise_matrix, parse_metric
from dualclust.transform import run_transform

__all__ = [
    "SyntheticSpec", "generate_synthetic", "ConstraintBatch", "generate_constraint_sets",
    "adjusted_rand_index", "fitness_experiment", "transform_experiment",
]

SYNTHETIC_KINDS = ("euclidean", "manhattan", "chebyshev", "mahalanobis")
DRAW_CAP = 10**6


@dataclass(frozen=True)
class SyntheticSpec:
    """Two-dimensional, three-cluster benchmark whose clusters suit one metric."""

    metric_kind: str = "euclidean"
    seed: int = 0
    n: int = 200
    k: int = 3

    def __post_init__(self):
        if self.metric_kind not in SYNTHETIC_KINDS:
            raise DualClustError("metric", f"synthetic datasets exist for {SYNTHETIC_KINDS}, not {self.metric_kind!r}")
        if self.n != 200 or self.k != 3:
            raise DualClustError("spec", "the synthetic design is fixed at n=200, k=3")


def _cluster_sizes(n: int, k: int) -> list[int]:
    cap = math.ceil(n / k)
    return [cap] * (n - (cap - 1) * k) + [cap - 1] * (k - (n - (cap - 1) * k))


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Labelled benchmark dataset.

    Lp metrics: the spread Delta is the largest of 1000 N(10, 1) pair
    distances; three N(10, 1) centers are redrawn until all pairwise
    distances reach Delta / 3; N(10, 1) points then join the nearest
    center (under the metric) while that cluster holds fewer than 67.
    Mahalanobis: x ~ U[0, 100] and the y of cluster c ~ U[5c - 0.1, 5c + 0.1].
    """
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n, spec.k
    sizes = _cluster_sizes(n, k)
    if spec.metric_kind == "mahalanobis":
        pts, labels = [], []
        for c, size in enumerate(sizes):
            x = rng.uniform(0, 100, size)
            y = rng.uniform(5 * c - 0.1, 5 * c + 0.1, size)
            pts.append(np.column_stack([x, y]))
            labels += [c] * size
        order = rng.permutation(n)
        return Dataset(np.vstack(pts)[order], np.array(labels)[order])

    metric = Metric(spec.metric_kind)
    pairs = rng.normal(10, 1, size=(1000, 2, 2))
    spread = max(distance(metric, a, b) for a, b in pairs)
    draws = 0
    while True:
        centers = rng.normal(10, 1, size=(k, 2))
        draws += 1
        sep = min(distance(metric, centers[a], centers[b]) for a in range(k) for b in range(a + 1, k))
        if sep >= spread / 3:
            break
        if draws >= DRAW_CAP:
            raise DualClustError("draw_cap", "could not place separated centers")
    counts = [0] * k
    pts, labels = [], []
    while len(pts) < n:
        if draws >= DRAW_CAP:
            raise DualClustError("draw_cap", "could not fill the clusters")
        p = rng.normal(10, 1, size=2)
        draws += 1
        c = int(np.argmin([distance(metric, p, y) for y in centers]))
        if counts[c] < sizes[0]:
            counts[c] += 1
            pts.append(p)
            labels.append(c)
    return Dataset(np.array(pts), np.array(labels))


@dataclass(frozen=True)
class ConstraintBatch:
    sets: tuple[ConstraintSet, ...]
    mode: str

    @property
    def sizes(self) -> list[int]:
        return [len(s) for s in self.sets]


def _violated_pairs(labels: np.ndarray, base: np.ndarray) -> np.ndarray:
    same_gt = labels[:, None] == labels[None, :]
    same_base = base[:, None] == base[None, :]
    iu, ju = np.triu_indices(len(labels), 1)
    bad = same_gt[iu, ju] != same_base[iu, ju]
    return np.column_stack([iu[bad], ju[bad]])


def generate_constraint_sets(labels, count: int, size_law="uniform_1_100", mode: str = "ground_truth_uniform",
                             base_partition=None, seed=0) -> ConstraintBatch:
    """Random constraint sets labelled by ground truth.

    Each set draws distinct pairs uniformly, from all pairs or (``violated_only``)
    from pairs whose ground-truth relation ``base_partition`` gets wrong.
    A pair is must-link iff both points share a label. ``size_law`` is an
    int for fixed-size sets or ``"uniform_1_100"``.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if mode == "ground_truth_uniform":
        iu, ju = np.triu_indices(n, 1)
        pool = np.column_stack([iu, ju])
    elif mode == "violated_only":
        if base_partition is None:
            raise DualClustError("base_partition", "violated_only mode needs a base partition")
        base = np.asarray(getattr(base_partition, "assignment", base_partition))
        pool = _violated_pairs(labels, base)
        if len(pool) == 0:
            raise DualClustError("empty_pool", "empty pool: the base partition violates no ground-truth pair")
    else:
        raise DualClustError("mode", f"unknown constraint mode {mode!r}")
    rng = np.random.default_rng(seed)
    sets = []
    for _ in range(count):
        if size_law == "uniform_1_100":
            m = int(rng.integers(1, 101))
        elif isinstance(size_law, (int, np.integer)) and size_law >= 1:
            m = int(size_law)
        else:
            raise DualClustError("size_law", f"unknown size law {size_law!r}")
        if m > len(pool):
            raise DualClustError("pool_size", f"requested {m} pairs from a pool of {len(pool)}")
        chosen = pool[rng.choice(len(pool), size=m, replace=False)]
        ml = tuple((int(i), int(j)) for i, j in chosen if labels[i] == labels[j])
        cl = tuple((int(i), int(j)) for i, j in chosen if labels[i] != labels[j])
        sets.append(ConstraintSet(ml, cl))
    return ConstraintBatch(tuple(sets), mode)


# ---------------------------------------------------------------------------
# fitness experiment

def _set_seed(seed: int, cons: ConstraintSet) -> list[int]:
    return [seed, zlib.crc32(repr((cons.must_link, cons.cannot_link)).encode())]


def _fitness_cell(args):
    D, k, cons, config, seed, reference = args
    dual = subgradient_solve("kmedoids", D, k, cons, config, seed=_set_seed(seed, cons), reference=reference)
    return fitness_score(dual, cons, k).score, dual.iterations


@dataclass
class FitnessResult:
    """Mean fitness and unsupervised ARI per (dataset, metric)."""

    rows: list[dict] = field(default_factory=list)
    scores: dict = field(default_factory=dict)  # (dataset, metric) -> per-set scores

    def table(self, dataset: str) -> dict[str, float]:
        return {r["metric"]: r["mean_fitness"] for r in self.rows if r["dataset"] == dataset}


def _resolve_metric(m, ds: Dataset) -> Metric:
    if isinstance(m, Metric):
        return m
    if m == "mahalanobis":
        return mahalanobis_from_covariance(ds)
    return parse_metric(m, ds)


def fitness_experiment(datasets: Sequence, metrics: Sequence = SYNTHETIC_KINDS, constraint_count: int = 100,
                       time_limit: float = 2.0, seed: int = 0, config: LagrangianConfig | None = None,
                       kmedoids_restarts: int = 10, workers: int = 1, constraint_sets=None) -> FitnessResult:
    """Average fitness score of each metric over random ground-truth constraint sets.

    ``datasets`` holds SyntheticSpec values or ``(name, Dataset)`` pairs.
    All metrics of a dataset see the same constraint sets. Each set's
    solver seed is derived from its content, so the means do not depend on
    evaluation order.
    """
    config = config or LagrangianConfig(time_limit=time_limit, max_iterations=150, kmedoids_restarts=0)
    result = FitnessResult()
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for di, entry in enumerate(datasets):
            if isinstance(entry, SyntheticSpec):
                name, ds = entry.metric_kind, generate_synthetic(entry)
            else:
                name, ds = entry
            if ds.labels is None:
                raise DualClustError("labels", f"dataset {name!r} has no ground truth")
            k = int(ds.labels.max()) + 1
            if constraint_sets is not None:
                sets = list(constraint_sets)
            else:
                sets = list(generate_constraint_sets(ds.labels, constraint_count, "uniform_1_100",
                                                     seed=[seed, di]).sets)
            for m in metrics:
                metric = _resolve_metric(m, ds)
                D = pairwise_matrix(metric, ds)
                ref = kmedoids_solve(D, k, "local_search", kmedoids_restarts, [seed, di])
                ari = adjusted_rand_index(ds.labels, ref.assignment)
                jobs = [(D, k, cons, config, seed, ref) for cons in sets]
                outs = list(pool.map(_fitness_cell, jobs)) if pool else [_fitness_cell(j) for j in jobs]
                scores = [s for s, _ in outs]
                mname = metric.name if isinstance(m, Metric) else str(m)
                result.scores[(name, mname)] = scores
                result.rows.append({
                    "dataset": name,
                    "metric": mname,
                    "n_sets": len(scores),
                    "mean_fitness": float(np.mean(scores)) if scores else math.nan,
                    "std_fitness": float(np.std(scores)) if scores else math.nan,
                    "mean_iterations": float(np.mean([it for _, it in outs])) if outs else math.nan,
                    "ari": ari,
                })
    finally:
        if pool:
            pool.shutdown()
    return result


# ---------------------------------------------------------------------------
# transform experiment

def _transform_cell(args):
    ds, k, cons, mode, restarts, config, seed = args
    _, trace = run_transform(ds, k, cons, mode, restarts, config, seed)
    return trace


@dataclass
class TransformResult:
    traces: dict = field(default_factory=dict)  # mode -> list of TransformTrace
    rows: list[dict] = field(default_factory=list)


def transform_experiment(dataset: Dataset, k: int, constraint_sets: Sequence[ConstraintSet],
                         modes=("dual_guided", "random_baseline"), seed: int = 0, kmeans_restarts: int = 100,
                         config: LagrangianConfig | None = None, workers: int = 1) -> TransformResult:
    """Run the transform once per (set, mode) and aggregate per iteration.

    Row ``iteration = 0`` is the initial clustering. Runs that finish early
    carry their last values forward. Run r uses seed ``seed + r`` in every
    mode, so modes share their k-means streams.
    """
    if dataset.labels is None:
        raise DualClustError("labels", "transform experiment needs ground-truth labels")
    result = TransformResult()
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for mode in modes:
            jobs = [(dataset, k, cons, mode, kmeans_restarts, config, seed + r) for r, cons in enumerate(constraint_sets)]
            traces = list(pool.map(_transform_cell, jobs)) if pool else [_transform_cell(j) for j in jobs]
            result.traces[mode] = traces
            length = max((t.iterations for t in traces), default=0)
            for it in range(length + 1):
                aris, dists = [], []
                for t in traces:
                    if it == 0:
                        aris.append(t.initial_ari)
                        dists.append(0.0)
                    else:
                        r = t.records[min(it, t.iterations) - 1] if t.records else None
                        aris.append(t.initial_ari if r is None else r["ari"])
                        dists.append(0.0 if r is None else r["cumulative_distance"])
                result.rows.append({
                    "mode": mode, "iteration": it,
                    "ari_mean": float(np.mean(aris)), "ari_std": float(np.std(aris)),
                    "distance_mean": float(np.mean(dists)), "distance_std": float(np.std(dists)),
                    "runs": len(traces),
                })
    finally:
        if pool:
            pool.shutdown()
    return result
