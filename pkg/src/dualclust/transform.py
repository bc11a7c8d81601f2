"""Dual-guided metric learning by moving points of violated constraints.

Each outer iteration re-clusters the (moved) data with multistart k-means,
picks one violated constraint (highest impact score, or uniformly at
random for the baseline), and pushes one or both of its points just past
the perpendicular bisector between their cluster centroid and a target
centroid. A forbidden list of (point, cluster) pairs stops a point from
being pushed back toward a cluster it already left.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from dualclust.clustering import MsscState, delta_guarded, kmeans_multistart, mssc_state
from dualclust.core import ConstraintSet, Dataset, DualClustError, Pair, validate_constraints
from dualclust.dualtools import impact_scores
from dualclust.evaluation import adjusted_rand_index
from dualclust.lagrangian import LagrangianConfig, subgradient_solve

OVERSHOOT = 101 / 100


class ForbiddenList(set):
    """The (point, cluster) pairs a point may no longer be moved toward."""


def bisector_point(o, y_from, y_to) -> np.ndarray:
    """Where the line through ``o`` parallel to ``y_to - y_from`` meets the bisector."""
    o, y_from, y_to = (np.asarray(v, dtype=float) for v in (o, y_from, y_to))
    u = y_to - y_from
    uu = float(u @ u)
    if uu == 0:
        raise DualClustError("coincident_centers", "source and target centers coincide")
    t = (float(y_to @ y_to) - float(y_from @ y_from) - 2 * float(o @ u)) / (2 * uu)
    return o + t * u


def move_point(o, y_from, y_to) -> np.ndarray:
    """New coordinates of ``o``: 101/100 of the way to the bisector point."""
    o = np.asarray(o, dtype=float)
    p = bisector_point(o, y_from, y_to)
    return o + OVERSHOOT * (p - o)


@dataclass
class Move:
    point: int
    c_from: int
    c_to: int
    displacement: np.ndarray

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.displacement))


def _move_cost(state: MsscState, X: np.ndarray, u: int, c_from: int, c_to: int, forbidden) -> float:
    try:
        return delta_guarded(state, X, u, c_from, c_to, forbidden)
    except DualClustError:
        # sole member of its cluster: it sits on its centroid, so removal gains nothing
        n_to = int(state.cluster_sizes[c_to])
        return n_to / (n_to + 1) * float(np.sum((X[u] - state.centers[c_to]) ** 2))


def satisfy_constraint(state: MsscState, X: np.ndarray, kind: str, pair: Pair, candidates,
                       forbidden=frozenset()) -> tuple[np.ndarray, list[Move]]:
    """Move the points of one violated constraint toward a target cluster.

    Cannot-link: the single (point, cluster) with the cheapest guarded move
    cost moves. Must-link: the target cluster minimizing the summed cost of
    both points is chosen and every point outside it moves. Ties go to the
    lower point index, then the lower cluster index. Returns the new
    coordinates and the moves made.
    """
    i, j = pair
    a = state.assignment
    cands = sorted(int(c) for c in candidates)
    if not cands:
        raise DualClustError("no_candidates", f"no candidate clusters for {kind} pair {pair}")
    if kind == "CL":
        if a[i] != a[j]:
            raise DualClustError("not_violated", f"cannot-link pair {pair} is not violated")
        c = int(a[i])
        best, choice = math.inf, None
        for u in (i, j):
            for cs in cands:
                if cs == c:
                    continue
                cost = _move_cost(state, X, u, c, cs, forbidden)
                if cost < best:
                    best, choice = cost, (u, cs)
        if choice is None:
            raise DualClustError("all_forbidden", f"every move for cannot-link pair {pair} is forbidden")
        plan = [choice]
    elif kind == "ML":
        best, target = math.inf, None
        for cs in cands:
            cost = _move_cost(state, X, i, int(a[i]), cs, forbidden) + _move_cost(state, X, j, int(a[j]), cs, forbidden)
            if cost < best:
                best, target = cost, cs
        if target is None:
            raise DualClustError("all_forbidden", f"every move for must-link pair {pair} is forbidden")
        plan = [(u, target) for u in (i, j) if a[u] != target]
    else:
        raise DualClustError("kind", f"unknown constraint kind {kind!r}")
    newX = np.array(X, dtype=float, copy=True)
    moves = []
    for u, cs in plan:
        c = int(a[u])
        newX[u] = move_point(X[u], state.centers[c], state.centers[cs])
        moves.append(Move(u, c, cs, newX[u] - X[u]))
    return newX, moves


def candidate_clusters(kind: str, pair: Pair, assignment, k: int, forbidden) -> list[int]:
    """Clusters a violated constraint's points may still be moved toward."""
    i, j = pair
    if kind == "ML":
        return [c for c in range(k) if (i, c) not in forbidden and (j, c) not in forbidden]
    return [c for c in range(k)
            if assignment[i] != c and assignment[j] != c
            and not ((i, c) in forbidden and (j, c) in forbidden)]


def align_labels(assignment: np.ndarray, reference: np.ndarray, k: int) -> np.ndarray:
    """Relabel clusters to maximize agreement with ``reference``."""
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (assignment, reference), 1)
    rows, cols = linear_sum_assignment(-table)
    perm = np.empty(k, dtype=np.int64)
    perm[rows] = cols
    return perm[assignment]


@dataclass
class TransformTrace:
    """Per-iteration records of a transform run.

    ``records[t]`` describes move t; its ``ari`` and ``mssc`` refer to the
    clustering recomputed after that move.
    """

    initial_ari: float | None = None
    initial_mssc: float = 0.0
    records: list[dict] = field(default_factory=list)
    final_violations: int = 0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def cumulative_distance(self) -> float:
        return self.records[-1]["cumulative_distance"] if self.records else 0.0

    @property
    def final_ari(self) -> float | None:
        return self.records[-1]["ari"] if self.records else self.initial_ari

    COLUMNS = ("iteration", "constraint_i", "constraint_j", "kind", "moved_points",
               "step_distance", "cumulative_distance", "ari", "mssc")

    def to_csv(self, path: str | Path | None = None, meta: dict | None = None) -> str:
        buf = io.StringIO()
        if meta is not None:
            buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.records:
            w.writerow([
                r["iteration"], r["constraint"][0], r["constraint"][1], r["kind"],
                ";".join(str(m.point) for m in r["moves"]),
                repr(r["step_distance"]), repr(r["cumulative_distance"]),
                "" if r["ari"] is None else repr(r["ari"]), repr(r["mssc"]),
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def run_transform(dataset: Dataset, k: int, constraints: ConstraintSet, selection: str = "dual_guided",
                  kmeans_restarts: int = 100, solver_config: LagrangianConfig | None = None,
                  seed: int = 0, max_iterations: int | None = None) -> tuple[Dataset, TransformTrace]:
    """Move points until every constraint is satisfied or no allowed move is left.

    ``selection`` is ``dual_guided`` (constraint with the highest impact
    score among those still movable) or ``random_baseline``. The k-means
    restarts, the random selection and the dual solves draw from separate
    streams derived from ``seed``, so both modes see identical clusterings
    for identical data.
    """
    if selection not in ("dual_guided", "random_baseline"):
        raise DualClustError("selection", f"unknown selection {selection!r}")
    cons = validate_constraints(dataset, constraints)
    config = solver_config or LagrangianConfig(time_limit=2.0, max_iterations=200)
    X = np.array(dataset.points, dtype=float, copy=True)
    n = X.shape[0]
    cap = len(cons) + n * k if max_iterations is None else max_iterations
    labels = dataset.labels
    sel_rng = np.random.default_rng([seed, 2])
    forbidden = ForbiddenList()
    trace = TransformTrace()
    prev = None
    cumulative = 0.0
    it = 0
    while True:
        state = kmeans_multistart(X, k, kmeans_restarts, np.random.default_rng([seed, 1, it]))
        if prev is not None:
            state = mssc_state(X, align_labels(state.assignment, prev, k), k)
        prev = state.assignment
        ari = None if labels is None else adjusted_rand_index(labels, state.assignment)
        if trace.records:
            trace.records[-1]["ari"] = ari
            trace.records[-1]["mssc"] = state.objective
        else:
            trace.initial_ari, trace.initial_mssc = ari, state.objective
        violated = cons.violated(state.assignment)
        movable = []
        for kind, pair in violated:
            cands = candidate_clusters(kind, pair, state.assignment, k, forbidden)
            if cands:
                movable.append((kind, pair, cands))
        if not movable or it >= cap:
            trace.final_violations = len(violated)
            break
        if selection == "dual_guided":
            dual = subgradient_solve("mssc", X, k, cons, config, seed=[seed, 3, it], reference=state)
            impacts = impact_scores(dual, cons).scores
            best = max(range(len(movable)), key=lambda r: (impacts[movable[r][1]], -r))
            kind, pair, cands = movable[best]
        else:
            kind, pair, cands = movable[int(sel_rng.integers(len(movable)))]
        X, moves = satisfy_constraint(state, X, kind, pair, cands, forbidden)
        for m in moves:
            forbidden.add((m.point, m.c_from))
        step = sum(m.distance for m in moves)
        cumulative += step
        it += 1
        trace.records.append({
            "iteration": it, "constraint": pair, "kind": kind, "moves": moves,
            "step_distance": step, "cumulative_distance": cumulative, "ari": None, "mssc": None,
        })
    return dataset.with_points(X), trace
