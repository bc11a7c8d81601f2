"""Lagrangian relaxation of pairwise-constrained MSSC and k-medoids.

Each cannot-link pair (i, j) gets one multiplier ``eta[c] <= 0`` per
cluster c for ``x_i^c + x_j^c <= 1 + eps``; each must-link pair gets
``lam[c]`` for ``x_i^c - x_j^c <= eps`` and ``gamma[c]`` for
``x_j^c - x_i^c <= eps``. The relaxed problem keeps only "each point in one
cluster", so the penalties become per-(point, cluster) cost offsets plus a
constant, and the dual is maximized by projected sub-gradient ascent.

For k-medoids the clusters are the n candidate medoids, as in the p-median
model. Reported multipliers are summed onto the k clusters of the
unconstrained reference solution: candidate medoid m contributes to the
cluster that contains point m.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from dualclust.clustering import (
    _points,
    _rng,
    _values,
    centroids,
    kmeans_multistart,
    kmedoids_solve,
    pmedian_exact,
    pmedian_local_search,
    sq_dists,
    sse,
)
from dualclust.core import ConstraintSet, DualClustError, DualSolution, Partition, validate_constraints


@dataclass(frozen=True)
class LagrangianConfig:
    """Sub-gradient settings.

    ``zero_tolerance=None`` means ``1e-6 * (1 + |dual_bound|)``.
    ``inner_mode`` applies to the k-medoids inner problem.
    """

    epsilon: float = 0.5
    time_limit: float = 10.0
    max_iterations: int = 500
    mu0: float = 2.0
    patience: int = 20
    mu_floor: float = 1e-6
    zero_tolerance: float | None = None
    inner_rounds: int = 3
    inner_mode: str = "local_search"
    kmeans_restarts: int = 10
    kmedoids_restarts: int = 5
    gap_tolerance: float = 1e-9

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise DualClustError("config", f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.time_limit <= 0 or self.max_iterations < 1 or self.inner_rounds < 1:
            raise DualClustError("config", "time_limit, max_iterations and inner_rounds must be positive")
        if self.mu0 <= 0 or self.patience < 1 or self.mu_floor <= 0:
            raise DualClustError("config", "step parameters must be positive")
        if self.inner_mode not in ("exact", "local_search"):
            raise DualClustError("config", f"unknown inner mode {self.inner_mode!r}")


@dataclass
class Multipliers:
    """Multiplier arrays: ``eta`` is |CL| x K, ``lam`` and ``gamma`` are |ML| x K."""

    eta: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray

    @classmethod
    def zeros(cls, n_cl: int, n_ml: int, K: int) -> "Multipliers":
        return cls(np.zeros((n_cl, K)), np.zeros((n_ml, K)), np.zeros((n_ml, K)))

    def copy(self) -> "Multipliers":
        return Multipliers(self.eta.copy(), self.lam.copy(), self.gamma.copy())

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.eta, self.lam, self.gamma

    def dot(self, other: "Multipliers") -> float:
        return float(sum(np.sum(a * b) for a, b in zip(self.arrays(), other.arrays())))


@dataclass
class LagrangianEvaluation:
    """L at given multipliers, the slacks of its minimizer, and the minimizer.

    For MSSC ``assignment`` holds cluster indices and ``centers`` the
    centroids; for k-medoids ``assignment`` holds the serving medoid of each
    point and ``medoids`` the open medoids. Clusters may be empty.
    """

    value: float
    subgradients: Multipliers
    assignment: np.ndarray
    centers: np.ndarray | None = None
    medoids: tuple[int, ...] | None = None


def _pairs(pairs) -> np.ndarray:
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _check(mult: Multipliers, n_cl: int, n_ml: int, K: int):
    for name, arr, rows in (("eta", mult.eta, n_cl), ("lambda", mult.lam, n_ml), ("gamma", mult.gamma, n_ml)):
        if arr.shape != (rows, K):
            raise DualClustError("multiplier_shape", f"{name} has shape {arr.shape}, expected {(rows, K)}")
        if np.any(arr > 0):
            raise DualClustError("multiplier_sign", f"{name} has a positive multiplier")


def coefficients(n: int, K: int, constraints: ConstraintSet, mult: Multipliers, eps: float) -> tuple[np.ndarray, float]:
    """Penalty terms as an n x K per-(point, cluster) cost offset plus a constant."""
    cl, ml = _pairs(constraints.cannot_link), _pairs(constraints.must_link)
    A = np.zeros((n, K))
    np.add.at(A, cl[:, 0], -mult.eta)
    np.add.at(A, cl[:, 1], -mult.eta)
    np.add.at(A, ml[:, 0], mult.lam - mult.gamma)
    np.add.at(A, ml[:, 1], mult.gamma - mult.lam)
    const = (1 + eps) * mult.eta.sum() + eps * (mult.lam.sum() + mult.gamma.sum())
    return A, float(const)


def slacks(assignment: np.ndarray, K: int, constraints: ConstraintSet, eps: float) -> Multipliers:
    """Slack of every relaxed inequality at a hard assignment (the sub-gradient)."""
    cl, ml = _pairs(constraints.cannot_link), _pairs(constraints.must_link)
    eye = np.eye(K)
    a = np.asarray(assignment)
    xi, xj = eye[a[cl[:, 0]]], eye[a[cl[:, 1]]]
    g_eta = (1 + eps) - xi - xj
    yi, yj = eye[a[ml[:, 0]]], eye[a[ml[:, 1]]]
    return Multipliers(g_eta.reshape(-1, K), (eps + yi - yj).reshape(-1, K), (eps + yj - yi).reshape(-1, K))


def penalty(assignment: np.ndarray, K: int, constraints: ConstraintSet, mult: Multipliers, eps: float) -> float:
    """Total penalty ``sum(multiplier * slack)`` at a hard assignment."""
    return mult.dot(slacks(assignment, K, constraints, eps))


def _canon(constraints: ConstraintSet, n: int) -> ConstraintSet:
    return validate_constraints(n, constraints)


def evaluate_lagrangian_mssc(data, k: int, constraints: ConstraintSet, multipliers: Multipliers,
                             centers_seed, config: LagrangianConfig = LagrangianConfig(),
                             candidates=()) -> LagrangianEvaluation:
    """Approximate inner minimum of the relaxed MSSC problem.

    Alternates penalized assignment and centroid recomputation
    ``config.inner_rounds`` times from ``centers_seed`` (a Partition with
    centers, or a k x d array). Assignments in ``candidates`` are also
    evaluated and the lowest penalized objective is kept, so the value is an
    upper estimate of the true inner minimum.
    """
    X = _points(data)
    n = X.shape[0]
    eps = config.epsilon
    _check(multipliers, len(constraints.cannot_link), len(constraints.must_link), k)
    seed_c = centers_seed.centers if isinstance(centers_seed, Partition) else centers_seed
    if seed_c is None:
        raise DualClustError("seed", "centers_seed has no centers")
    seed_c = np.asarray(seed_c, dtype=float)
    if seed_c.shape != (k, X.shape[1]):
        raise DualClustError("dimension", f"centers_seed has shape {seed_c.shape}, expected {(k, X.shape[1])}")
    A, const = coefficients(n, k, constraints, multipliers, eps)
    rows = np.arange(n)

    def value_of(a, C):
        diff = X - C[a]
        return float(np.einsum("ij,ij->", diff, diff) + A[rows, a].sum() + const)

    C = seed_c
    for _ in range(config.inner_rounds):
        a = np.argmin(sq_dists(X, C) + A, axis=1)
        C = centroids(X, a, k, fallback=C)
    best = (value_of(a, C), a, C)
    for b in candidates:
        b = np.asarray(b, dtype=np.int64)
        Cb = centroids(X, b, k, fallback=seed_c)
        v = value_of(b, Cb)
        if v < best[0]:
            best = (v, b, Cb)
    value, a, C = best
    return LagrangianEvaluation(value, slacks(a, k, constraints, eps), a, centers=C)


def evaluate_lagrangian_kmedoids(D, k: int, constraints: ConstraintSet, multipliers: Multipliers,
                                 mode: str = "exact", config: LagrangianConfig = LagrangianConfig(),
                                 seed=0, warm_starts=(), candidates=()) -> LagrangianEvaluation:
    """Inner minimum of the relaxed k-medoids problem.

    With multipliers indexed by candidate medoid, the inner problem is a
    p-median with cost ``d[i, m] + offset[i, m]``. ``exact`` enumerates all
    medoid sets; ``local_search`` runs interchange search from
    ``warm_starts`` plus ``config.kmedoids_restarts`` random starts.
    ``candidates`` are extra ``(medoids, serving_medoid)`` solutions to
    compare against.
    """
    V = _values(D)
    n = V.shape[0]
    eps = config.epsilon
    _check(multipliers, len(constraints.cannot_link), len(constraints.must_link), n)
    A, const = coefficients(n, n, constraints, multipliers, eps)
    C = V + A
    if mode == "exact":
        meds, val = pmedian_exact(C, k)
    elif mode == "local_search":
        meds, val = pmedian_local_search(C, k, config.kmedoids_restarts, _rng(seed), warm_starts)
    else:
        raise DualClustError("mode", f"unknown k-medoids mode {mode!r}")
    meds = tuple(sorted(meds))
    Cm = C[:, list(meds)]
    a = np.asarray(meds)[np.argmin(Cm, axis=1)]
    best = (val + const, a, meds)
    rows = np.arange(n)
    for cm, ca in candidates:
        ca = np.asarray(ca, dtype=np.int64)
        v = float(C[rows, ca].sum() + const)
        if v < best[0]:
            best = (v, ca, tuple(sorted(cm)))
    value, a, meds = best
    return LagrangianEvaluation(value, slacks(a, n, constraints, eps), a, medoids=meds)


def repair_assignment(cost: np.ndarray, constraints: ConstraintSet, current: np.ndarray | None = None) -> np.ndarray | None:
    """Greedy feasible assignment for an n x k cost matrix, or None.

    ``current`` is returned unchanged when it already satisfies every
    constraint. Otherwise must-link components are placed one at a time,
    largest first, in the cheapest cluster holding no cannot-link partner.
    """
    n, k = cost.shape
    if current is not None and not constraints.violated(current):
        return np.asarray(current, dtype=np.int64)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in constraints.must_link:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    root = np.array([find(i) for i in range(n)])
    conflicts: dict[int, set[int]] = {}
    for i, j in constraints.cannot_link:
        ri, rj = root[i], root[j]
        if ri == rj:
            return None
        conflicts.setdefault(ri, set()).add(rj)
        conflicts.setdefault(rj, set()).add(ri)
    out = np.argmin(cost, axis=1)
    members: dict[int, list[int]] = {}
    for i in range(n):
        members.setdefault(int(root[i]), []).append(i)
    constrained = [r for r, m in members.items() if len(m) > 1 or r in conflicts]
    constrained.sort(key=lambda r: (-len(members[r]), -len(conflicts.get(r, ())), r))
    placed: dict[int, int] = {}
    for r in constrained:
        total = cost[members[r]].sum(axis=0)
        banned = {placed[o] for o in conflicts.get(r, ()) if o in placed}
        options = [c for c in np.argsort(total, kind="stable") if c not in banned]
        if not options:
            return None
        placed[r] = int(options[0])
        out[members[r]] = options[0]
    return out


def _project(mult: Multipliers, g: Multipliers) -> Multipliers:
    """Zero the sub-gradient where a multiplier sits at 0 and would leave the feasible cone."""
    return Multipliers(*(np.where((m < 0) | (s < 0), s, 0.0) for m, s in zip(mult.arrays(), g.arrays())))


def subgradient_solve(problem: str, data, k: int, constraints: ConstraintSet,
                      config: LagrangianConfig = LagrangianConfig(), seed=0,
                      reference=None, trace: list | None = None) -> DualSolution:
    """Maximize the Lagrangian dual by projected sub-gradient ascent.

    Polyak steps ``mu * (UB - L) / ||g||^2`` where UB is the best feasible
    objective found by repairing inner minimizers; ``mu`` starts at
    ``config.mu0`` and halves after ``config.patience`` iterations without a
    better L. Stops on the time limit, the iteration cap, a step below
    1e-12, or a closed gap. ``reference`` overrides the unconstrained
    starting solution (an MsscState or KMedoidsState). If ``trace`` is a
    list, every evaluated L is appended to it.
    """
    if problem not in ("mssc", "kmedoids"):
        raise DualClustError("model", f"unknown model {problem!r}")
    t0 = time.perf_counter()
    rng = _rng(seed)
    eps = config.epsilon

    if problem == "mssc":
        X = _points(data)
        n = X.shape[0]
        cons = _canon(constraints, n)
        ref = reference if reference is not None else kmeans_multistart(X, k, config.kmeans_restarts, rng)
        K = k
        ref_labels = ref.assignment

        def evaluate(mult, cand):
            return evaluate_lagrangian_mssc(X, k, cons, mult, ref.partition, config, [cand] if cand is not None else ())

        def feasible(ev):
            a = repair_assignment(sq_dists(X, ev.centers), cons, ev.assignment)
            return None if a is None else (sse(X, a, k), a)

        inc = repair_assignment(sq_dists(X, ref.centers), cons, ref_labels)
        incumbent = None if inc is None else (sse(X, inc, k), inc)
    else:
        V = _values(data)
        n = V.shape[0]
        cons = _canon(constraints, n)
        mode = config.inner_mode
        ref = reference if reference is not None else kmedoids_solve(V, k, mode, config.kmedoids_restarts, rng)
        K = n
        ref_labels = ref.assignment
        last = {"meds": tuple(ref.medoids)}

        def evaluate(mult, cand):
            ev = evaluate_lagrangian_kmedoids(
                V, k, cons, mult, mode, config, rng,
                warm_starts=[last["meds"], tuple(ref.medoids)],
                candidates=[cand] if cand is not None else (),
            )
            last["meds"] = ev.medoids
            return ev

        def feasible_for(meds, current=None):
            meds = list(meds)
            cost = V[:, meds]
            a = repair_assignment(cost, cons, current)
            if a is None:
                return None
            return float(cost[np.arange(n), a].sum()), (tuple(meds), np.asarray(meds)[a])

        def feasible(ev):
            meds = list(ev.medoids)
            pos = {m: c for c, m in enumerate(meds)}
            current = np.array([pos.get(int(m), -1) for m in ev.assignment])
            return feasible_for(meds, current if np.all(current >= 0) else None)

        incumbent = feasible_for(ref.medoids, ref.assignment)

    mult = Multipliers.zeros(len(cons.cannot_link), len(cons.must_link), K)
    best_mult = mult.copy()
    best_L = -math.inf
    mu = config.mu0
    stall = 0
    iterations = 0
    converged = False
    while True:
        if iterations >= config.max_iterations:
            break
        if iterations > 0 and time.perf_counter() - t0 >= config.time_limit:
            break
        ev = evaluate(mult, None if incumbent is None else incumbent[1])
        iterations += 1
        L = ev.value
        if trace is not None:
            trace.append(L)
        if L > best_L:
            best_L, best_mult, stall = L, mult.copy(), 0
        else:
            stall += 1
            if stall >= config.patience:
                mu, stall = max(mu / 2, config.mu_floor), 0
        cand = feasible(ev)
        if cand is not None and (incumbent is None or cand[0] < incumbent[0]):
            incumbent = cand
        g = _project(mult, ev.subgradients)
        norm2 = g.dot(g)
        if norm2 == 0:
            converged = True
            break
        if incumbent is not None:
            gap = incumbent[0] - L
            if gap <= config.gap_tolerance * (1 + abs(incumbent[0])):
                converged = True
                break
        else:
            gap = (best_L - L) + max(0.05 * abs(best_L), 1e-6)
        theta = mu * gap / norm2
        if theta < 1e-12:
            break
        mult = Multipliers(*(np.minimum(0.0, m + theta * s) for m, s in zip(mult.arrays(), g.arrays())))

    if problem == "kmedoids":
        onehot = np.eye(k)[np.asarray(ref_labels)]
        rep = Multipliers(best_mult.eta @ onehot, best_mult.lam @ onehot, best_mult.gamma @ onehot)
    else:
        rep = best_mult
    return DualSolution(
        k=k,
        eta={p: tuple(np.minimum(rep.eta[r], 0.0)) for r, p in enumerate(cons.cannot_link)},
        lam={p: tuple(np.minimum(rep.lam[r], 0.0)) for r, p in enumerate(cons.must_link)},
        gamma={p: tuple(np.minimum(rep.gamma[r], 0.0)) for r, p in enumerate(cons.must_link)},
        dual_bound=best_L,
        iterations=iterations,
        converged=converged,
        model=problem,
        epsilon=eps,
        upper_bound=None if incumbent is None else float(incumbent[0]),
    )
