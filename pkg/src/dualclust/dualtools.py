"""Consumers of a DualSolution: fitness and impact scores, constraint
filtering, and the soft-assignment losses used by deep clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dualclust.core import ConstraintSet, DualClustError, DualSolution, Pair


@dataclass(frozen=True)
class FitnessReport:
    metric_name: str
    score: int
    per_constraint: dict  # (kind, pair) -> tuple of per-cluster "inherently satisfied" flags

    @property
    def max_score(self) -> int:
        return sum(len(v) for v in self.per_constraint.values())


@dataclass(frozen=True)
class ImpactTable:
    """Impact score of every constraint, in canonical constraint order."""

    entries: tuple[tuple[str, Pair, float], ...]

    def __getitem__(self, pair: Pair) -> float:
        for _, p, v in self.entries:
            if p == tuple(pair):
                return v
        raise KeyError(pair)

    def __len__(self):
        return len(self.entries)

    @property
    def scores(self) -> dict:
        return {p: v for _, p, v in self.entries}


def _check_match(dual: DualSolution, constraints: ConstraintSet | None, k: int | None):
    if k is not None and k != dual.k:
        raise DualClustError("dual_mismatch", f"dual has k={dual.k}, expected {k}")
    if constraints is not None:
        if set(constraints.cannot_link) != set(dual.eta) or set(constraints.must_link) != set(dual.lam):
            raise DualClustError("dual_mismatch", "dual solution does not cover exactly these constraints")


def fitness_score(dual: DualSolution, constraints: ConstraintSet | None = None, k: int | None = None,
                  tau: float | None = None, metric_name: str = "") -> FitnessReport:
    """Count the (constraint, cluster) multiplier groups that are zero.

    A cannot-link cluster counts when ``|eta| <= tau``; a must-link cluster
    counts only when both ``lambda`` and ``gamma`` are zero.
    """
    _check_match(dual, constraints, k)
    tau = dual.zero_tolerance() if tau is None else tau
    cons = constraints if constraints is not None else dual.constraints
    per = {}
    for p in cons.cannot_link:
        per[("CL", p)] = tuple(abs(v) <= tau for v in dual.eta[p])
    for p in cons.must_link:
        per[("ML", p)] = tuple(abs(l) <= tau and abs(g) <= tau for l, g in zip(dual.lam[p], dual.gamma[p]))
    score = sum(sum(flags) for flags in per.values())
    return FitnessReport(metric_name, int(score), per)


def impact_scores(dual: DualSolution, constraints: ConstraintSet | None = None) -> ImpactTable:
    """Sum of each constraint's multipliers over clusters (both families for must-links)."""
    _check_match(dual, constraints, None)
    cons = constraints if constraints is not None else dual.constraints
    entries = [("CL", p, float(sum(dual.eta[p]))) for p in cons.cannot_link]
    entries += [("ML", p, float(sum(dual.lam[p]) + sum(dual.gamma[p]))) for p in cons.must_link]
    return ImpactTable(tuple(entries))


def filter_constraints(impacts: ImpactTable, alpha: float, tau: float = 0.0,
                       keep_zero_impact: bool = False) -> tuple[ConstraintSet, ConstraintSet]:
    """Drop the floor(alpha * |Omega|) most negative constraints of Omega.

    Omega holds the constraints with impact below ``-tau``. Constraints
    with zero impact are discarded too unless ``keep_zero_impact``.
    Returns ``(kept, removed)``; zero-impact drops are in neither.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DualClustError("alpha", f"alpha must be in [0, 1], got {alpha}")
    order = list(enumerate(impacts.entries))
    omega = [(idx, e) for idx, e in order if e[2] < -tau]
    omega.sort(key=lambda t: (t[1][2], t[0]))
    n_remove = math.floor(alpha * len(omega))
    removed_idx = {idx for idx, _ in omega[:n_remove]}
    kept_idx = {idx for idx, _ in omega[n_remove:]}
    if keep_zero_impact:
        kept_idx |= {idx for idx, e in order if e[2] >= -tau}

    def build(idxs):
        ml = tuple(e[1] for idx, e in order if idx in idxs and e[0] == "ML")
        cl = tuple(e[1] for idx, e in order if idx in idxs and e[0] == "CL")
        return ConstraintSet(ml, cl)

    return build(kept_idx), build(removed_idx)


@dataclass(frozen=True, eq=False)
class SoftAssignment:
    """Row-stochastic soft (Q) and target (P) membership matrices."""

    Q: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        for name in ("Q", "P"):
            M = np.asarray(getattr(self, name), dtype=float)
            _check_stochastic(M, name)
            object.__setattr__(self, name, M)
        if self.Q.shape != self.P.shape:
            raise DualClustError("shape", "Q and P must have the same shape")


def _check_stochastic(M: np.ndarray, name: str):
    if M.ndim != 2 or M.size == 0:
        raise DualClustError("shape", f"{name} must be a non-empty n x k matrix")
    if np.any(M < 0) or np.any(M > 1):
        raise DualClustError("stochastic", f"{name} entries must lie in [0, 1]")
    if not np.allclose(M.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise DualClustError("stochastic", f"{name} rows must sum to 1")


def clustering_loss(Q, P) -> float:
    """KL(P || Q) summed over points; terms with p = 0 contribute 0."""
    Q, P = np.asarray(Q, dtype=float), np.asarray(P, dtype=float)
    support = P > 0
    if np.any(support & (Q <= 0)):
        raise DualClustError("support", "P has mass where Q is zero")
    return float(np.sum(P[support] * np.log(P[support] / Q[support])))


def _co_assignment(Q: np.ndarray, pairs: Sequence[Pair]) -> np.ndarray:
    idx = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.einsum("ij,ij->i", Q[idx[:, 0]], Q[idx[:, 1]])


def must_link_loss(Q, ml: Sequence[Pair]) -> float:
    """Sum over must-link pairs of log(sum_c q_i^c q_j^c)."""
    s = _co_assignment(np.asarray(Q, dtype=float), ml)
    if np.any(s <= 0):
        raise DualClustError("log_zero", "must-link pair with disjoint soft assignments")
    return float(np.sum(np.log(s)))


def cannot_link_loss(Q, cl: Sequence[Pair]) -> float:
    """Sum over cannot-link pairs of log(1 - sum_c q_i^c q_j^c)."""
    s = _co_assignment(np.asarray(Q, dtype=float), cl)
    if np.any(1 - s <= 0):
        raise DualClustError("log_zero", "cannot-link pair with identical one-hot assignments")
    return float(np.sum(np.log1p(-s)))


def dec_losses(Q, P, ml: Sequence[Pair], cl: Sequence[Pair]) -> tuple[float, float, float]:
    """Clustering, must-link and cannot-link losses, in that order."""
    sa = SoftAssignment(Q, P)
    return clustering_loss(sa.Q, sa.P), must_link_loss(sa.Q, ml), cannot_link_loss(sa.Q, cl)


def hard_assign(Q) -> np.ndarray:
    """Row-wise argmax of Q; ties go to the lowest cluster index."""
    Q = np.asarray(Q, dtype=float)
    _check_stochastic(Q, "Q")
    return np.argmax(Q, axis=1)
