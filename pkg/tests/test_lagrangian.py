import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualclust.clustering import kmeans_multistart, kmedoids_solve
from dualclust.core import ConstraintSet, DissimilarityMatrix, DualClustError
from dualclust.lagrangian import (
    LagrangianConfig, Multipliers, coefficients, evaluate_lagrangian_kmedoids, evaluate_lagrangian_mssc, penalty,
    repair_assignment, slacks, subgradient_solve,
)

from oracles import constrained_pmedian_bruteforce


def _euclid(X):
    return DissimilarityMatrix(np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)))


def test_cannot_link_penalty_example():
    cons = ConstraintSet((), ((0, 1),))
    mult = Multipliers(np.array([[-1.0, 0.0]]), np.zeros((0, 2)), np.zeros((0, 2)))
    assert penalty(np.array([0, 0, 1]), 2, cons, mult, 0.5) == pytest.approx(0.5)


def test_must_link_penalty_example():
    cons = ConstraintSet(((0, 1),), ())
    mult = Multipliers(np.zeros((0, 2)), np.array([[-1.0, 0.0]]), np.array([[-1.0, 0.0]]))
    assert penalty(np.array([0, 1]), 2, cons, mult, 0.5) == pytest.approx(-1.0)


@settings(max_examples=50)
@given(st.integers(0, 10**6))
def test_coefficients_reproduce_penalty(seed):
    rng = np.random.default_rng(seed)
    n, K = 7, 3
    cons = ConstraintSet(((0, 1), (2, 5)), ((1, 3), (4, 6)))
    mult = Multipliers(-rng.random((2, K)), -rng.random((2, K)), -rng.random((2, K)))
    a = rng.integers(0, K, size=n)
    A, const = coefficients(n, K, cons, mult, 0.3)
    assert A[np.arange(n), a].sum() + const == pytest.approx(penalty(a, K, cons, mult, 0.3), abs=1e-12)


def test_zero_multipliers_give_unconstrained_value():
    X = np.random.default_rng(1).normal(size=(30, 2))
    ref = kmeans_multistart(X, 3, 10, 0)
    cons = ConstraintSet(((0, 1),), ((2, 3),))
    ev = evaluate_lagrangian_mssc(X, 3, cons, Multipliers.zeros(1, 1, 3), ref.partition)
    assert ev.value == pytest.approx(ref.objective, rel=1e-12)

    D = _euclid(X[:10])
    km = kmedoids_solve(D, 2, "exact")
    ev = evaluate_lagrangian_kmedoids(D, 2, cons, Multipliers.zeros(1, 1, 10), "exact")
    assert ev.value == pytest.approx(km.objective, abs=1e-12)


def _mssc_brute(X, k, cons, mult, eps):
    best = math.inf
    for lab in itertools.product(range(k), repeat=len(X)):
        a = np.array(lab)
        val = 0.0
        for c in range(k):
            pts = X[a == c]
            if len(pts):
                val += float(((pts - pts.mean(axis=0)) ** 2).sum())
        best = min(best, val + penalty(a, k, cons, mult, eps))
    return best


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_mssc_inner_is_upper_estimate(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 9))
    X = rng.normal(size=(n, 2))
    cons = ConstraintSet(((0, 1),), ((2, 3),))
    mult = Multipliers(-rng.random((1, 2)) * 3, -rng.random((1, 2)) * 3, -rng.random((1, 2)) * 3)
    ref = kmeans_multistart(X, 2, 5, seed)
    ev = evaluate_lagrangian_mssc(X, 2, cons, mult, ref.partition)
    assert ev.value >= _mssc_brute(X, 2, cons, mult, 0.5) - 1e-9
    # the value is the penalized objective of the returned minimizer
    a = ev.assignment
    sse = sum(float(((X[a == c] - X[a == c].mean(axis=0)) ** 2).sum()) for c in range(2) if np.any(a == c))
    assert ev.value >= sse + penalty(a, 2, cons, mult, 0.5) - 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_kmedoids_value_matches_minimizer(seed):
    rng = np.random.default_rng(seed)
    n = 8
    D = _euclid(rng.normal(size=(n, 2)))
    cons = ConstraintSet(((0, 1),), ((2, 3),))
    mult = Multipliers(-rng.random((1, n)), -rng.random((1, n)), -rng.random((1, n)))
    ev = evaluate_lagrangian_kmedoids(D, 2, cons, mult, "exact")
    direct = D.values[np.arange(n), ev.assignment].sum() + penalty(ev.assignment, n, cons, mult, 0.5)
    assert ev.value == pytest.approx(direct, abs=1e-9 * (1 + abs(ev.value)))
    assert set(ev.assignment.tolist()) <= set(ev.medoids)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_weak_duality_every_iteration(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(5, 10)), 2
    D = _euclid(rng.normal(size=(n, 2)))
    cons = ConstraintSet(((0, 1),), ((0, 2), (1, 3)))
    opt = constrained_pmedian_bruteforce(D.values, k, cons.must_link, cons.cannot_link)
    trace = []
    dual = subgradient_solve("kmedoids", D, k, cons, LagrangianConfig(max_iterations=30, inner_mode="exact"),
                             seed=seed, trace=trace)
    assert max(trace) <= opt + 1e-9
    assert dual.dual_bound == max(trace)
    assert dual.upper_bound >= opt - 1e-9


def test_multipliers_non_positive_and_bound_is_running_max():
    X = np.random.default_rng(2).normal(size=(40, 2))
    cons = ConstraintSet(((0, 1), (2, 3), (4, 5)), ((6, 7), (8, 9)))
    trace = []
    dual = subgradient_solve("mssc", X, 3, cons, LagrangianConfig(max_iterations=60), seed=0, trace=trace)
    values = [v for d in (dual.eta, dual.lam, dual.gamma) for vs in d.values() for v in vs]
    assert all(v <= 0 for v in values)
    assert dual.dual_bound == max(trace)
    assert dual.iterations == len(trace)


def test_empty_constraint_set():
    X = np.random.default_rng(3).normal(size=(20, 2))
    ref = kmeans_multistart(X, 2, 10, 0)
    dual = subgradient_solve("mssc", X, 2, ConstraintSet(), reference=ref)
    assert dual.eta == {} and dual.lam == {}
    assert dual.dual_bound == pytest.approx(ref.objective, rel=1e-12)


def test_zero_duals_when_reference_is_feasible():
    rng = np.random.default_rng(4)
    X = np.vstack([rng.normal(size=(10, 2)), rng.normal(size=(10, 2)) + 8])
    ref = kmeans_multistart(X, 2, 10, 0)
    a = ref.assignment
    ml = tuple((i, j) for i, j in [(0, 1), (10, 11)] if a[i] == a[j])
    cl = ((0, 10),) if a[0] != a[10] else ()
    dual = subgradient_solve("mssc", X, 2, ConstraintSet(ml, cl), reference=ref)
    tau = dual.zero_tolerance()
    assert all(abs(v) <= tau for d in (dual.eta, dual.lam, dual.gamma) for vs in d.values() for v in vs)
    assert dual.converged


def test_violated_constraint_gets_negative_multiplier():
    X = np.array([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]])
    cons = ConstraintSet((), ((0, 1),))
    dual = subgradient_solve("mssc", X, 2, cons, LagrangianConfig(max_iterations=100), seed=0)
    assert min(dual.eta[(0, 1)]) < -dual.zero_tolerance()


def test_repair_feasible_or_none():
    cost = np.random.default_rng(5).random((6, 2))
    cons = ConstraintSet(((0, 1), (1, 2)), ((0, 3), (3, 4)))
    a = repair_assignment(cost, cons)
    assert not cons.violated(a)
    assert repair_assignment(cost, ConstraintSet(((0, 1),), ((0, 2), (1, 2), (0, 3)))) is not None
    impossible = ConstraintSet((), ((0, 1), (1, 2), (0, 2)))
    assert repair_assignment(cost, impossible) is None


def test_slack_shapes_and_values():
    cons = ConstraintSet(((0, 1),), ((0, 2),))
    g = slacks(np.array([0, 1, 0]), 2, cons, 0.5)
    assert g.eta.tolist() == [[-0.5, 1.5]]
    assert g.lam.tolist() == [[1.5, -0.5]]
    assert g.gamma.tolist() == [[-0.5, 1.5]]


def test_config_validation():
    with pytest.raises(DualClustError):
        LagrangianConfig(epsilon=1.0)
    with pytest.raises(DualClustError):
        LagrangianConfig(inner_mode="greedy")
    with pytest.raises(DualClustError):
        subgradient_solve("spectral", np.zeros((3, 1)), 2, ConstraintSet())
