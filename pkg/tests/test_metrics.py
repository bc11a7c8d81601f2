import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualclust.core import Dataset, DualClustError
from dualclust.metrics import (
    Metric, damerau_levenshtein, distance, mahalanobis_from_covariance, pairwise_matrix, parse_metric,
)

from oracles import edit_distance_bfs

VECTOR_KINDS = ("euclidean", "manhattan", "chebyshev", "sqeuclidean", "cosine")


def test_simple_values():
    assert distance(Metric("euclidean"), (0, 0), (3, 4)) == 5
    assert distance(Metric.mahalanobis(np.eye(2)), (0, 0), (3, 4)) == pytest.approx(5, abs=1e-12)
    assert distance(Metric("chebyshev"), (1, 5), (4, 1)) == 4
    assert distance(Metric("manhattan"), (1, 5), (4, 1)) == 7


def test_dl_matches_edit_path_search():
    assert damerau_levenshtein("ca", "abc") == edit_distance_bfs("ca", "abc") == 2


@settings(max_examples=60, deadline=None)
@given(st.text("abc", max_size=4), st.text("abc", max_size=4))
def test_dl_brute_force(a, b):
    assert damerau_levenshtein(a, b) == edit_distance_bfs(a, b, "abc")


@given(st.text("abcd", max_size=6), st.text("abcd", max_size=6), st.text("abcd", max_size=6))
def test_dl_triangle(a, b, c):
    assert damerau_levenshtein(a, c) <= damerau_levenshtein(a, b) + damerau_levenshtein(b, c)
    assert damerau_levenshtein(a, b) == damerau_levenshtein(b, a)
    assert (damerau_levenshtein(a, b) == 0) == (a == b)


vec = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3)


@given(vec, vec, vec, st.sampled_from(("euclidean", "manhattan", "chebyshev")))
def test_triangle_inequality(a, b, c, kind):
    m = Metric(kind)
    assert distance(m, a, c) <= distance(m, a, b) + distance(m, b, c) + 1e-9


@given(vec, vec, st.sampled_from(VECTOR_KINDS))
def test_symmetry_and_identity(a, b, kind):
    m = Metric(kind)
    if kind == "cosine" and (not np.any(a) or not np.any(b)):
        return
    assert distance(m, a, b) == pytest.approx(distance(m, b, a), abs=1e-12)
    assert distance(m, a, a) == 0


def test_pairwise_identical_points():
    assert np.all(pairwise_matrix(Metric("euclidean"), np.ones((3, 2))).values == 0)


@pytest.mark.parametrize("kind", VECTOR_KINDS + ("mahalanobis",))
def test_pairwise_matches_per_pair(kind):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(10, 3))
    m = mahalanobis_from_covariance(X) if kind == "mahalanobis" else Metric(kind)
    M = pairwise_matrix(m, X).values
    for i in range(10):
        for j in range(10):
            expected = 0.0 if i == j else distance(m, X[i], X[j])
            assert M[i, j] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_segmented_sum():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(5, 60))
    M = pairwise_matrix(parse_metric("segmented:10:euclidean"), X).values
    for i in range(5):
        for j in range(5):
            expected = sum(np.linalg.norm(X[i, s:s + 10] - X[j, s:s + 10]) for s in range(0, 60, 10))
            assert M[i, j] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_segmented_requires_divisible_dimension():
    with pytest.raises(DualClustError):
        distance(Metric.segmented(Metric("euclidean"), 4), np.zeros(6), np.ones(6))


def test_covariance_monte_carlo():
    X = np.random.default_rng(3).normal(size=(10_000, 3))
    A = mahalanobis_from_covariance(X).matrix
    assert np.max(np.abs(A - np.eye(3))) <= 0.15


def test_scalar_covariance():
    X = np.array([[-2.0], [2.0], [-2.0], [2.0]])
    var = np.var(X, ddof=1)
    m = mahalanobis_from_covariance(X)
    rho = 1e-6 * var
    assert m.matrix[0, 0] == pytest.approx(1 / (var + rho), rel=1e-12)


def test_constant_data_rejected():
    with pytest.raises(DualClustError):
        mahalanobis_from_covariance(np.ones((5, 2)))


def test_covariance_scaling():
    X = np.random.default_rng(4).normal(size=(200, 2)) @ np.array([[2.0, 0.3], [0.0, 0.5]])
    s = 9.0
    base = mahalanobis_from_covariance(X, ridge=0.0)
    scaled = mahalanobis_from_covariance(X * np.sqrt(s), ridge=0.0)
    a, b = X[0], X[1]
    assert distance(scaled, a, b) == pytest.approx(distance(base, a, b) / np.sqrt(s), rel=1e-9)


def test_psd_check():
    with pytest.raises(DualClustError):
        Metric.mahalanobis(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_cosine_range_and_zero():
    m = Metric("cosine")
    assert distance(m, (1, 0), (-1, 0)) == pytest.approx(2.0)
    with pytest.raises(DualClustError):
        distance(m, (0, 0), (1, 0))


def test_dl_pairwise_on_sequences():
    M = pairwise_matrix(Metric("dl"), ["abc", "acb", "xyz"]).values
    assert M[0, 1] == 1 and M[0, 2] == 3


def test_dataset_input():
    ds = Dataset(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert pairwise_matrix(parse_metric("l2"), ds).values[0, 1] == 5
