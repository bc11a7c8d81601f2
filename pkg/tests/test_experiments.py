import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualclust.core import ConstraintSet, DualClustError
from dualclust.experiments import (
    SYNTHETIC_KINDS, SyntheticSpec, fitness_experiment, generate_constraint_sets, generate_synthetic,
    transform_experiment,
)
from dualclust.lagrangian import LagrangianConfig


@pytest.mark.parametrize("kind", SYNTHETIC_KINDS)
def test_cluster_sizes(kind):
    ds = generate_synthetic(SyntheticSpec(kind, seed=2))
    assert ds.n == 200 and ds.d == 2
    assert sorted(np.bincount(ds.labels).tolist()) == [66, 67, 67]


def test_mahalanobis_bands():
    ds = generate_synthetic(SyntheticSpec("mahalanobis", seed=3))
    y = ds.points[:, 1]
    assert np.all(np.min(np.abs(y[:, None] - np.array([0.0, 5.0, 10.0])[None, :]), axis=1) <= 0.1)
    assert np.all((ds.points[:, 0] >= 0) & (ds.points[:, 0] <= 100))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(SYNTHETIC_KINDS))
def test_generator_deterministic(seed, kind):
    a = generate_synthetic(SyntheticSpec(kind, seed=seed))
    b = generate_synthetic(SyntheticSpec(kind, seed=seed))
    assert a == b


def test_bad_spec():
    with pytest.raises(DualClustError):
        SyntheticSpec("cosine")
    with pytest.raises(DualClustError):
        SyntheticSpec("euclidean", n=100)


def test_size_one_label_rule():
    labels = np.array([0, 0, 1])
    for seed in range(20):
        s = generate_constraint_sets(labels, 1, 1, seed=seed).sets[0]
        pair = (s.must_link + s.cannot_link)[0]
        assert (pair in s.must_link) == (max(pair) < 2)


def test_violated_only_empty_pool():
    labels = np.array([0, 0, 1, 1])
    with pytest.raises(DualClustError) as exc:
        generate_constraint_sets(labels, 1, 1, "violated_only", labels)
    assert "empty pool" in str(exc.value)


def test_violated_only_pairs_are_violated():
    labels = np.array([0, 0, 0, 1, 1, 1])
    base = np.array([0, 0, 1, 1, 1, 0])
    s = generate_constraint_sets(labels, 1, 4, "violated_only", base, seed=1).sets[0]
    assert len(s.violated(base)) == len(s) == 4


def test_uniform_sizes():
    labels = np.random.default_rng(0).integers(0, 3, size=200)
    batch = generate_constraint_sets(labels, 500, "uniform_1_100", seed=5)
    sizes = batch.sizes
    assert min(sizes) >= 1 and max(sizes) <= 100
    assert abs(np.mean(sizes) - 50.5) <= 3


def test_pool_too_small():
    with pytest.raises(DualClustError):
        generate_constraint_sets(np.array([0, 1]), 1, 2)


def _small_fitness(sets, seed=0):
    ds = generate_synthetic(SyntheticSpec("euclidean", seed=1))
    config = LagrangianConfig(time_limit=30, max_iterations=10, kmedoids_restarts=0)
    return fitness_experiment([("euclidean", ds)], ["euclidean", "manhattan"], seed=seed, config=config,
                              kmedoids_restarts=2, constraint_sets=sets)


def test_fitness_zero_sets():
    result = _small_fitness([])
    assert len(result.rows) == 2
    assert all(r["n_sets"] == 0 for r in result.rows)
    assert all(-1 <= r["ari"] <= 1 for r in result.rows)


def test_fitness_deterministic_and_order_invariant():
    ds = generate_synthetic(SyntheticSpec("euclidean", seed=1))
    sets = list(generate_constraint_sets(ds.labels, 3, 5, seed=0).sets)
    a = _small_fitness(sets)
    b = _small_fitness(sets)
    c = _small_fitness(list(reversed(sets)))
    assert a.rows == b.rows
    for r1, r2 in zip(a.rows, c.rows):
        assert r1["mean_fitness"] == r2["mean_fitness"]
    for r in a.rows:
        assert 0 <= r["mean_fitness"] <= 3 * 5


def test_transform_experiment_single_run():
    ds = generate_synthetic(SyntheticSpec("euclidean", seed=1))
    cons = ConstraintSet(((0, 1),), ())
    res = transform_experiment(ds, 3, [cons], modes=("random_baseline",), kmeans_restarts=3)
    assert all(r["ari_std"] == 0 and r["distance_std"] == 0 for r in res.rows)
    trace = res.traces["random_baseline"][0]
    assert len(res.rows) == trace.iterations + 1
    assert len([r["ari"] for r in trace.records]) == trace.iterations
