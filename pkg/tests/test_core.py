import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualclust.core import (
    ConstraintSet, Dataset, DissimilarityMatrix, DualClustError, DualSolution, Partition, dual_from_dict,
    dual_to_dict, load_constraints, load_dataset, load_dual, load_matrix, load_partition, save_constraints,
    save_dataset, save_dual, save_matrix, save_partition, validate_constraints,
)


def test_canonical_ordering():
    assert validate_constraints(5, ConstraintSet(((1, 0),), ())).must_link == ((0, 1),)


def test_conflicting_pair():
    with pytest.raises(DualClustError) as exc:
        validate_constraints(5, ConstraintSet(((0, 1),), ((0, 1),)))
    assert exc.value.code == "conflicting_pair"


def test_index_out_of_range():
    with pytest.raises(DualClustError) as exc:
        validate_constraints(3, ConstraintSet((), ((0, 7),)))
    assert "out of range" in str(exc.value)


def test_self_pair_rejected():
    with pytest.raises(DualClustError):
        validate_constraints(3, ConstraintSet(((1, 1),), ()))


pair_lists = st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)).filter(lambda p: p[0] != p[1]), max_size=8)


@given(pair_lists, pair_lists)
def test_canonicalization_idempotent(ml, cl):
    try:
        once = validate_constraints(10, ConstraintSet(tuple(ml), tuple(cl)))
    except DualClustError:
        return
    assert validate_constraints(10, once) == once
    assert all(i < j for i, j in once.must_link + once.cannot_link)


def test_iris_shaped_csv(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["a,b,c,d,label"] + [",".join(f"{v:.2f}" for v in rng.random(4)) + f",{['x', 'y', 'z'][r % 3]}"
                                  for r in range(150)]
    path = tmp_path / "iris.csv"
    path.write_text("\n".join(lines) + "\n")
    ds = load_dataset(path)
    assert (ds.n, ds.d) == (150, 4)
    assert sorted(set(ds.labels.tolist())) == [0, 1, 2]


def test_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(DualClustError) as exc:
        load_dataset(path)
    assert "no data rows" in str(exc.value)


def test_partition_rejects_empty_cluster():
    with pytest.raises(DualClustError):
        Partition(np.array([0, 0, 2]), 3)


def test_matrix_invariants():
    with pytest.raises(DualClustError):
        DissimilarityMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(DualClustError):
        DissimilarityMatrix(np.array([[1.0, 1.0], [1.0, 0.0]]))


def test_dual_rejects_positive():
    with pytest.raises(DualClustError):
        DualSolution(k=2, eta={(0, 1): (0.5, 0.0)}, lam={}, gamma={}, dual_bound=0.0)


@settings(max_examples=25)
@given(st.integers(0, 10**6))
def test_round_trips(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    tmp = tmp_path_factory.mktemp("rt")
    ds = Dataset(rng.normal(size=(10, 3)), rng.integers(0, 3, size=10))
    save_dataset(ds, tmp / "d.csv", meta={"seed": seed})
    assert load_dataset(tmp / "d.csv") == ds

    cons = validate_constraints(10, ConstraintSet(((0, 1), (2, 5)), ((3, 4),)))
    save_constraints(cons, tmp / "c.json")
    assert load_constraints(tmp / "c.json") == cons

    a = np.concatenate([np.arange(3), rng.integers(0, 3, size=7)])
    part = Partition(a, 3, rng.normal(size=(3, 3)))
    save_partition(part, tmp / "p.json")
    assert load_partition(tmp / "p.json") == part

    X = rng.normal(size=(5, 2))
    M = DissimilarityMatrix(np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1)))
    save_matrix(M, tmp / "m.csv")
    assert load_matrix(tmp / "m.csv") == M

    dual = DualSolution(k=3, eta={(3, 4): tuple(-rng.random(3))}, lam={(0, 1): (0.0, -1.5, 0.0), (2, 5): (0.0,) * 3},
                        gamma={(0, 1): tuple(-rng.random(3)), (2, 5): (-2.0, 0.0, 0.0)},
                        dual_bound=float(rng.normal()), iterations=7, converged=True, model="kmedoids")
    save_dual(dual, tmp / "dual.json")
    assert load_dual(tmp / "dual.json") == dual
    assert dual_from_dict(dual_to_dict(dual)) == dual
