"""Domain types shared across the package, plus their file formats.

Cluster indices are 0-based everywhere. Constraint pairs are stored as
``(i, j)`` with ``i < j``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from dualclust import __version__


class DualClustError(ValueError):
    """Domain error carrying a short machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code

    def __str__(self) -> str:
        return f"{self.code}: {self.args[0]}"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """n points in R^d with optional ground-truth labels and display ids."""

    points: np.ndarray
    labels: np.ndarray | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DualClustError("no_data", "dataset needs at least one point")
        if pts.shape[1] < 1:
            raise DualClustError("dimension", "points need dimension d >= 1")
        if not np.all(np.isfinite(pts)):
            raise DualClustError("non_finite", "points contain NaN or inf")
        object.__setattr__(self, "points", _frozen(pts))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (pts.shape[0],):
                raise DualClustError("label_length", "labels must have one entry per point")
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(np.equal(np.mod(labels, 1), 0)):
                    raise DualClustError("label_type", "labels must be integers")
            labels = labels.astype(np.int64)
            if labels.min() < 0:
                raise DualClustError("label_range", "labels must be non-negative")
            object.__setattr__(self, "labels", _frozen(labels))
        if self.ids is not None:
            ids = tuple(str(s) for s in self.ids)
            if len(ids) != pts.shape[0]:
                raise DualClustError("id_length", "ids must have one entry per point")
            object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def with_points(self, points: np.ndarray) -> "Dataset":
        return Dataset(points, self.labels, self.ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.points.shape != other.points.shape or not np.array_equal(self.points, other.points):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        if self.labels is not None and not np.array_equal(self.labels, other.labels):
            return False
        return self.ids == other.ids

    __hash__ = None


Pair = tuple[int, int]


@dataclass(frozen=True)
class ConstraintSet:
    """Must-link and cannot-link index pairs.

    Construction does not canonicalize; use :func:`validate_constraints`.
    """

    must_link: tuple[Pair, ...] = ()
    cannot_link: tuple[Pair, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "must_link", tuple((int(i), int(j)) for i, j in self.must_link))
        object.__setattr__(self, "cannot_link", tuple((int(i), int(j)) for i, j in self.cannot_link))

    def __len__(self) -> int:
        return len(self.must_link) + len(self.cannot_link)

    def items(self) -> list[tuple[str, Pair]]:
        """All constraints in canonical order: cannot-links first, then must-links."""
        return [("CL", p) for p in self.cannot_link] + [("ML", p) for p in self.must_link]

    def is_violated(self, kind: str, pair: Pair, assignment: Sequence[int]) -> bool:
        same = assignment[pair[0]] == assignment[pair[1]]
        return same if kind == "CL" else not same

    def violated(self, assignment: Sequence[int]) -> list[tuple[str, Pair]]:
        return [(kind, p) for kind, p in self.items() if self.is_violated(kind, p, assignment)]


def validate_constraints(dataset: Dataset | int, constraints: ConstraintSet) -> ConstraintSet:
    """Return the canonical form of ``constraints`` for a dataset of n points.

    Pairs are reordered to ``i < j`` and duplicates dropped, keeping first
    occurrence order.
    """
    n = dataset if isinstance(dataset, int) else dataset.n

    def canon(pairs: Iterable[Pair]) -> tuple[Pair, ...]:
        out: dict[Pair, None] = {}
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise DualClustError("index_range", f"index out of range in pair ({i}, {j}) for n={n}")
            if i == j:
                raise DualClustError("self_pair", f"self-pair ({i}, {i})")
            out[(min(i, j), max(i, j))] = None
        return tuple(out)

    ml = canon(constraints.must_link)
    cl = canon(constraints.cannot_link)
    both = set(ml) & set(cl)
    if both:
        i, j = sorted(both)[0]
        raise DualClustError("conflicting_pair", f"conflicting pair ({i}, {j}) is both must-link and cannot-link")
    return ConstraintSet(ml, cl)


@dataclass(frozen=True, eq=False)
class Partition:
    """Hard assignment of n points to k non-empty clusters, optional centers."""

    assignment: np.ndarray
    k: int
    centers: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or a.size == 0:
            raise DualClustError("assignment", "assignment must be a non-empty 1-d sequence")
        a = a.astype(np.int64)
        k = int(self.k)
        if k < 1:
            raise DualClustError("k", "k must be >= 1")
        if a.min() < 0 or a.max() >= k:
            raise DualClustError("assignment", f"cluster index outside 0..{k - 1}")
        sizes = np.bincount(a, minlength=k)
        if np.any(sizes == 0):
            raise DualClustError("empty_cluster", f"cluster {int(np.argmin(sizes))} is empty")
        object.__setattr__(self, "assignment", _frozen(a))
        object.__setattr__(self, "k", k)
        if self.centers is not None:
            c = np.asarray(self.centers, dtype=float)
            if c.ndim != 2 or c.shape[0] != k:
                raise DualClustError("centers", "centers must be a k x d array")
            object.__setattr__(self, "centers", _frozen(c))

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        if self.k != other.k or not np.array_equal(self.assignment, other.assignment):
            return False
        if (self.centers is None) != (other.centers is None):
            return False
        return self.centers is None or np.array_equal(self.centers, other.centers)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    """Symmetric non-negative n x n matrix with zero diagonal."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] == 0:
            raise DualClustError("matrix_shape", "dissimilarity matrix must be square and non-empty")
        if not np.all(np.isfinite(v)):
            raise DualClustError("non_finite", "dissimilarity matrix contains NaN or inf")
        if not np.array_equal(v, v.T):
            raise DualClustError("asymmetric", "dissimilarity matrix is not symmetric")
        if np.any(np.diag(v) != 0):
            raise DualClustError("diagonal", "dissimilarity matrix diagonal must be zero")
        if np.any(v < 0):
            raise DualClustError("negative", "dissimilarities must be non-negative")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DissimilarityMatrix):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class DualSolution:
    """Multipliers of the relaxed pairwise constraints and the bound they give.

    ``eta`` maps each cannot-link pair to its k per-cluster multipliers;
    ``lam`` and ``gamma`` do the same for the two must-link inequalities.
    """

    k: int
    eta: Mapping[Pair, tuple[float, ...]] = field(default_factory=dict)
    lam: Mapping[Pair, tuple[float, ...]] = field(default_factory=dict)
    gamma: Mapping[Pair, tuple[float, ...]] = field(default_factory=dict)
    dual_bound: float = -math.inf
    iterations: int = 0
    converged: bool = False
    model: str = "mssc"
    epsilon: float = 0.5
    upper_bound: float | None = None

    def __post_init__(self):
        for name in ("eta", "lam", "gamma"):
            table = {}
            for key, vals in dict(getattr(self, name)).items():
                key = (int(key[0]), int(key[1]))
                vals = tuple(float(v) + 0.0 for v in vals)
                if len(vals) != self.k:
                    raise DualClustError("dual_shape", f"{name}{key} has {len(vals)} values, expected k={self.k}")
                if key[0] >= key[1] or key[0] < 0:
                    raise DualClustError("dual_key", f"{name} key {key} is not a canonical pair")
                if any(v > 0 for v in vals):
                    raise DualClustError("dual_sign", f"{name}{key} has a positive multiplier")
                table[key] = vals
            object.__setattr__(self, name, table)
        if set(self.lam) != set(self.gamma):
            raise DualClustError("dual_shape", "lambda and gamma must cover the same must-link pairs")

    @property
    def constraints(self) -> ConstraintSet:
        return ConstraintSet(tuple(self.lam), tuple(self.eta))

    def zero_tolerance(self) -> float:
        return 1e-6 * (1.0 + abs(self.dual_bound))


# ---------------------------------------------------------------------------
# serialization

def provenance(config: Mapping[str, Any] | None = None) -> dict:
    return {"tool": "dualclust", "version": __version__, "config": dict(config or {})}


def _dump_json(obj: dict, path: str | Path | None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _read_json(path: str | Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DualClustError("malformed", f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise DualClustError("malformed", f"{path}: expected a JSON object")
    return obj


def _data_lines(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def load_dataset(path: str | Path, format: str = "csv") -> Dataset:
    """Read a dataset from CSV.

    A header row is required. A column named ``label`` holds ground truth
    (non-numeric labels are mapped to 0..K-1 in order of appearance); a
    column named ``id`` holds display names; every other column must be
    numeric. Lines starting with ``#`` are ignored.
    """
    if format != "csv":
        raise DualClustError("format", f"unsupported dataset format {format!r}")
    rows = list(csv.reader(_data_lines(Path(path).read_text())))
    if len(rows) < 2:
        raise DualClustError("no_data", f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    label_col = header.index("label") if "label" in header else None
    id_col = header.index("id") if "id" in header else None
    feat_cols = [c for c in range(len(header)) if c not in (label_col, id_col)]
    if not feat_cols:
        raise DualClustError("malformed", f"{path}: no feature columns")
    points, raw_labels, ids = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DualClustError("dimension", f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        try:
            points.append([float(row[c]) for c in feat_cols])
        except ValueError as exc:
            raise DualClustError("malformed", f"{path}: row {lineno}: {exc}") from exc
        if label_col is not None:
            raw_labels.append(row[label_col].strip())
        if id_col is not None:
            ids.append(row[id_col].strip())
    labels = None
    if label_col is not None:
        try:
            labels = [int(v) for v in raw_labels]
        except ValueError:
            codes: dict[str, int] = {}
            labels = [codes.setdefault(v, len(codes)) for v in raw_labels]
    return Dataset(np.array(points), labels, tuple(ids) if id_col is not None else None)


def save_dataset(dataset: Dataset, path: str | Path | None = None, meta: dict | None = None) -> str:
    buf = io.StringIO()
    if meta is not None:
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    header = (["id"] if dataset.ids is not None else []) + [f"x{c}" for c in range(dataset.d)]
    if dataset.labels is not None:
        header.append("label")
    w.writerow(header)
    for r in range(dataset.n):
        row = ([dataset.ids[r]] if dataset.ids is not None else []) + [repr(float(v)) for v in dataset.points[r]]
        if dataset.labels is not None:
            row.append(str(int(dataset.labels[r])))
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_matrix(path: str | Path) -> DissimilarityMatrix:
    """Read an n x n dissimilarity matrix from headerless CSV."""
    rows = list(csv.reader(_data_lines(Path(path).read_text())))
    if not rows:
        raise DualClustError("no_data", f"{path}: no data rows")
    try:
        values = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise DualClustError("malformed", f"{path}: {exc}") from exc
    return DissimilarityMatrix(values)


def save_matrix(matrix: DissimilarityMatrix, path: str | Path | None = None, meta: dict | None = None) -> str:
    lines = ["# " + json.dumps(meta, sort_keys=True)] if meta is not None else []
    lines += [",".join(repr(float(v)) for v in row) for row in matrix.values]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def constraints_to_dict(c: ConstraintSet) -> dict:
    return {"must_link": [list(p) for p in c.must_link], "cannot_link": [list(p) for p in c.cannot_link]}


def save_constraints(c: ConstraintSet, path: str | Path | None = None, meta: dict | None = None) -> str:
    obj = constraints_to_dict(c)
    if meta is not None:
        obj["_meta"] = meta
    return _dump_json(obj, path)


def constraints_from_dict(obj: Mapping) -> ConstraintSet:
    try:
        ml = [(int(i), int(j)) for i, j in obj.get("must_link", [])]
        cl = [(int(i), int(j)) for i, j in obj.get("cannot_link", [])]
    except (TypeError, ValueError) as exc:
        raise DualClustError("malformed", f"bad constraint pair: {exc}") from exc
    return ConstraintSet(tuple(ml), tuple(cl))


def load_constraints(path: str | Path) -> ConstraintSet:
    return constraints_from_dict(_read_json(path))


def save_partition(p: Partition, path: str | Path | None = None, meta: dict | None = None) -> str:
    obj: dict[str, Any] = {"k": p.k, "assignment": [int(a) for a in p.assignment]}
    if p.centers is not None:
        obj["centers"] = [[float(v) for v in row] for row in p.centers]
    if meta is not None:
        obj["_meta"] = meta
    return _dump_json(obj, path)


def load_partition(path: str | Path) -> Partition:
    obj = _read_json(path)
    if "assignment" not in obj:
        raise DualClustError("malformed", f"{path}: missing 'assignment'")
    assignment = obj["assignment"]
    k = obj.get("k", (max(assignment) + 1) if assignment else 0)
    return Partition(np.array(assignment), k, np.array(obj["centers"]) if "centers" in obj else None)


def dual_to_dict(dual: DualSolution) -> dict:
    return {
        "model": dual.model,
        "k": dual.k,
        "epsilon": dual.epsilon,
        "dual_bound": dual.dual_bound,
        "upper_bound": dual.upper_bound,
        "iterations": dual.iterations,
        "converged": dual.converged,
        "cannot_link": [{"i": i, "j": j, "eta": list(v)} for (i, j), v in dual.eta.items()],
        "must_link": [
            {"i": i, "j": j, "lambda": list(v), "gamma": list(dual.gamma[(i, j)])}
            for (i, j), v in dual.lam.items()
        ],
    }


def save_dual(dual: DualSolution, path: str | Path | None = None, meta: dict | None = None) -> str:
    obj = dual_to_dict(dual)
    if meta is not None:
        obj["_meta"] = meta
    return _dump_json(obj, path)


def dual_from_dict(obj: Mapping) -> DualSolution:
    try:
        return DualSolution(
            k=int(obj["k"]),
            eta={(r["i"], r["j"]): r["eta"] for r in obj.get("cannot_link", [])},
            lam={(r["i"], r["j"]): r["lambda"] for r in obj.get("must_link", [])},
            gamma={(r["i"], r["j"]): r["gamma"] for r in obj.get("must_link", [])},
            dual_bound=float(obj["dual_bound"]),
            iterations=int(obj.get("iterations", 0)),
            converged=bool(obj.get("converged", False)),
            model=str(obj.get("model", "mssc")),
            epsilon=float(obj.get("epsilon", 0.5)),
            upper_bound=None if obj.get("upper_bound") is None else float(obj["upper_bound"]),
        )
    except (KeyError, TypeError) as exc:
        raise DualClustError("malformed", f"bad dual solution: {exc}") from exc


def load_dual(path: str | Path) -> DualSolution:
    return dual_from_dict(_read_json(path))
