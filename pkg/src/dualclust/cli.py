"""Command-line entry point: one subcommand per pipeline stage.

Every subcommand accepts ``--config`` (TOML or JSON), ``--seed`` and
``--threads``. Config values act as defaults; explicit flags win. The
resolved settings are embedded in each output artifact.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from dualclust import __version__
from dualclust.core import (
    DualClustError, load_constraints, load_dataset, load_dual,
    load_matrix, load_partition, provenance, save_constraints, save_dataset, save_dual, save_partition,
    validate_constraints, _dump_json,
)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

# options whose presence is checked after merging the config file
REQUIRED = {
    "synth": ["metric"],
    "genconstraints": ["data", "count"],
    "cluster": ["k"],
    "dual": ["k", "constraints"],
    "fitness": ["dual"],
    "filter": ["dual", "alpha"],
    "transform": ["data", "k", "constraints"],
    "declosses": ["q", "p", "constraints"],
    "ari": ["a", "b"],
    "experiment": ["kind"],
}

DEFAULTS = {
    "seed": 0,
    "model": "mssc",
    "restarts": None,
    "mode": None,
    "epsilon": 0.5,
    "time_limit": 10.0,
    "max_iterations": 500,
    "metric": None,
    "tau": 0.0,
    "size": "uniform_1_100",
    "inner_mode": "local_search",
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise DualClustError("config", f"cannot read {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise DualClustError("config", f"{path}: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in obj.items()}


def _workers(args) -> int:
    value = args.threads if args.threads is not None else os.environ.get("DUALCLUST_THREADS", 1)
    try:
        n = int(value)
    except ValueError as exc:
        raise DualClustError("threads", f"bad thread count {value!r}") from exc
    if n < 1:
        raise DualClustError("threads", "thread count must be positive")
    return n


def _resolved(args) -> dict:
    skip = {"func", "config", "threads", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _rng_seed(args) -> int:
    return int(args.seed)


# ---------------------------------------------------------------------------
# inputs

def _dataset(args):
    return load_dataset(args.data)


def _matrix_input(args):
    """Dissimilarity matrix from --matrix, or from --data under --metric."""
    from dualclust.metrics import pairwise_matrix, parse_metric

    if args.matrix is not None:
        return load_matrix(args.matrix)
    if args.data is None:
        raise DualClustError("input", "k-medoids needs --matrix or --data")
    ds = load_dataset(args.data)
    return pairwise_matrix(parse_metric(args.metric or "euclidean", ds), ds)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    from dualclust.experiments import SyntheticSpec, generate_synthetic

    ds = generate_synthetic(SyntheticSpec(args.metric, seed=_rng_seed(args)))
    _emit(save_dataset(ds, meta=provenance(_resolved(args))), args.out)
    return 0


def cmd_genconstraints(args) -> int:
    from dualclust.experiments import generate_constraint_sets

    ds = _dataset(args)
    if ds.labels is None:
        raise DualClustError("labels", f"{args.data} has no label column")
    size = args.size
    if isinstance(size, str) and size.isdigit():
        size = int(size)
    base = load_partition(args.base) if args.base is not None else None
    mode = args.mode or "ground_truth_uniform"
    batch = generate_constraint_sets(ds.labels, int(args.count), size, mode, base, seed=_rng_seed(args))
    meta = provenance(_resolved(args))
    if len(batch.sets) == 1:
        text = save_constraints(batch.sets[0], meta=meta)
    else:
        obj = {
            "sets": [{"must_link": [list(p) for p in s.must_link], "cannot_link": [list(p) for p in s.cannot_link]}
                     for s in batch.sets],
            "_meta": meta,
        }
        text = _dump_json(obj, None)
    _emit(text, args.out)
    return 0


def cmd_cluster(args) -> int:
    from dualclust.clustering import kmeans_multistart, kmedoids_solve

    k = int(args.k)
    if args.model == "mssc":
        if args.data is None:
            raise DualClustError("input", "mssc needs --data")
        ds = _dataset(args)
        state = kmeans_multistart(ds, k, int(args.restarts or 100), _rng_seed(args))
        part, objective = state.partition, state.objective
    else:
        D = _matrix_input(args)
        state = kmedoids_solve(D, k, args.inner_mode, int(args.restarts or 10), _rng_seed(args))
        part, objective = state.partition(), state.objective
    meta = provenance(_resolved(args))
    meta["objective"] = objective
    _emit(save_partition(part, meta=meta), args.out)
    return 0


def _lagrangian_config(args):
    from dualclust.lagrangian import LagrangianConfig

    return LagrangianConfig(
        epsilon=float(args.epsilon),
        time_limit=float(args.time_limit),
        max_iterations=int(args.max_iterations),
        inner_mode=args.inner_mode,
    )


def cmd_dual(args) -> int:
    from dualclust.lagrangian import subgradient_solve

    config = _lagrangian_config(args)
    if args.model == "mssc" and args.data is None:
        raise DualClustError("input", "mssc needs --data")
    data = _dataset(args).points if args.model == "mssc" else _matrix_input(args)
    cons = load_constraints(args.constraints)
    dual = subgradient_solve(args.model, data, int(args.k), cons, config, seed=_rng_seed(args))
    _emit(save_dual(dual, meta=provenance(_resolved(args))), args.out)
    return 0


def cmd_fitness(args) -> int:
    from dualclust.dualtools import fitness_score

    dual = load_dual(args.dual)
    cons = load_constraints(args.constraints) if args.constraints is not None else None
    report = fitness_score(dual, cons, tau=args.zero_tolerance)
    obj = {
        "score": report.score,
        "max_score": report.max_score,
        "k": dual.k,
        "n_constraints": len(dual.eta) + len(dual.lam),
        "_meta": provenance(_resolved(args)),
    }
    _emit(_dump_json(obj, None), args.out)
    return 0


def cmd_filter(args) -> int:
    from dualclust.dualtools import filter_constraints, impact_scores

    dual = load_dual(args.dual)
    kept, removed = filter_constraints(impact_scores(dual), float(args.alpha), float(args.tau),
                                       keep_zero_impact=bool(args.keep_zero))
    meta = provenance(_resolved(args))
    meta["removed"] = {"must_link": [list(p) for p in removed.must_link],
                       "cannot_link": [list(p) for p in removed.cannot_link]}
    _emit(save_constraints(kept, meta=meta), args.out)
    return 0


def cmd_transform(args) -> int:
    from dualclust.lagrangian import LagrangianConfig
    from dualclust.transform import run_transform

    ds = _dataset(args)
    cons = validate_constraints(ds, load_constraints(args.constraints))
    mode = {"dual": "dual_guided", "random": "random_baseline"}.get(args.mode or "dual", args.mode)
    config = LagrangianConfig(epsilon=float(args.epsilon), time_limit=float(args.time_limit),
                              max_iterations=int(args.max_iterations))
    moved, trace = run_transform(ds, int(args.k), cons, mode, int(args.restarts or 100), config, _rng_seed(args))
    meta = provenance(_resolved(args))
    if args.trace is not None:
        trace.to_csv(args.trace, meta=meta)
    _emit(save_dataset(moved, meta=meta), args.out)
    return 0


def _matrix_csv(path: str) -> np.ndarray:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        return np.array([[float(v) for v in r.split(",")] for r in rows])
    except ValueError as exc:
        raise DualClustError("malformed", f"{path}: {exc}") from exc


def cmd_declosses(args) -> int:
    from dualclust.dualtools import dec_losses

    Q, P = _matrix_csv(args.q), _matrix_csv(args.p)
    cons = validate_constraints(Q.shape[0], load_constraints(args.constraints))
    lc, lml, lcl = dec_losses(Q, P, cons.must_link, cons.cannot_link)
    obj = {"clustering": lc, "must_link": lml, "cannot_link": lcl, "_meta": provenance(_resolved(args))}
    _emit(_dump_json(obj, None), args.out)
    return 0


def _labels_of(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        ds = load_dataset(path)
        if ds.labels is None:
            raise DualClustError("labels", f"{path} has no label column")
        return ds.labels
    return load_partition(path).assignment


def cmd_ari(args) -> int:
    from dualclust.evaluation import adjusted_rand_index

    print(repr(adjusted_rand_index(_labels_of(args.a), _labels_of(args.b))))
    return 0


def _rows_csv(rows: list[dict], meta: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def cmd_experiment(args) -> int:
    from dualclust.experiments import (
        SYNTHETIC_KINDS, SyntheticSpec, fitness_experiment, generate_constraint_sets, generate_synthetic,
        transform_experiment,
    )
    from dualclust.lagrangian import LagrangianConfig

    seed = _rng_seed(args)
    workers = _workers(args)
    if args.kind == "fitness":
        kinds = args.datasets or list(SYNTHETIC_KINDS)
        specs = [SyntheticSpec(kd, seed=int(args.dataset_seed)) for kd in kinds]
        metrics = args.metrics or list(SYNTHETIC_KINDS)
        config = LagrangianConfig(epsilon=float(args.epsilon), time_limit=float(args.time_limit),
                                  max_iterations=int(args.max_iterations), kmedoids_restarts=0)
        result = fitness_experiment(specs, metrics, int(args.count or 100), float(args.time_limit), seed,
                                    config=config, workers=workers)
        rows = result.rows
    elif args.kind == "transform":
        if args.data is not None:
            ds = _dataset(args)
        else:
            ds = generate_synthetic(SyntheticSpec((args.datasets or ["euclidean"])[0], seed=int(args.dataset_seed)))
        k = int(args.k or 3)
        from dualclust.clustering import kmeans_multistart

        base = kmeans_multistart(ds, k, int(args.restarts or 100), [seed, 0]).assignment
        size = int(args.size) if str(args.size).isdigit() else 15
        sets = generate_constraint_sets(ds.labels, int(args.count or 20), size, "violated_only", base,
                                        seed=[seed, 1]).sets
        config = LagrangianConfig(epsilon=float(args.epsilon), time_limit=float(args.time_limit),
                                  max_iterations=int(args.max_iterations))
        result = transform_experiment(ds, k, sets, seed=seed, kmeans_restarts=int(args.restarts or 100),
                                      config=config, workers=workers)
        rows = result.rows
    else:
        raise DualClustError("experiment", f"unknown experiment {args.kind!r}")
    _emit(_rows_csv(rows, provenance(_resolved(args))), args.out)
    return 0


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON file with default option values")
    common.add_argument("--seed", type=int, help="seed for every random stream (default 0)")
    common.add_argument("--threads", type=int, help="worker cap (fallback: DUALCLUST_THREADS)")
    common.add_argument("--out", help="output path (default: stdout)")

    parser = _Parser(prog="dualclust", description="Lagrangian dual information for constrained clustering.")
    parser.add_argument("--version", action="version", version=f"dualclust {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        p.set_defaults(func=func)
        return p

    def solver_flags(p):
        p.add_argument("--epsilon", type=float)
        p.add_argument("--time-limit", type=float)
        p.add_argument("--max-iterations", type=int)

    p = add("synth", cmd_synth, "generate a labelled synthetic benchmark")
    p.add_argument("--metric", choices=["euclidean", "manhattan", "chebyshev", "mahalanobis"])

    p = add("genconstraints", cmd_genconstraints, "draw ground-truth constraint sets")
    p.add_argument("--data")
    p.add_argument("--count", type=int)
    p.add_argument("--size", help="pairs per set: an integer or uniform_1_100")
    p.add_argument("--mode", choices=["ground_truth_uniform", "violated_only"])
    p.add_argument("--base", help="partition JSON for violated_only mode")

    p = add("cluster", cmd_cluster, "unconstrained MSSC or k-medoids clustering")
    p.add_argument("--model", choices=["mssc", "kmedoids"])
    p.add_argument("--k", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--data")
    p.add_argument("--matrix")
    p.add_argument("--metric")
    p.add_argument("--inner-mode", choices=["exact", "local_search"])

    p = add("dual", cmd_dual, "solve the Lagrangian dual of a constrained clustering")
    p.add_argument("--model", choices=["mssc", "kmedoids"])
    p.add_argument("--k", type=int)
    p.add_argument("--constraints")
    p.add_argument("--data")
    p.add_argument("--matrix")
    p.add_argument("--metric")
    p.add_argument("--inner-mode", choices=["exact", "local_search"])
    solver_flags(p)

    p = add("fitness", cmd_fitness, "fitness score of a dual solution")
    p.add_argument("--dual")
    p.add_argument("--constraints")
    p.add_argument("--zero-tolerance", type=float)

    p = add("filter", cmd_filter, "drop the most negative-impact constraints")
    p.add_argument("--dual")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--keep-zero", action="store_true", default=None)

    p = add("transform", cmd_transform, "move points until the constraints hold")
    p.add_argument("--data")
    p.add_argument("--k", type=int)
    p.add_argument("--constraints")
    p.add_argument("--mode", choices=["dual", "random"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--trace")
    solver_flags(p)

    p = add("declosses", cmd_declosses, "clustering, must-link and cannot-link losses")
    p.add_argument("--q")
    p.add_argument("--p")
    p.add_argument("--constraints")

    p = add("ari", cmd_ari, "adjusted Rand index of two partitions")
    p.add_argument("--a")
    p.add_argument("--b")

    p = add("experiment", cmd_experiment, "run a fitness or transform experiment grid")
    p.add_argument("kind", nargs="?", choices=["fitness", "transform"])
    p.add_argument("--datasets", nargs="+")
    p.add_argument("--dataset-seed", type=int)
    p.add_argument("--metrics", nargs="+")
    p.add_argument("--count", type=int)
    p.add_argument("--size")
    p.add_argument("--data")
    p.add_argument("--k", type=int)
    p.add_argument("--restarts", type=int)
    solver_flags(p)
    return parser


SUBCOMMAND_DEFAULTS = {
    "dual": {"time_limit": 10.0, "max_iterations": 500},
    "transform": {"time_limit": 2.0, "max_iterations": 200},
    "experiment": {"time_limit": 2.0, "max_iterations": 150, "dataset_seed": 1},
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        section = config.pop(args.command, None)
        if isinstance(section, dict):
            config.update({k.replace("-", "_"): v for k, v in section.items()})
        merged = dict(DEFAULTS)
        merged.update(SUBCOMMAND_DEFAULTS.get(args.command, {}))
        merged.update(config)
        for key, value in merged.items():
            if hasattr(args, key) and getattr(args, key) is None:
                setattr(args, key, value)
        missing = [f"--{name.replace('_', '-')}" for name in REQUIRED[args.command] if getattr(args, name, None) is None]
        if missing:
            parser._subparsers._group_actions[0].choices[args.command].error(
                "the following arguments are required: " + ", ".join(missing))
        return args.func(args)
    except DualClustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
