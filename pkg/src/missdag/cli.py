"""Command line interface: ``missdag <subcommand> ...``.

Exit codes: 0 on success, 1 for configuration or usage errors, 2 when the
work itself failed (every grid cell for ``bench``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .baselines import gaussian_em_impute, mean_impute
from .bench import ConfigError, ExperimentSpec
from .datagen import MECHANISMS, MissingnessSpec, apply_missingness
from .em import run_missdag
from .files import (
    ensure_dir, read_data_csv, read_graph, write_data_csv,
    write_edge_list, write_matrix_csv,
)
from .metrics import shd, shd_cpdag

log = logging.getLogger("missdag")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _config(args) -> dict:
    return bench.load_config(args.config) if args.config else {}


def _spec_from(args) -> ExperimentSpec:
    """Experiment spec from ``--config`` with single-run command line overrides."""
    cfg = _config(args)
    ex = dict(cfg.get("experiment", {}))
    for key in ("graph", "d", "sem", "noise", "n", "mechanism", "rate"):
        val = getattr(args, key, None)
        if val is not None:
            ex[{"graph": "graphs", "mechanism": "mechanisms", "rate": "rates"}.get(key, key)] = str(val)
    ex.setdefault("graphs", "ER1")
    ex.setdefault("d", "10")
    ex.setdefault("n", "100")
    ex["methods"] = ex.get("methods", "missdag")
    ex["seeds"] = str(args.seed)
    cfg["experiment"] = ex
    return ExperimentSpec.from_config(cfg)


def cmd_generate(args) -> int:
    spec = _spec_from(args)
    out = ensure_dir(args.out)
    graph, mech, rate = spec.graphs[0], spec.mechanisms[0], spec.rates[0]
    sem, x = bench.make_instance(spec, graph, args.seed)
    data = bench.make_masked(spec, x, graph, mech, rate, args.seed)
    write_edge_list(out / "truth.csv", sem.adjacency)
    write_data_csv(out / "clean.csv", x)
    write_data_csv(out / "masked.csv", data)
    manifest = {
        "graph": graph, "d": spec.d, "sem": spec.sem, "noise": spec.noise, "n": spec.n,
        "mechanism": mech, "rate": rate, "seed": args.seed, "missing_rate": data.missing_rate,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote truth.csv, clean.csv, masked.csv, manifest.json to {out}")
    return EXIT_OK


def cmd_mask(args) -> int:
    data = read_data_csv(args.data)
    try:
        mspec = MissingnessSpec(args.mechanism, args.rate)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not data.is_complete:
        raise ConfigError(f"{args.data} already has missing cells; mask expects complete data")
    masked = apply_missingness(data.x, mspec, np.random.default_rng(args.seed))
    write_data_csv(args.out, masked, columns=data.columns)
    print(f"masked {masked.missing_rate:.3f} of cells -> {args.out}")
    return EXIT_OK


def cmd_impute(args) -> int:
    data = read_data_csv(args.data)
    if args.method == "mean":
        imputed = mean_impute(data)
    else:
        imputed = gaussian_em_impute(data, args.iters)[0]
    write_data_csv(args.out, imputed.x, columns=data.columns)
    print(f"imputed {int(imputed.imputed.sum())} cells -> {args.out}")
    return EXIT_OK


def _em_config(args):
    cfg = _config(args)
    if args.model_class:
        cfg.setdefault("em", {})["model_class"] = args.model_class
    if getattr(args, "em_iters", None) is not None:
        cfg.setdefault("em", {})["em_iters"] = str(args.em_iters)
    if getattr(args, "ns", None) is not None:
        cfg.setdefault("em", {})["ns"] = str(args.ns)
    if getattr(args, "solver", None):
        cfg.setdefault("solver", {})["method"] = args.solver
    return bench.em_from_sections(cfg, "linear_gaussian_ev", args.seed)


def cmd_run(args) -> int:
    em_cfg = _em_config(args)
    out = ensure_dir(args.out)
    if args.imputed_csv:
        imputed = read_data_csv(args.imputed_csv)
        if not imputed.is_complete:
            raise ConfigError(f"--imputed-csv {args.imputed_csv} still has missing cells")
        dag = bench.fit_complete(imputed.x, em_cfg.solver)
        write_edge_list(out / "graph.csv", dag)
        print(f"{len(dag.edges())} edges -> {out / 'graph.csv'}")
        return EXIT_OK
    data = read_data_csv(args.data)
    truth = read_graph(args.truth) if args.truth else None
    trace = run_missdag(data, em_cfg, truth=truth)
    write_edge_list(out / "graph.csv", trace.dag)
    write_matrix_csv(out / "weights.csv", trace.fit.weights, columns=data.columns)
    trace.to_csv(out / "trace.csv")
    _write_iterates(out / "iterates.csv", trace.weights)
    print(f"{len(trace)} EM iterations, {len(trace.dag.edges())} edges -> {out / 'graph.csv'}")
    return EXIT_OK


def _write_iterates(path, weights) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "from", "to", "weight"])
        for t, m in enumerate(weights, start=1):
            for i, j in zip(*np.nonzero(m)):
                w.writerow([t, int(i), int(j), repr(float(m[i, j]))])


def cmd_evaluate(args) -> int:
    est, truth = read_graph(args.est), read_graph(args.truth)
    score = shd(est, truth)
    row = {**score.as_row(), "shd_cpdag": shd_cpdag(est, truth)}
    if args.out:
        bench.write_rows(args.out, [row], list(row))
    print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def cmd_bench(args) -> int:
    if not args.config:
        raise ConfigError("bench needs --config")
    spec = ExperimentSpec.from_config(bench.load_config(args.config))
    rows = bench.run_grid(spec, args.out, threads=args.threads)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} runs ({failed} failed); summary -> {Path(args.out) / 'summary.csv'}")
    return EXIT_RUNTIME if rows and failed == len(rows) else EXIT_OK


def cmd_trace(args) -> int:
    run_dir = Path(args.run_dir)
    need = [run_dir / "trace.csv", run_dir / "iterates.csv", run_dir / "weights.csv"]
    missing = [str(p) for p in need if not p.exists()]
    if missing:
        raise ConfigError(f"missing run artifacts: {', '.join(missing)}")
    rows = bench.read_rows(run_dir / "trace.csv")
    with open(run_dir / "weights.csv", newline="") as fh:
        d = len(next(csv.reader(fh)))
    iterates = {}
    for r in bench.read_rows(run_dir / "iterates.csv"):
        iterates.setdefault(int(r["iteration"]), {})[(int(r["from"]), int(r["to"]))] = r["weight"]
    wcols = [f"w_{i}_{j}" for i in range(d) for j in range(d)]
    for row in rows:
        it = iterates.get(int(row["iteration"]), {})
        for i in range(d):
            for j in range(d):
                row[f"w_{i}_{j}"] = it.get((i, j), "0.0")
    out = Path(args.out) if args.out else run_dir / "trace_export.csv"
    bench.write_rows(out, rows, list(rows[0]) if rows else ["iteration"] + wcols)
    print(f"{len(rows)} iterations -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="missdag", description="Causal discovery from incomplete data by EM.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="INI or JSON config file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=out_required)

    g = sub.add_parser("generate", help="simulate a ground-truth SEM, data and a masked copy")
    common(g)
    g.add_argument("--graph", help="graph token such as ER1, ER2, SF2")
    g.add_argument("--d", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--sem", choices=("linear", "mlp", "quadratic"))
    g.add_argument("--noise")
    g.add_argument("--mechanism", choices=MECHANISMS)
    g.add_argument("--rate", type=float)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("mask", help="apply a missingness mechanism to a data CSV")
    common(m)
    m.add_argument("--data", required=True)
    m.add_argument("--mechanism", choices=MECHANISMS, default="MCAR")
    m.add_argument("--rate", type=float, default=0.1)
    m.set_defaults(func=cmd_mask)

    i = sub.add_parser("impute", help="fill missing cells with a baseline imputer")
    common(i)
    i.add_argument("--data", required=True)
    i.add_argument("--method", choices=("mean", "gaussian_em"), default="mean")
    i.add_argument("--iters", type=int, default=10)
    i.set_defaults(func=cmd_impute)

    r = sub.add_parser("run", help="learn a DAG from a masked CSV")
    common(r)
    r.add_argument("--data")
    r.add_argument("--truth", help="true graph, for the per-iteration distance column")
    r.add_argument("--model-class")
    r.add_argument("--solver", choices=("hard_al", "soft", "exhaustive"))
    r.add_argument("--em-iters", type=int)
    r.add_argument("--ns", type=int)
    r.add_argument("--imputed-csv", help="skip EM and fit the solver on this complete CSV")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="score an estimated graph against the truth")
    e.add_argument("--est", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="run a seeded benchmark grid")
    common(b)
    b.add_argument("--threads", type=int, default=1)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("trace", help="export per-iteration diagnostics and weights of a run")
    t.add_argument("--run-dir", required=True)
    t.add_argument("--out")
    t.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run" and not (args.data or args.imputed_csv):
        parser.error("run needs --data or --imputed-csv")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
