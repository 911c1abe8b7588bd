"""Seeded benchmark grids: generate, mask, fit, score, aggregate.

An experiment is described by a flat config with ``[experiment]``,
``[em]`` and ``[solver]`` sections (INI or the same structure in JSON).
Every grid cell is keyed by (graph, mechanism, rate, method, seed) and is
a deterministic function of that key, so cells may run in any order or in
parallel and still write identical per-run CSV files.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import gaussian_em_impute, listwise_delete, mean_impute
from .core import MaskedDataset, NOISE_FAMILIES, SufficientStats
from .datagen import (
    GraphSpec, MECHANISMS, SEM_KINDS, MissingnessSpec, apply_missingness, make_noise_spec,
    make_sem, sample_graph, simulate_sem,
)
from .em import EmConfig, run_missdag
from .metrics import shd, shd_cpdag
from .mstep import MODEL_CLASSES, SolverConfig, fit

log = logging.getLogger(__name__)

IMPUTERS = ("mean", "gaussian_em", "listwise", "complete")
RUN_FIELDS = [
    "graph", "mechanism", "rate", "method", "seed", "status",
    "shd", "extra", "missing", "reversed", "precision", "recall", "f1", "shd_cpdag", "n_edges", "error",
]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    """Read an INI or JSON config into ``{section: {key: str}}``."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
            raise ConfigError(f"{path}: top level must map section names to tables")
        return {s: {k: _json_value(v) for k, v in body.items()} for s, body in raw.items()}
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return {s: dict(parser[s]) for s in parser.sections()}


def _json_value(v) -> str:
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _convert(section, key, value, kind):
    where = f"{section}.{key}"
    try:
        if kind is bool:
            low = value.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot read {value!r} as {kind.__name__}") from None


def _list(value: str) -> list:
    return [v.strip() for v in value.split(",") if v.strip()]


def _seeds(section, value: str) -> list:
    out = []
    for part in _list(value):
        try:
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f"{section}.seeds: cannot read {part!r}") from None
    return out


_SOLVER_TYPES = {f.name: f.type for f in fields(SolverConfig)}
_TYPE_OF = {"str": str, "float": float, "int": int, "bool": bool, "Optional[float]": float}


def solver_from_section(model_class: str, section: dict, seed: int = 0) -> SolverConfig:
    method = section.get("method", "hard_al")
    kwargs = {}
    for key, value in section.items():
        if key == "method":
            continue
        if key not in _SOLVER_TYPES:
            raise ConfigError(f"solver.{key}: unknown option")
        kwargs[key] = _convert("solver", key, value, _TYPE_OF[_SOLVER_TYPES[key]])
    if "model_class" in kwargs and kwargs.pop("model_class") != model_class:
        raise ConfigError("solver.model_class: must match em.model_class")
    kwargs.setdefault("seed", seed)
    try:
        return SolverConfig.default(model_class, method, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def em_from_sections(cfg: dict, default_model_class: str, seed: int = 0) -> EmConfig:
    em = dict(cfg.get("em", {}))
    model_class = em.pop("model_class", default_model_class)
    if model_class not in MODEL_CLASSES:
        raise ConfigError(f"em.model_class: must be one of {MODEL_CLASSES}")
    kinds = {"em_iters": int, "ns": int, "tol": float, "init_cov": str, "loglik_draws": int}
    kwargs = {}
    for key, value in em.items():
        if key not in kinds:
            raise ConfigError(f"em.{key}: unknown option")
        kwargs[key] = _convert("em", key, value, kinds[key])
    solver = solver_from_section(model_class, cfg.get("solver", {}), seed)
    try:
        return EmConfig(model_class=model_class, solver=solver, seed=seed, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"em: {exc}") from None


def default_model_class(sem: str, noise: str) -> str:
    if sem != "linear":
        return "mlp_anm"
    if noise == "gaussian_ev":
        return "linear_gaussian_ev"
    if noise == "gaussian_nv":
        return "linear_gaussian_nv"
    return "linear_logcosh"


@dataclass(frozen=True)
class ExperimentSpec:
    graphs: tuple
    d: int
    sem: str
    noise: str
    n: int
    mechanisms: tuple
    rates: tuple
    methods: tuple
    seeds: tuple
    hidden: int = 100
    raw: dict = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def from_config(cls, cfg: dict) -> "ExperimentSpec":
        if "experiment" not in cfg:
            raise ConfigError("experiment: section missing")
        ex = cfg["experiment"]
        known = {"graphs", "d", "sem", "noise", "n", "mechanisms", "rates", "methods", "seeds", "hidden"}
        for key in ex:
            if key not in known:
                raise ConfigError(f"experiment.{key}: unknown option")
        for key in ("graphs", "d", "n", "seeds", "methods"):
            if key not in ex:
                raise ConfigError(f"experiment.{key}: required")
        spec = cls(
            graphs=tuple(g.upper() for g in _list(ex["graphs"])),
            d=_convert("experiment", "d", ex["d"], int),
            sem=ex.get("sem", "linear"),
            noise=ex.get("noise", "gaussian_ev"),
            n=_convert("experiment", "n", ex["n"], int),
            mechanisms=tuple(m.upper() for m in _list(ex.get("mechanisms", "MCAR"))),
            rates=tuple(_convert("experiment", "rates", r, float) for r in _list(ex.get("rates", "0.1"))),
            methods=tuple(_list(ex["methods"])),
            seeds=tuple(_seeds("experiment", ex["seeds"])),
            hidden=_convert("experiment", "hidden", ex.get("hidden", "100"), int),
            raw=cfg,
        )
        spec.validate()
        return spec

    def validate(self):
        if not self.methods:
            raise ConfigError("experiment.methods: at least one method required")
        if not self.seeds:
            raise ConfigError("experiment.seeds: at least one seed required")
        if self.sem not in SEM_KINDS:
            raise ConfigError(f"experiment.sem: must be one of {SEM_KINDS}")
        if self.noise not in NOISE_FAMILIES:
            raise ConfigError(f"experiment.noise: must be one of {NOISE_FAMILIES}")
        if self.n < 1:
            raise ConfigError("experiment.n: must be positive")
        for g in self.graphs:
            try:
                GraphSpec.parse(g, self.d)
            except ValueError as exc:
                raise ConfigError(f"experiment.graphs: {g}: {exc}") from None
        for m in self.mechanisms:
            if m not in MECHANISMS:
                raise ConfigError(f"experiment.mechanisms: {m!r} not in {MECHANISMS}")
        for r in self.rates:
            if not 0 <= r < 1:
                raise ConfigError(f"experiment.rates: {r} outside [0, 1)")
        for method in self.methods:
            if method != "missdag":
                imputer, _, solver = method.partition("+")
                if imputer not in IMPUTERS or solver != "solver":
                    raise ConfigError(
                        f"experiment.methods: {method!r} is neither 'missdag' nor '<imputer>+solver' with imputer in {IMPUTERS}"
                    )
        # surfaces em/solver errors, including solver/model incompatibility
        em = self.em_config(0)
        if em.gaussian and self.sem != "linear":
            raise ConfigError(f"em.model_class: {em.model_class} cannot model a {self.sem} SEM")

    def em_config(self, seed: int) -> EmConfig:
        return em_from_sections(self.raw, default_model_class(self.sem, self.noise), seed)

    def cells(self) -> list:
        return [
            (g, mech, rate, method, seed)
            for g in self.graphs for mech in self.mechanisms for rate in self.rates
            for method in self.methods for seed in self.seeds
        ]


# ---------------------------------------------------------------------------
# one grid cell
# ---------------------------------------------------------------------------


def _stream(*keys) -> np.random.Generator:
    """RNG keyed by stable integers/strings, independent of execution order."""
    ints = [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(ints))


def make_instance(spec: ExperimentSpec, graph: str, seed: int):
    """Ground-truth SEM and clean samples for one (graph, seed)."""
    gspec = GraphSpec.parse(graph, spec.d, seed=int(_stream("graph", graph, seed).integers(2**31)))
    skel = sample_graph(gspec)
    rng = _stream("sem", graph, seed)
    noise = make_noise_spec(spec.noise, spec.d, rng)
    sem = make_sem(spec.sem, skel, noise, rng, hidden=spec.hidden)
    x = simulate_sem(sem, spec.n, _stream("data", graph, seed))
    return sem, x


def make_masked(spec: ExperimentSpec, x, graph: str, mechanism: str, rate: float, seed: int) -> MaskedDataset:
    rng = _stream("mask", graph, mechanism, repr(rate), seed)
    return apply_missingness(x, MissingnessSpec(mechanism, rate), rng)


def fit_method(method: str, data: MaskedDataset, clean, em_cfg: EmConfig):
    """Final DAG of ``method`` on ``data`` (``clean`` is only used by ``complete+solver``)."""
    if method == "missdag":
        return run_missdag(data, em_cfg).dag
    imputer = method.partition("+")[0]
    if imputer == "mean":
        x = mean_impute(data).x
    elif imputer == "gaussian_em":
        x = gaussian_em_impute(data, em_cfg.em_iters)[0].x
    elif imputer == "listwise":
        x = listwise_delete(data)
    else:
        x = clean
    return fit_complete(x, em_cfg.solver)


def fit_complete(x, solver: SolverConfig):
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("no complete rows left after listwise deletion")
    if solver.model_class.startswith("linear_gaussian"):
        return fit(solver, t=SufficientStats.from_complete(x)).dag
    return fit(solver, x=x).dag


def run_cell(spec: ExperimentSpec, cell) -> dict:
    graph, mech, rate, method, seed = cell
    row = {"graph": graph, "mechanism": mech, "rate": rate, "method": method, "seed": seed}
    try:
        sem, x = make_instance(spec, graph, seed)
        data = make_masked(spec, x, graph, mech, rate, seed)
        est = fit_method(method, data, x, spec.em_config(seed))
        score = shd(est, sem.adjacency)
        row.update(status="ok", **score.as_row(), shd_cpdag=shd_cpdag(est, sem.adjacency),
                   n_edges=len(est.edges()), error="")
    except Exception as exc:  # a failed cell is recorded, not fatal to the grid
        log.debug("cell %s failed:\n%s", cell, traceback.format_exc())
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


def cell_filename(cell) -> str:
    graph, mech, rate, method, seed = cell
    return f"{graph}_{mech}_r{rate:g}_{method.replace('+', '-')}_s{seed}.csv"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(path, rows, fieldnames) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in fieldnames})


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


def _run_and_write(args):
    spec, cell, run_dir = args
    row = run_cell(spec, cell)
    write_rows(Path(run_dir) / cell_filename(cell), [row], RUN_FIELDS)
    return row


def aggregate(rows) -> list:
    """Mean and standard deviation of the scores per (graph, mechanism, rate, method)."""
    groups = {}
    for row in rows:
        key = (row["graph"], row["mechanism"], float(row["rate"]), row["method"])
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        members = groups[key]
        ok = [r for r in members if r["status"] == "ok"]
        agg = dict(zip(("graph", "mechanism", "rate", "method"), key))
        agg["runs"] = len(members)
        agg["failed"] = len(members) - len(ok)
        for metric in ("shd", "shd_cpdag", "f1"):
            vals = np.array([float(r[metric]) for r in ok])
            agg[f"{metric}_mean"] = float(vals.mean()) if vals.size else float("nan")
            agg[f"{metric}_std"] = float(vals.std()) if vals.size else float("nan")
        out.append(agg)
    return out


AGG_FIELDS = [
    "graph", "mechanism", "rate", "method", "runs", "failed",
    "shd_mean", "shd_std", "shd_cpdag_mean", "shd_cpdag_std", "f1_mean", "f1_std",
]


def run_grid(spec: ExperimentSpec, out_dir, threads: int = 1) -> list:
    """Run every cell, write ``runs/<cell>.csv`` and ``summary.csv``; returns the aggregate rows."""
    out = Path(out_dir)
    run_dir = out / "runs"
    run_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(spec, cell, str(run_dir)) for cell in spec.cells()]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_and_write, jobs))
    else:
        rows = [_run_and_write(job) for job in jobs]
    summary = aggregate(rows)
    write_rows(out / "summary.csv", summary, AGG_FIELDS)
    return rows


def collect_runs(out_dir) -> list:
    return [row for p in sorted((Path(out_dir) / "runs").glob("*.csv")) for row in read_rows(p)]
