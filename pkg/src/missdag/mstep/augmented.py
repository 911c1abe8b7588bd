"""Augmented Lagrangian driver for ``min f(x) s.t. h(x) = 0``."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)


@dataclass
class SolverTrace:
    """One row per outer iteration: objective, constraint value, rho, alpha."""

    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def to_csv(self, path) -> None:
        if not self.rows:
            return
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows)


def lbfgsb(fun, x0, bounds, cfg):
    sol = minimize(
        fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"gtol": cfg.gtol, "maxiter": cfg.max_inner, "maxfun": cfg.max_inner},
    )
    return sol.x


def augmented_lagrangian(loss, constraint, x0, bounds, cfg):
    """Run the penalty/multiplier schedule until ``h <= h_min`` or ``rho >= rho_max``.

    ``loss(x)`` and ``constraint(x)`` both return ``(value, gradient)``.
    Each sub-problem minimizes ``f + alpha h + rho/2 h^2`` with L-BFGS-B.
    The penalty grows by ``beta`` while a solve fails to shrink ``h`` by
    the factor ``gamma``. Returns ``(x, h, trace)``.
    """
    rho, alpha, h = cfg.rho0, cfg.alpha0, np.inf
    x = np.asarray(x0, dtype=float)
    trace = SolverTrace()

    def sub_objective(v):
        f, g = loss(v)
        hv, hg = constraint(v)
        return f + alpha * hv + 0.5 * rho * hv * hv, g + (alpha + rho * hv) * hg

    for outer in range(cfg.max_outer):
        while True:
            x_new = lbfgsb(sub_objective, x, bounds, cfg)
            h_new = constraint(x_new)[0]
            if h_new > cfg.gamma * h:
                rho = max(rho * cfg.beta, 1.0)
                if rho >= cfg.rho_max:
                    break
            else:
                break
        x, h = x_new, h_new
        alpha += rho * h
        trace.add(outer=outer, objective=float(loss(x)[0]), h=float(h), rho=float(rho), alpha=float(alpha))
        if h <= cfg.h_min or rho >= cfg.rho_max:
            break
    else:
        log.warning("augmented Lagrangian stopped after %d outer steps with h = %.3g", cfg.max_outer, h)
    return x, float(h), trace
