"""Experiment harness: sample generation, epsilon sweeps, out-of-sample checks.

A sweep solves the model on every cell of an epsilon grid with one shared
training dataset, re-runs each cell with idle balancers pinned, extracts
the valuation reports, and measures the empirical violation rate of the
joint constraint set on fresh out-of-sample draws whose spread widens
with the claimed budget (S_oos = S + S_pert(eps), E|X|_1 = eps for
X ~ N(0, S_pert)).  Everything is seeded; identical configuration gives
byte-identical CSV files.

Training data is drawn once per sweep (not per cell) so that objective
values are comparable across cells; out-of-sample draws are per cell.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from .dro_core import MultiDataset
from .errors import InputError
from .network import Network, build_support
from .opf_model import (OpfDecision, cvar_tightening_rerun, solve_msdro_opf)
from .valuation import (DATA_VALUE_COLUMNS, FORECAST_VALUE_COLUMNS,
                        DataValueReport, ForecastValueReport,
                        forecast_value_decomposition, marginal_data_value)

S_FRACTION = 0.15
VIOLATION_TOL = 1e-9
DEFAULT_GRID = (1.0, 0.1, 0.005, 0.001)


def derive_seed(master: int, *parts) -> int:
    """Stable sub-seed from a master seed and any hashable labels."""
    digest = hashlib.sha256(repr((int(master),) + parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def s_pert(epsilon: float) -> float:
    """Standard deviation with E|X|_1 = epsilon for X ~ N(0, s)."""
    if epsilon < 0:
        raise InputError("epsilon must be >= 0")
    return epsilon * math.sqrt(math.pi / 2.0)


def _truncated_draw(lo: float, up: float, loc: float, scale: float,
                    n: int, seed: int) -> np.ndarray:
    if up - lo <= 0:
        return np.zeros(n)
    if scale <= 0:
        point = min(max(loc, lo), up)
        return np.full(n, point)
    rng = np.random.default_rng(seed)
    a, b = (lo - loc) / scale, (up - loc) / scale
    return truncnorm.rvs(a, b, loc=loc, scale=scale, size=n, random_state=rng)


def generate_training_samples(resource, n: int, seed: int,
                              error_mean: str = "zero") -> np.ndarray:
    """Forecast-error draws for one resource, inside its support interval.

    ``zero`` centers the error distribution at zero (injections drawn
    around the forecast, then shifted back); ``forecast-shift`` keeps the
    raw injection magnitudes as errors, truncated to the same support.
    """
    sup = build_support(resource)
    lo, up = float(sup.lower[0]), float(sup.upper[0])
    scale = S_FRACTION * resource.u
    if error_mean == "zero":
        loc = 0.0
    elif error_mean == "forecast-shift":
        loc = resource.u
    else:
        raise InputError(f"unknown error-mean mode {error_mean!r}")
    return _truncated_draw(lo, up, loc, scale, n, seed)


def generate_oos_samples(resource, epsilon: float, n: int,
                         seed: int) -> np.ndarray:
    """Zero-mean out-of-sample errors with spread widened by epsilon."""
    sup = build_support(resource)
    lo, up = float(sup.lower[0]), float(sup.upper[0])
    scale = S_FRACTION * resource.u + s_pert(epsilon)
    return _truncated_draw(lo, up, 0.0, scale, n, seed)


def training_matrix(network: Network, n: int, seed: int,
                    error_mean: str = "zero") -> np.ndarray:
    """D x n standardized error samples, one row per resource."""
    rows = [generate_training_samples(r, n, derive_seed(seed, "train", j),
                                      error_mean)
            for j, r in enumerate(network.resources)]
    return np.vstack(rows) if rows else np.zeros((0, n))


def oos_matrix(network: Network, epsilons, n: int, seed: int) -> np.ndarray:
    """n x D out-of-sample error vectors for a given budget vector."""
    epsilons = np.atleast_1d(np.asarray(epsilons, dtype=float))
    cell = tuple(float(e) for e in epsilons)
    cols = [generate_oos_samples(r, epsilons[j], n,
                                 derive_seed(seed, "oos", cell, j))
            for j, r in enumerate(network.resources)]
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def violation_rate(a: np.ndarray, b: np.ndarray, samples: np.ndarray,
                   tol: float = VIOLATION_TOL) -> float:
    """Fraction of sample vectors violating any row a_k.xi + b_k <= 0."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        return 0.0
    lhs = samples @ a.T + b
    return float(np.mean(np.any(lhs > tol, axis=1)))


def constraint_rows(network: Network, decision: OpfDecision,
                    b_g: np.ndarray, b_w: np.ndarray):
    """All joint-constraint rows (a_k, b_k) at a fixed decision."""
    m = b_w - b_g @ decision.alpha
    a = np.vstack([-decision.alpha, decision.alpha, m, -m])
    b = np.concatenate([-decision.r_plus, -decision.r_minus,
                        -decision.f_ram_plus, -decision.f_ram_minus])
    return a, b


def empirical_violation(decision: OpfDecision, samples: np.ndarray,
                        network: Network,
                        tol: float = VIOLATION_TOL) -> float:
    """Empirical joint violation probability of a decision on samples."""
    from .network import compute_flow_maps
    b_g, b_w, _ = compute_flow_maps(network)
    a, b = constraint_rows(network, decision, b_g, b_w)
    return violation_rate(a, b, samples, tol)


@dataclass(frozen=True)
class SweepConfig:
    grid: tuple = DEFAULT_GRID
    n_samples: int = 20
    seed: int = 1
    gamma: float = 0.05
    oos_samples: int = 1000
    error_mean: str = "zero"
    tighten: bool = True
    oos_include_zero: bool = True

    def __post_init__(self):
        if min(self.grid) < 0:
            raise InputError("grid values must be >= 0")
        if self.n_samples < 1:
            raise InputError("need at least one training sample")

    def cells(self, dimension: int) -> list:
        return [cell for cell in product(self.grid, repeat=dimension)]

    def oos_cells(self, dimension: int) -> list:
        grid = self.grid + ((0.0,) if self.oos_include_zero
                            and 0.0 not in self.grid else ())
        return [cell for cell in product(grid, repeat=dimension)]


@dataclass
class OosResult:
    epsilons: tuple
    violation: float
    n_samples: int
    status: str = "optimal"


@dataclass
class CellResult:
    epsilons: tuple
    status: str
    message: str = ""
    objective: float = math.nan
    objective_tightened: float = math.nan
    phi: float = math.nan
    data_value: DataValueReport | None = None
    forecast_value: ForecastValueReport | None = None
    activation_price: np.ndarray | None = None
    forecast: np.ndarray | None = None
    p: np.ndarray | None = None
    r_plus: np.ndarray | None = None
    r_minus: np.ndarray | None = None
    alpha: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list
    oos: list

    def cell(self, epsilons) -> CellResult:
        key = tuple(float(e) for e in epsilons)
        for c in self.cells:
            if c.epsilons == key:
                return c
        raise KeyError(key)


def _solve_cell(network: Network, xs: np.ndarray, eps, config: SweepConfig,
                solver: str | None) -> tuple:
    """One grid cell: base solve, tighten, valuation, out-of-sample."""
    cell = tuple(float(e) for e in eps)
    try:
        data = MultiDataset.from_matrix(xs, list(cell))
        base = solve_msdro_opf(network, data, config.gamma, solver=solver)
    except Exception as exc:  # recorded, sweep continues
        return (CellResult(cell, "error", message=str(exc)),
                OosResult(cell, math.nan, 0, "error"))
    if not base.optimal:
        return (CellResult(cell, base.status),
                OosResult(cell, math.nan, 0, base.status))

    tightened = base
    if config.tighten:
        tightened = cvar_tightening_rerun(network, data, config.gamma, base,
                                          solver=solver)
    report = marginal_data_value(base)
    forecast = forecast_value_decomposition(base, network, data)
    c_act = np.array([g.c_A for g in network.generators])
    result = CellResult(
        cell, "optimal",
        objective=base.objective,
        objective_tightened=(tightened.objective if tightened.optimal
                             else base.objective),
        phi=base.duals.phi,
        data_value=report,
        forecast_value=forecast,
        activation_price=c_act @ base.decision.alpha,
        forecast=network.forecast_vector(),
        p=base.decision.p.copy(),
        r_plus=base.decision.r_plus.copy(),
        r_minus=base.decision.r_minus.copy(),
        alpha=base.decision.alpha.copy(),
    )
    samples = oos_matrix(network, cell, config.oos_samples, config.seed)
    rate = empirical_violation(base.decision, samples, network)
    return result, OosResult(cell, rate, config.oos_samples)


def _solve_oos_only(network: Network, xs: np.ndarray, eps,
                    config: SweepConfig, solver: str | None) -> OosResult:
    """Out-of-sample row for a cell outside the main grid (zero budgets)."""
    cell = tuple(float(e) for e in eps)
    try:
        data = MultiDataset.from_matrix(xs, list(cell))
        sol = solve_msdro_opf(network, data, config.gamma, solver=solver)
    except Exception:
        return OosResult(cell, math.nan, 0, "error")
    if not sol.optimal:
        return OosResult(cell, math.nan, 0, sol.status)
    samples = oos_matrix(network, cell, config.oos_samples, config.seed)
    rate = empirical_violation(sol.decision, samples, network)
    return OosResult(cell, rate, config.oos_samples)


def run_sweep(network: Network, config: SweepConfig, jobs: int = 1,
              solver: str | None = None) -> SweepResult:
    """Solve every grid cell on one shared training dataset."""
    dim = len(network.resources)
    xs = training_matrix(network, config.n_samples,
                         derive_seed(config.seed, "train"),
                         config.error_mean)
    main_cells = config.cells(dim)
    extra = [c for c in config.oos_cells(dim) if c not in set(main_cells)]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_solve_cell, network, xs, c, config, solver)
                       for c in main_cells]
            extra_futures = [pool.submit(_solve_oos_only, network, xs, c,
                                         config, solver) for c in extra]
            pairs = [f.result() for f in futures]
            extra_rows = [f.result() for f in extra_futures]
    else:
        pairs = [_solve_cell(network, xs, c, config, solver)
                 for c in main_cells]
        extra_rows = [_solve_oos_only(network, xs, c, config, solver)
                      for c in extra]

    cells = [p[0] for p in pairs]
    oos = [p[1] for p in pairs] + extra_rows
    cells.sort(key=lambda c: c.epsilons)
    oos.sort(key=lambda r: r.epsilons)
    return SweepResult(config, cells, oos)


def _fmt(x) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return f"{x:.10g}" if isinstance(x, float) else str(x)


def _eps_header(dim: int) -> list:
    return [f"eps{j + 1}" for j in range(dim)]


def write_sweep_csvs(result: SweepResult, outdir) -> list:
    """Emit the five table analogues plus plot data; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dim = len(result.cells[0].epsilons) if result.cells else 0
    key = _eps_header(dim)
    written = []

    def emit(name: str, header: list, rows: list) -> None:
        path = outdir / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)

    rows = [[_fmt(e) for e in c.epsilons]
            + [_fmt(c.objective), _fmt(c.objective_tightened), _fmt(c.phi),
               c.status]
            for c in result.cells]
    emit("objectives.csv", key + ["objective", "objective_tightened",
                                  "phi", "status"], rows)

    rows = []
    for c in result.cells:
        if not c.optimal:
            continue
        for j in range(dim):
            rows.append([_fmt(e) for e in c.epsilons]
                        + [str(j), _fmt(c.data_value.lambda_co[j]),
                           _fmt(c.data_value.lambda_cc[j])])
    emit("lambdas.csv", key + ["feature", "lambda_co", "lambda_cc"], rows)

    rows = []
    for c in result.cells:
        if not c.optimal:
            continue
        for g in range(len(c.p)):
            rows.append([_fmt(e) for e in c.epsilons]
                        + [str(g), _fmt(c.p[g]), _fmt(c.r_plus[g]),
                           _fmt(c.r_minus[g])]
                        + [_fmt(c.alpha[g, j]) for j in range(dim)])
    emit("dispatch.csv", key + ["generator", "p", "r_plus", "r_minus"]
         + [f"alpha_{j + 1}" for j in range(dim)], rows)

    rows = []
    for c in result.cells:
        if not c.optimal:
            continue
        for j in range(dim):
            dv, fv = c.data_value, c.forecast_value
            rows.append([_fmt(e) for e in c.epsilons]
                        + [str(j), _fmt(c.activation_price[j]),
                           _fmt(c.forecast[j] * fv.balancing_term[j]),
                           _fmt(c.epsilons[j] * dv.lambda_co[j]),
                           _fmt(c.forecast[j] * fv.reserve_term[j]),
                           _fmt(c.epsilons[j] * c.phi * dv.lambda_cc[j])])
    emit("cost_components.csv",
         key + ["feature", "activation_price", "u_balancing",
                "eps_lambda_co", "u_reserve", "eps_phi_lambda_cc"], rows)

    rows = [[_fmt(e) for e in r.epsilons]
            + [_fmt(r.violation), str(r.n_samples), r.status]
            for r in result.oos]
    emit("oos.csv", key + ["violation_probability", "n_samples", "status"],
         rows)

    rows = []
    for c in result.cells:
        if not c.optimal:
            continue
        for j in range(dim):
            dv = c.data_value
            rows.append([_fmt(e) for e in c.epsilons]
                        + [str(j), _fmt(dv.lambda_co[j]), _fmt(dv.lambda_cc[j]),
                           _fmt(dv.phi), _fmt(dv.marginal_value[j]),
                           _fmt(dv.threshold[j]), dv.regime[j]])
    emit("plotdata_data_value.csv", key + DATA_VALUE_COLUMNS, rows)

    rows = []
    for c in result.cells:
        if not c.optimal:
            continue
        fv = c.forecast_value
        for j in range(dim):
            rows.append([_fmt(e) for e in c.epsilons]
                        + [str(j), _fmt(fv.lmp_term[j]),
                           _fmt(fv.balancing_term[j]), _fmt(fv.reserve_term[j]),
                           _fmt(fv.pi_f[j]), _fmt(fv.pi_d[j]),
                           _fmt(fv.remuneration[j])])
    emit("plotdata_forecast_value.csv", key + FORECAST_VALUE_COLUMNS, rows)
    return written
