"""Dual-based data valuation for the robust OPF solution.

Everything in this module is post-processing: given an optimal solution
with named duals, it reads off the marginal value of data quality

    dL/deps_j = lambda_co_j + phi * lambda_cc_j,

classifies each feature's regime, predicts the lambda_co dichotomy
offline from the samples alone, and decomposes the marginal value of the
forecast u_j into the locational price minus the balancing and reserve
contributions.  The decomposition follows the price convention of the
model's dual layer: equality duals are taken as written (rhs
sensitivities), inequality duals as nonnegative multipliers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dro_core import BoxSupport, MultiDataset
from .errors import ExtractionError, InputError
from .network import Network
from .opf_model import SolutionWithDuals, solve_msdro_opf

REGIME_TOL = 1e-6
DEGENERACY_BAND = 1e-9

ROBUST_IGNORED = "robust-ignored"
DATA_INFORMED = "data-informed"
MIXED = "mixed/degenerate"


@dataclass(frozen=True)
class DataValueReport:
    """Per-feature marginal value of data quality at an optimum."""

    epsilons: np.ndarray
    lambda_co: np.ndarray
    lambda_cc: np.ndarray
    phi: float
    marginal_value: np.ndarray
    threshold: np.ndarray
    regime: tuple

    @property
    def dimension(self) -> int:
        return len(self.lambda_co)


@dataclass(frozen=True)
class ForecastValueReport:
    """Decomposition of the forecast value u_j and its remuneration."""

    lmp_term: np.ndarray
    balancing_term: np.ndarray
    reserve_term: np.ndarray
    pi_f: np.ndarray
    pi_d: np.ndarray
    remuneration: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.pi_f)


@dataclass(frozen=True)
class OfflinePrediction:
    """Offline usefulness prediction from thresholds, one entry per feature."""

    threshold: np.ndarray
    predicted_lambda_co: np.ndarray


@dataclass(frozen=True)
class EnvelopeCheck:
    finite_difference: float
    analytic: float
    degenerate: bool


def _require_duals(sol: SolutionWithDuals) -> None:
    if not sol.optimal:
        raise ExtractionError(f"solution status is {sol.status}")
    if sol.duals is None or sol.lambda_co is None:
        raise ExtractionError("solution carries no dual values")


def classify_regime(lambda_co: float, lambda_cc: float,
                    tol: float = REGIME_TOL) -> str:
    if lambda_co <= tol and lambda_cc <= tol:
        return ROBUST_IGNORED
    if lambda_co > tol and lambda_cc > tol:
        return DATA_INFORMED
    return MIXED


def offline_thresholds(data: MultiDataset, support: BoxSupport) -> np.ndarray:
    """Average distance of each feature's samples to its worst corner."""
    if support.dimension != data.dimension:
        raise InputError("support and dataset dimensions differ")
    return np.array([float(np.mean(data.samples[j] - support.lower[j]))
                     for j in range(data.dimension)])


def prop3_offline_check(data: MultiDataset, support: BoxSupport,
                        activation_cost) -> OfflinePrediction:
    """Predict the lambda_co dichotomy before solving anything.

    activation_cost is the per-feature total activation price sum_g
    c_g^A alpha_gj the prediction should snap to on the informative side.
    The threshold is the sample mean distance to the lower support corner;
    budgets at or above it buy nothing beyond the known support.
    """
    thresholds = offline_thresholds(data, support)
    cost = np.atleast_1d(np.asarray(activation_cost, dtype=float))
    if len(cost) != data.dimension:
        raise InputError("need one activation cost per feature")
    predicted = np.where(data.epsilons >= thresholds, 0.0, cost)
    return OfflinePrediction(thresholds, predicted)


def marginal_data_value(sol: SolutionWithDuals) -> DataValueReport:
    """Read dL/deps_j = lambda_co_j + phi lambda_cc_j off the duals."""
    _require_duals(sol)
    built = sol.built
    phi = sol.duals.phi
    lam_co = sol.lambda_co.copy()
    lam_cc = (sol.lambda_cc.copy() if sol.lambda_cc is not None
              else np.zeros_like(lam_co))
    marginal = lam_co + phi * lam_cc
    thresholds = offline_thresholds(built.data, built.support)
    regimes = tuple(classify_regime(lam_co[j], lam_cc[j])
                    for j in range(len(lam_co)))
    return DataValueReport(
        epsilons=built.data.epsilons.copy(),
        lambda_co=lam_co,
        lambda_cc=lam_cc,
        phi=phi,
        marginal_value=marginal,
        threshold=thresholds,
        regime=regimes,
    )


def forecast_value_decomposition(sol: SolutionWithDuals, network: Network,
                                 data: MultiDataset) -> ForecastValueReport:
    """Split dL/du_j into price, balancing, and reserve contributions.

    Term (a) is the LMP at the resource bus: the balance dual plus the
    congestion component through the flow sensitivities.  Terms (b) and
    (c) collect the cut multipliers of the objective block and of the
    chance-constraint block; both scale with kappa_j because the support
    corners move with the forecast.  The reserve sum runs over the
    physical rows only; the augmented zero row carries no a'_k.
    """
    _require_duals(sol)
    duals = sol.duals
    built = sol.built
    dim = data.dimension
    kappa = np.array([r.kappa for r in network.resources])
    u = np.array([r.u for r in network.resources])
    c_act = np.array([g.c_A for g in network.generators])
    act_price = c_act @ sol.decision.alpha

    lmp = duals.pi + built.b_w.T @ (duals.beta_up - duals.beta_lo)

    lam_co = sol.lambda_co
    balancing = kappa * (
        np.sum(duals.mu_up, axis=1) * (act_price + lam_co)
        + np.sum(duals.mu_lo, axis=1) * (act_price - lam_co)
    )

    k_phys = built.num_cc_rows
    reserve = np.zeros(dim)
    if k_phys and sol.s_aux is not None:
        a_rows = sol.cc_a_matrix()[:k_phys]
        lam_cc = sol.lambda_cc
        for j in range(dim):
            rho_up = duals.rho_up[j, :, :k_phys]
            rho_lo = duals.rho_lo[j, :, :k_phys]
            reserve[j] = kappa[j] * float(
                np.sum(rho_up * (lam_cc[j] - a_rows[:, j]))
                - np.sum(rho_lo * (lam_cc[j] + a_rows[:, j]))
            )
        lam_cc_vec = lam_cc
    else:
        lam_cc_vec = np.zeros(dim)

    pi_f = lmp - balancing - reserve
    pi_d = lam_co + duals.phi * lam_cc_vec
    remuneration = u * pi_f - data.epsilons * pi_d
    return ForecastValueReport(
        lmp_term=lmp,
        balancing_term=balancing,
        reserve_term=reserve,
        pi_f=pi_f,
        pi_d=pi_d,
        remuneration=remuneration,
    )


def _active_set_signature(sol: SolutionWithDuals, tol: float = REGIME_TOL):
    lam_co = sol.lambda_co > tol
    lam_cc = (sol.lambda_cc > tol if sol.lambda_cc is not None
              else np.zeros(0, dtype=bool))
    alpha_rows = np.all(np.abs(sol.decision.alpha) <= tol, axis=1)
    return (tuple(lam_co), tuple(lam_cc), tuple(alpha_rows))


def envelope_check(network: Network, data: MultiDataset, gamma: float,
                   j: int, delta: float | None = None,
                   solver: str | None = None) -> EnvelopeCheck:
    """Compare the analytic sensitivity in eps_j against a finite difference.

    Central difference where eps_j - delta stays nonnegative, forward
    difference otherwise.  The check is flagged degenerate (and should not
    be asserted against) when eps_j sits on the offline threshold or when
    the two perturbed solves disagree on the active-set signature.
    """
    if not 0 <= j < data.dimension:
        raise InputError(f"feature index {j} out of range")
    eps = data.epsilons
    if delta is None:
        delta = 1e-5 * eps[j] if eps[j] > 0 else 1e-8
    if delta <= 0:
        raise InputError("delta must be > 0")

    base = solve_msdro_opf(network, data, gamma, solver=solver)
    _require_duals(base)
    analytic = float(base.lambda_co[j]
                     + base.duals.phi * (base.lambda_cc[j]
                                         if base.lambda_cc is not None else 0.0))
    threshold = offline_thresholds(base.built.data, base.built.support)[j]
    degenerate = abs(eps[j] - threshold) < DEGENERACY_BAND

    def solve_at(value: float) -> SolutionWithDuals:
        shifted = eps.copy()
        shifted[j] = value
        moved = MultiDataset(data.samples, shifted)
        out = solve_msdro_opf(network, moved, gamma, solver=solver)
        _require_duals(out)
        return out

    hi = solve_at(eps[j] + delta)
    if eps[j] - delta >= 0:
        lo = solve_at(eps[j] - delta)
        fd = (hi.objective - lo.objective) / (2 * delta)
    else:
        lo = base
        fd = (hi.objective - base.objective) / delta
    if _active_set_signature(hi) != _active_set_signature(lo):
        degenerate = True
    return EnvelopeCheck(finite_difference=float(fd), analytic=analytic,
                         degenerate=degenerate)


DATA_VALUE_COLUMNS = ["feature", "lambda_co", "lambda_cc", "phi",
                      "marginal_value", "threshold", "regime"]
FORECAST_VALUE_COLUMNS = ["feature", "lmp_term", "balancing_term",
                          "reserve_term", "pi_F", "pi_D", "remuneration"]


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def data_value_rows(report: DataValueReport) -> list:
    rows = []
    for j in range(report.dimension):
        rows.append([str(j), _fmt(report.lambda_co[j]), _fmt(report.lambda_cc[j]),
                     _fmt(report.phi), _fmt(report.marginal_value[j]),
                     _fmt(report.threshold[j]), report.regime[j]])
    return rows


def forecast_value_rows(report: ForecastValueReport) -> list:
    rows = []
    for j in range(report.dimension):
        rows.append([str(j), _fmt(report.lmp_term[j]), _fmt(report.balancing_term[j]),
                     _fmt(report.reserve_term[j]), _fmt(report.pi_f[j]),
                     _fmt(report.pi_d[j]), _fmt(report.remuneration[j])])
    return rows


def write_data_value_csv(path, report: DataValueReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATA_VALUE_COLUMNS)
        writer.writerows(data_value_rows(report))


def write_forecast_value_csv(path, report: ForecastValueReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FORECAST_VALUE_COLUMNS)
        writer.writerows(forecast_value_rows(report))
