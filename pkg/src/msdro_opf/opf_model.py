"""Chance-constrained DC-OPF over the multi-source Wasserstein ambiguity set.

The model decides setpoints p, participation factors A (response to forecast
errors is p(xi) = p - A xi), reserve capacities r+/r- and remaining line
margins f_RAM+/f_RAM-. The objective carries the exact worst-case expected
reserve activation cost (separable reformulation, three cuts per feature and
sample). The joint chance constraint on reserves and line margins is
replaced by its CVaR inner approximation at level gamma, whose worst-case
expectation uses the standardized (shared sample index) reformulation with
one augmented all-zero row capturing the positive part.

Duals are extracted by constraint name. Sign convention: equality duals are
shadow prices d(objective)/d(rhs) with constraints oriented exactly as
documented on each row below; inequality duals are nonnegative KKT
multipliers. This is the convention under which the forecast-value
decomposition identities of the valuation module hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dro_core import BoxSupport, MultiDataset
from .errors import ExtractionError, InputError, ModeError
from .lp import EQ, GE, INFINITY, LE, LpSolution, Model
from .network import Network, build_joint_support, compute_flow_maps

#: Participation below this is treated as zero when picking re-run candidates.
PARTICIPATION_TOL = 1e-9


@dataclass(frozen=True)
class RiskLevel:
    """Joint chance constraint violation budget, 0 <= gamma < 1."""

    gamma: float

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise InputError(f"gamma must lie in [0, 1), got {self.gamma}")


@dataclass
class OpfDecision:
    p: np.ndarray
    alpha: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    f_ram_plus: np.ndarray
    f_ram_minus: np.ndarray


@dataclass
class DualValues:
    """Named duals of the complete model (see module docstring for signs)."""

    pi: float
    chi: np.ndarray
    sigma_up: np.ndarray
    sigma_lo: np.ndarray
    beta_up: np.ndarray
    beta_lo: np.ndarray
    phi: float
    eta: np.ndarray
    mu_up: np.ndarray
    mu_lo: np.ndarray
    rho_up: np.ndarray
    rho_lo: np.ndarray
    rho_av: np.ndarray


@dataclass
class OpfModel:
    """A built (not yet solved) instance plus the index bookkeeping."""

    model: Model
    network: Network
    data: MultiDataset
    support: BoxSupport
    gamma: float
    b_g: np.ndarray
    b_w: np.ndarray
    b_b: np.ndarray
    cc_rows: list
    fixed_zero_participation: frozenset
    idx: dict

    @property
    def num_cc_rows(self) -> int:
        """Rows inside the CVaR max, excluding the augmented zero row."""
        return len(self.cc_rows)


@dataclass
class SolutionWithDuals:
    status: str
    objective: float
    decision: OpfDecision | None
    lambda_co: np.ndarray | None
    lambda_cc: np.ndarray | None
    tau: float
    nu: float
    s_co: np.ndarray | None
    s_cc: np.ndarray | None
    s_aux: np.ndarray | None
    duals: DualValues | None
    built: OpfModel
    lp_solution: LpSolution | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def duality_gap(self) -> float:
        """Relative gap between primal objective and the dual bound."""
        if not self.optimal:
            raise ExtractionError(f"solution status is {self.status}")
        dual_obj = self.lp_solution.dual_objective()
        return abs(self.objective - dual_obj) / max(1.0, abs(self.objective))

    def activation_cost_block(self) -> float:
        """Worst-case expected activation cost term of the objective."""
        eps = self.built.data.epsilons
        n = self.s_co.shape[1] if self.s_co.size else 0
        value = float(eps @ self.lambda_co)
        if n:
            value += float(np.sum(self.s_co) / n)
        return value

    def cc_a_matrix(self) -> np.ndarray:
        """Row vectors a'_k at the optimal decision, augmented row last."""
        built = self.built
        d = built.data.dimension
        rows = np.zeros((len(built.cc_rows) + 1, d))
        bw_minus_bga = built.b_w - built.b_g @ self.decision.alpha
        for k, (kind, pos) in enumerate(built.cc_rows):
            if kind == "r+":
                rows[k] = -self.decision.alpha[pos]
            elif kind == "r-":
                rows[k] = self.decision.alpha[pos]
            elif kind == "f+":
                rows[k] = bw_minus_bga[pos]
            else:
                rows[k] = -bw_minus_bga[pos]
        return rows

    def cc_b_vector(self) -> np.ndarray:
        """Intercepts b_k at the optimal decision, augmented row last (0)."""
        built = self.built
        out = np.zeros(len(built.cc_rows) + 1)
        dec = self.decision
        source = {"r+": dec.r_plus, "r-": dec.r_minus,
                  "f+": dec.f_ram_plus, "f-": dec.f_ram_minus}
        for k, (kind, pos) in enumerate(built.cc_rows):
            out[k] = -source[kind][pos]
        return out


def _cc_row_layout(network: Network, skip_gens: frozenset) -> list:
    """Order of the joint-constraint rows: [-A; A; B_W - B_G A; -(...)].

    Generators with participation fixed to zero contribute no rows (their
    reserve constraints hold trivially and are left outside the CVaR).
    """
    rows = []
    rows += [("r+", g) for g in range(network.num_generators) if g not in skip_gens]
    rows += [("r-", g) for g in range(network.num_generators) if g not in skip_gens]
    rows += [("f+", l) for l in range(network.num_lines)]
    rows += [("f-", l) for l in range(network.num_lines)]
    return rows


def build_msdro_opf(network: Network, data: MultiDataset, gamma,
                    fixed_zero_participation=frozenset()) -> OpfModel:
    """Assemble the complete LP for one data-quality vector.

    Requires standardized data (one sample column per shared index).
    Features with epsilon_j = 0 bypass their multiplier machinery: lambda_j
    is fixed to zero and only the sample cuts remain, which recovers the
    plain sample average for that feature.
    """
    if isinstance(gamma, RiskLevel):
        gamma = gamma.gamma
    gamma = RiskLevel(float(gamma)).gamma
    if data.dimension != network.num_resources:
        raise InputError(
            f"dataset has {data.dimension} features, network has "
            f"{network.num_resources} uncertain resources"
        )
    if data.dimension and not data.is_standardized:
        raise ModeError("OPF model needs standardized data (equal sample counts)")
    support = build_joint_support(network)
    if data.dimension:
        data.validate_within(support)
    skip = frozenset(fixed_zero_participation)
    bad = [g for g in skip if not (0 <= g < network.num_generators)]
    if bad:
        raise InputError(f"unknown generator indices {bad}")

    b_g_map, b_w_map, b_b_map = compute_flow_maps(network)
    n_g = network.num_generators
    n_l = network.num_lines
    d = data.dimension
    n = int(data.counts[0]) if d else 0
    eps = data.epsilons
    xi_hat = data.matrix() if d else np.zeros((0, 0))
    xi_lo = support.lower
    xi_up = support.upper
    c_e = np.array([g.c_E for g in network.generators])
    c_r = np.array([g.c_R for g in network.generators])
    c_a = np.array([g.c_A for g in network.generators])
    d_vec = network.load_vector()
    u_vec = network.forecast_vector()
    f_max = np.array([ln.f_max for ln in network.lines])

    cc_rows = _cc_row_layout(network, skip)
    k_aug = len(cc_rows)  # index of the augmented all-zero row

    m = Model("msdro-opf")
    p = m.add_vars("p", n_g, obj=0.0)
    for g in range(n_g):
        m.obj[p[g]] = float(c_e[g])
    alpha = m.add_vars("alpha", (n_g, d))
    rp = m.add_vars("rp", n_g)
    rm = m.add_vars("rm", n_g)
    for g in range(n_g):
        m.obj[rp[g]] = float(c_r[g])
        m.obj[rm[g]] = float(c_r[g])
    framp = m.add_vars("framp", n_l)
    framm = m.add_vars("framm", n_l)
    lam_co = m.add_vars("lam_co", d)
    for j in range(d):
        m.obj[lam_co[j]] = float(eps[j])
    s_co = m.add_vars("s_co", (d, n), lb=-INFINITY, obj=(1.0 / n if n else 0.0))
    has_cc = d > 0
    if has_cc:
        tau = m.add_var("tau", lb=-INFINITY, ub=0.0)
        nu = m.add_var("nu", lb=-INFINITY)
        lam_cc = m.add_vars("lam_cc", d)
        s_cc = m.add_vars("s_cc", n, lb=-INFINITY)
        s_aux = m.add_vars("s_aux", (d, n, k_aug + 1), lb=-INFINITY)
    else:
        tau = nu = None
        lam_cc = s_cc = s_aux = np.zeros((0,), dtype=int)

    for g in skip:
        for j in range(d):
            m.fix_var(int(alpha[g, j]), 0.0)
        m.fix_var(int(rp[g]), 0.0)
        m.fix_var(int(rm[g]), 0.0)
    for j in range(d):
        if eps[j] == 0.0:
            m.fix_var(int(lam_co[j]), 0.0)
            if has_cc:
                m.fix_var(int(lam_cc[j]), 0.0)

    # (pi) energy balance: <1,p> = <1,d> - <1,u>
    m.add_constr("bal", [(int(p[g]), 1.0) for g in range(n_g)], EQ,
                 float(np.sum(d_vec) - np.sum(u_vec)))
    # (chi_j) participation balance: column sums of A are one
    for j in range(d):
        m.add_constr(f"chi[{j}]", [(int(alpha[g, j]), 1.0) for g in range(n_g)],
                     EQ, 1.0)
    # (sigma) generator limits
    for g in range(n_g):
        m.add_constr(f"gmax[{g}]", [(int(p[g]), 1.0), (int(rp[g]), 1.0)],
                     LE, float(network.generators[g].p_max))
        m.add_constr(f"gmin[{g}]", [(int(p[g]), 1.0), (int(rm[g]), -1.0)],
                     GE, float(network.generators[g].p_min))
    # (beta) line margins: B_G p + f_RAM+ = f_max - B_W u + B_B d (and mirror)
    flow_const = b_w_map @ u_vec - b_b_map @ d_vec if d else -(b_b_map @ d_vec)
    for l in range(n_l):
        terms = [(int(p[g]), float(b_g_map[l, g])) for g in range(n_g)]
        m.add_constr(f"lineup[{l}]", terms + [(int(framp[l]), 1.0)], EQ,
                     float(f_max[l] - flow_const[l]))
        terms = [(int(p[g]), -float(b_g_map[l, g])) for g in range(n_g)]
        m.add_constr(f"linelo[{l}]", terms + [(int(framm[l]), 1.0)], EQ,
                     float(f_max[l] + flow_const[l]))

    # (mu) worst-case expected activation cost cuts, three per (j, i).
    # Cost coefficient of feature j is -sum_g c_A_g alpha_gj (a variable).
    for j in range(d):
        for i in range(n):
            base = [(int(s_co[j, i]), 1.0)]
            if eps[j] > 0.0:
                # s >= -sum c_A alpha xi_up - lam (xi_up - xi_hat)
                terms = base + [(int(alpha[g, j]), float(c_a[g] * xi_up[j]))
                                for g in range(n_g)]
                terms += [(int(lam_co[j]), float(xi_up[j] - xi_hat[j, i]))]
                m.add_constr(f"co_up[{j},{i}]", terms, GE, 0.0)
                # s >= -sum c_A alpha xi_lo + lam (xi_lo - xi_hat)
                terms = base + [(int(alpha[g, j]), float(c_a[g] * xi_lo[j]))
                                for g in range(n_g)]
                terms += [(int(lam_co[j]), float(-(xi_lo[j] - xi_hat[j, i])))]
                m.add_constr(f"co_lo[{j},{i}]", terms, GE, 0.0)
            # s >= -sum c_A alpha xi_hat
            terms = base + [(int(alpha[g, j]), float(c_a[g] * xi_hat[j, i]))
                            for g in range(n_g)]
            m.add_constr(f"co_av[{j},{i}]", terms, GE, 0.0)

    if has_cc:
        # CVaR scaffolding: tau + nu <= 0 and the budget row carrying (phi).
        m.add_constr("cvar_pair", [(tau, 1.0), (nu, 1.0)], LE, 0.0)
        budget = [(int(lam_cc[j]), float(eps[j])) for j in range(d)]
        budget += [(int(s_cc[i]), 1.0 / n) for i in range(n)]
        budget += [(nu, -gamma)]
        m.add_constr("cvar_budget", budget, LE, 0.0)

        # Row k coefficient expressions a'_kj as (constant, [(var, coef)]).
        def a_expr(kind: str, pos: int, j: int):
            if kind == "r+":
                return 0.0, [(int(alpha[pos, j]), -1.0)]
            if kind == "r-":
                return 0.0, [(int(alpha[pos, j]), 1.0)]
            if kind == "f+":
                return float(b_w_map[pos, j]), [
                    (int(alpha[g, j]), -float(b_g_map[pos, g])) for g in range(n_g)]
            return -float(b_w_map[pos, j]), [
                (int(alpha[g, j]), float(b_g_map[pos, g])) for g in range(n_g)]

        b_var = {"r+": rp, "r-": rm, "f+": framp, "f-": framm}
        # (eta) s_cc_i >= b'_k + sum_j s_aux_jik, with b'_k = b_k - tau for
        # the physical rows and b'_{K+1} = 0 for the augmented row.
        for i in range(n):
            for k, (kind, pos) in enumerate(cc_rows):
                terms = [(int(s_cc[i]), 1.0), (int(b_var[kind][pos]), 1.0),
                         (tau, 1.0)]
                terms += [(int(s_aux[j, i, k]), -1.0) for j in range(d)]
                m.add_constr(f"cc_main[{i},{k}]", terms, GE, 0.0)
            terms = [(int(s_cc[i]), 1.0)]
            terms += [(int(s_aux[j, i, k_aug]), -1.0) for j in range(d)]
            m.add_constr(f"cc_main[{i},{k_aug}]", terms, GE, 0.0)

        # (rho) per-coordinate cuts on s_aux for every row including the
        # augmented one (whose coefficients are all zero).
        for j in range(d):
            for i in range(n):
                for k in range(k_aug + 1):
                    if k < k_aug:
                        const, expr = a_expr(*cc_rows[k], j)
                    else:
                        const, expr = 0.0, []
                    base = [(int(s_aux[j, i, k]), 1.0)]
                    if eps[j] > 0.0:
                        terms = base + [(v, -c * xi_up[j]) for v, c in expr]
                        terms += [(int(lam_cc[j]),
                                   float(xi_up[j] - xi_hat[j, i]))]
                        m.add_constr(f"cc_up[{j},{i},{k}]", terms, GE,
                                     const * xi_up[j])
                        terms = base + [(v, -c * xi_lo[j]) for v, c in expr]
                        terms += [(int(lam_cc[j]),
                                   float(-(xi_lo[j] - xi_hat[j, i])))]
                        m.add_constr(f"cc_lo[{j},{i},{k}]", terms, GE,
                                     const * xi_lo[j])
                    terms = base + [(v, -c * xi_hat[j, i]) for v, c in expr]
                    m.add_constr(f"cc_av[{j},{i},{k}]", terms, GE,
                                 const * xi_hat[j, i])

    idx = {"p": p, "alpha": alpha, "rp": rp, "rm": rm, "framp": framp,
           "framm": framm, "lam_co": lam_co, "s_co": s_co, "tau": tau,
           "nu": nu, "lam_cc": lam_cc, "s_cc": s_cc, "s_aux": s_aux}
    return OpfModel(model=m, network=network, data=data, support=support,
                    gamma=gamma, b_g=b_g_map, b_w=b_w_map, b_b=b_b_map,
                    cc_rows=cc_rows, fixed_zero_participation=skip, idx=idx)


def solve(built: OpfModel, solver: str | None = None) -> SolutionWithDuals:
    """Solve a built model and extract primal values and named duals."""
    sol = built.model.solve(solver)
    if not sol.optimal:
        return SolutionWithDuals(
            status=sol.status, objective=float("nan"), decision=None,
            lambda_co=None, lambda_cc=None, tau=float("nan"), nu=float("nan"),
            s_co=None, s_cc=None, s_aux=None, duals=None, built=built,
            lp_solution=sol,
        )

    idx = built.idx
    network = built.network
    d = built.data.dimension
    n = int(built.data.counts[0]) if d else 0
    k_aug = len(built.cc_rows)
    n_g = network.num_generators
    n_l = network.num_lines

    decision = OpfDecision(
        p=np.asarray(sol.value(idx["p"]), dtype=float),
        alpha=np.asarray(sol.value(idx["alpha"]), dtype=float).reshape(n_g, d),
        r_plus=np.asarray(sol.value(idx["rp"]), dtype=float),
        r_minus=np.asarray(sol.value(idx["rm"]), dtype=float),
        f_ram_plus=np.asarray(sol.value(idx["framp"]), dtype=float),
        f_ram_minus=np.asarray(sol.value(idx["framm"]), dtype=float),
    )

    mu_up = np.zeros((d, n))
    mu_lo = np.zeros((d, n))
    rho_up = np.zeros((d, n, k_aug + 1))
    rho_lo = np.zeros((d, n, k_aug + 1))
    rho_av = np.zeros((d, n, k_aug + 1))
    eta = np.zeros((n, k_aug + 1))
    for j in range(d):
        for i in range(n):
            if built.data.epsilons[j] > 0.0:
                mu_up[j, i] = sol.multiplier(f"co_up[{j},{i}]")
                mu_lo[j, i] = sol.multiplier(f"co_lo[{j},{i}]")
            for k in range(k_aug + 1):
                if built.data.epsilons[j] > 0.0:
                    rho_up[j, i, k] = sol.multiplier(f"cc_up[{j},{i},{k}]")
                    rho_lo[j, i, k] = sol.multiplier(f"cc_lo[{j},{i},{k}]")
                rho_av[j, i, k] = sol.multiplier(f"cc_av[{j},{i},{k}]")
    for i in range(n):
        for k in range(k_aug + 1):
            eta[i, k] = sol.multiplier(f"cc_main[{i},{k}]")

    duals = DualValues(
        pi=sol.dual("bal"),
        chi=np.array([sol.dual(f"chi[{j}]") for j in range(d)]),
        sigma_up=np.array([sol.multiplier(f"gmax[{g}]") for g in range(n_g)]),
        sigma_lo=np.array([sol.multiplier(f"gmin[{g}]") for g in range(n_g)]),
        beta_up=np.array([sol.dual(f"lineup[{l}]") for l in range(n_l)]),
        beta_lo=np.array([sol.dual(f"linelo[{l}]") for l in range(n_l)]),
        phi=sol.multiplier("cvar_budget") if d else 0.0,
        eta=eta, mu_up=mu_up, mu_lo=mu_lo,
        rho_up=rho_up, rho_lo=rho_lo, rho_av=rho_av,
    )

    return SolutionWithDuals(
        status="optimal",
        objective=float(sol.objective),
        decision=decision,
        lambda_co=np.asarray(sol.value(idx["lam_co"]), dtype=float) if d else np.zeros(0),
        lambda_cc=np.asarray(sol.value(idx["lam_cc"]), dtype=float) if d else np.zeros(0),
        tau=float(sol.value(idx["tau"])) if d else 0.0,
        nu=float(sol.value(idx["nu"])) if d else 0.0,
        s_co=np.asarray(sol.value(idx["s_co"]), dtype=float).reshape(d, n),
        s_cc=np.asarray(sol.value(idx["s_cc"]), dtype=float) if d else np.zeros(0),
        s_aux=(np.asarray(sol.value(idx["s_aux"]), dtype=float)
               .reshape(d, n, k_aug + 1) if d else np.zeros((0, 0, 0))),
        duals=duals,
        built=built,
        lp_solution=sol,
    )


def solve_msdro_opf(network: Network, data: MultiDataset, gamma,
                    solver: str | None = None,
                    fixed_zero_participation=frozenset()) -> SolutionWithDuals:
    """Build and solve in one step."""
    built = build_msdro_opf(network, data, gamma,
                            fixed_zero_participation=fixed_zero_participation)
    return solve(built, solver=solver)


def idle_balancers(sol: SolutionWithDuals,
                   tol: float = PARTICIPATION_TOL) -> frozenset:
    """Generators whose participation row is numerically zero."""
    if not sol.optimal:
        raise ExtractionError(f"solution status is {sol.status}")
    alpha = sol.decision.alpha
    if alpha.size == 0:
        return frozenset()
    return frozenset(int(g) for g in range(alpha.shape[0])
                     if np.all(np.abs(alpha[g]) <= tol))


def cvar_tightening_rerun(network: Network, data: MultiDataset, gamma,
                          first: SolutionWithDuals,
                          solver: str | None = None) -> SolutionWithDuals:
    """Re-solve with non-participating generators pinned out of the CVaR.

    Generators with an all-zero participation row never activate, so their
    reserve rows inside the CVaR max only slacken the approximation. The
    re-run fixes r+ = r- = 0 for those generators and drops their two rows
    from the joint constraint. Returns the first solution unchanged when
    there is nothing to pin.
    """
    if not first.optimal:
        raise ExtractionError(f"first solve ended {first.status}")
    idle = idle_balancers(first)
    already = first.built.fixed_zero_participation
    target = frozenset(idle | already)
    if not target or target == already:
        return first
    return solve_msdro_opf(network, data, gamma, solver=solver,
                           fixed_zero_participation=target)
