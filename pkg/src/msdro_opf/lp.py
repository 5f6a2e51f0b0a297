"""Solver-neutral linear program representation with named constraints and duals.

Models are built once (variables, named linear constraints, objective) and
handed to a backend adapter for solving. Adapters must return primal values
and one dual value per constraint. The backend is selected through the
``MSDRO_SOLVER`` environment variable (default ``highs``) or per call.

Dual sign convention
--------------------
For every constraint the reported dual is the sensitivity of the optimal
objective to the constraint's right-hand side, d(objective)/d(rhs), for a
minimization problem. Consequences:

* equality rows carry a free sign (shadow price of the rhs),
* ``<=`` rows have dual <= 0 (relaxing the rhs cannot increase the optimum),
* ``>=`` rows have dual >= 0.

The classical nonnegative KKT multiplier of an inequality is therefore
``-dual`` for ``<=`` rows and ``+dual`` for ``>=`` rows.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

INFINITY = float("inf")

LE = "<="
GE = ">="
EQ = "=="

_SENSES = (LE, GE, EQ)


class LpError(Exception):
    """Base class for LP layer failures."""


class SolverError(LpError):
    """The backend failed to produce a usable answer."""


class UnknownSolverError(LpError):
    """Requested backend name is not registered."""


@dataclass
class _Constraint:
    name: str
    cols: np.ndarray
    vals: np.ndarray
    sense: str
    rhs: float


@dataclass
class LpSolution:
    """Primal and dual values of a solved model, accessed by name."""

    status: str
    objective: float
    x: np.ndarray
    duals: np.ndarray
    model: "Model"

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, index):
        """Primal value(s) for a column index or an array of indices."""
        return self.x[index]

    def dual(self, name: str) -> float:
        """Dual of a named constraint, in the d(objective)/d(rhs) convention."""
        try:
            return float(self.duals[self.model.constraint_index[name]])
        except KeyError:
            raise KeyError(f"no constraint named {name!r}") from None

    def multiplier(self, name: str) -> float:
        """Nonnegative KKT multiplier of a named inequality constraint."""
        row = self.model.constraint_index[name]
        sense = self.model.constraints[row].sense
        if sense == EQ:
            raise ValueError(f"constraint {name!r} is an equality; use dual()")
        d = float(self.duals[row])
        return -d if sense == LE else d

    def dual_objective(self) -> float:
        """Objective value recomputed from duals and reduced costs.

        Skips bound terms at infinite bounds (their multipliers are zero but
        0 * inf is nan). Used for strong-duality checks.
        """
        m = self.model
        total = sum(
            float(self.duals[i]) * c.rhs for i, c in enumerate(m.constraints)
        )
        # Bound contributions: reduced cost = obj coefficient minus dual row.
        a_t = m._matrix().T.tocsr()
        red = np.asarray(m.obj) - a_t @ self.duals
        lb = np.asarray(m.lb)
        ub = np.asarray(m.ub)
        at_lb = np.isfinite(lb) & (red > 0)
        at_ub = np.isfinite(ub) & (red < 0)
        total += float(np.sum(red[at_lb] * lb[at_lb]))
        total += float(np.sum(red[at_ub] * ub[at_ub]))
        return total


class Model:
    """A linear program: min c'x s.t. named linear constraints and bounds."""

    def __init__(self, name: str = "lp"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[float] = []
        self.constraints: list[_Constraint] = []
        self.constraint_index: dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INFINITY,
                obj: float = 0.0) -> int:
        """Add one variable and return its column index."""
        self.var_names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.obj.append(obj)
        return len(self.var_names) - 1

    def add_vars(self, name: str, shape, lb: float = 0.0, ub: float = INFINITY,
                 obj: float = 0.0) -> np.ndarray:
        """Add an array of variables named ``name[i,j,...]``; returns indices."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        idx = np.empty(shape, dtype=int)
        for pos in np.ndindex(shape):
            label = name + "[" + ",".join(str(p) for p in pos) + "]"
            idx[pos] = self.add_var(label, lb=lb, ub=ub, obj=obj)
        return idx

    def add_constr(self, name: str, terms, sense: str, rhs: float) -> int:
        """Add constraint ``sum(coef * var) sense rhs``.

        ``terms`` is an iterable of (column index, coefficient) pairs;
        repeated columns are accumulated.
        """
        if sense not in _SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        if name in self.constraint_index:
            raise ValueError(f"duplicate constraint name {name!r}")
        cols = []
        vals = []
        for col, coef in terms:
            if coef != 0.0:
                cols.append(col)
                vals.append(coef)
        self.constraints.append(_Constraint(
            name=name,
            cols=np.asarray(cols, dtype=int),
            vals=np.asarray(vals, dtype=float),
            sense=sense,
            rhs=float(rhs),
        ))
        row = len(self.constraints) - 1
        self.constraint_index[name] = row
        return row

    def set_objective(self, terms) -> None:
        """Replace objective coefficients with (column, coefficient) pairs."""
        obj = [0.0] * self.num_vars
        for col, coef in terms:
            obj[col] += coef
        self.obj = obj

    def fix_var(self, index: int, value: float) -> None:
        self.lb[index] = value
        self.ub[index] = value

    def _matrix(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for i, c in enumerate(self.constraints):
            rows.extend([i] * len(c.cols))
            cols.extend(c.cols.tolist())
            vals.extend(c.vals.tolist())
        return sp.csr_matrix(
            (vals, (rows, cols)),
            shape=(self.num_constraints, self.num_vars),
        )

    def lp_text(self) -> str:
        """Plain-text listing of the model for debugging."""
        lines = [f"\\ model {self.name}", "minimize"]
        obj_terms = [
            f"{c:+g} {self.var_names[i]}"
            for i, c in enumerate(self.obj) if c != 0.0
        ]
        lines.append("  " + (" ".join(obj_terms) if obj_terms else "0"))
        lines.append("subject to")
        for c in self.constraints:
            terms = " ".join(
                f"{v:+g} {self.var_names[i]}" for i, v in zip(c.cols, c.vals)
            )
            lines.append(f"  {c.name}: {terms or '0'} {c.sense} {c.rhs:g}")
        lines.append("bounds")
        for i, vname in enumerate(self.var_names):
            lines.append(f"  {self.lb[i]:g} <= {vname} <= {self.ub[i]:g}")
        return "\n".join(lines) + "\n"

    def solve(self, solver: str | None = None) -> LpSolution:
        """Solve with the named backend (default from MSDRO_SOLVER or highs)."""
        if solver is None:
            solver = os.environ.get("MSDRO_SOLVER", "highs")
        try:
            backend = _SOLVERS[solver]
        except KeyError:
            known = ", ".join(sorted(_SOLVERS))
            raise UnknownSolverError(
                f"unknown LP backend {solver!r} (available: {known})"
            ) from None
        return backend(self)


def _solve_scipy_highs(model: Model) -> LpSolution:
    """Adapter running a Model through scipy's HiGHS interface."""
    a = model._matrix()
    senses = np.array([c.sense for c in model.constraints])
    rhs = np.array([c.rhs for c in model.constraints], dtype=float)

    eq_mask = senses == EQ
    le_mask = senses == LE
    ge_mask = senses == GE

    a_eq = a[eq_mask] if eq_mask.any() else None
    b_eq = rhs[eq_mask] if eq_mask.any() else None
    # >= rows are negated into <= form; their duals flip sign back below.
    ub_parts = []
    ub_rhs = []
    if le_mask.any():
        ub_parts.append(a[le_mask])
        ub_rhs.append(rhs[le_mask])
    if ge_mask.any():
        ub_parts.append(-a[ge_mask])
        ub_rhs.append(-rhs[ge_mask])
    a_ub = sp.vstack(ub_parts) if ub_parts else None
    b_ub = np.concatenate(ub_rhs) if ub_rhs else None

    bounds = list(zip(model.lb, model.ub))
    res = linprog(
        c=np.asarray(model.obj, dtype=float),
        A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
        bounds=bounds, method="highs",
    )

    if res.status == 2:
        status = "infeasible"
    elif res.status == 3:
        status = "unbounded"
    elif res.status == 0:
        status = "optimal"
    else:
        raise SolverError(f"highs failed: {res.message}")

    n_rows = model.num_constraints
    duals = np.zeros(n_rows)
    x = np.zeros(model.num_vars)
    objective = float("nan")
    if status == "optimal":
        x = np.asarray(res.x, dtype=float)
        objective = float(res.fun)
        if eq_mask.any():
            duals[np.flatnonzero(eq_mask)] = res.eqlin.marginals
        if a_ub is not None:
            marg = np.asarray(res.ineqlin.marginals, dtype=float)
            pos = 0
            if le_mask.any():
                k = int(le_mask.sum())
                duals[np.flatnonzero(le_mask)] = marg[pos:pos + k]
                pos += k
            if ge_mask.any():
                k = int(ge_mask.sum())
                duals[np.flatnonzero(ge_mask)] = -marg[pos:pos + k]
    return LpSolution(status=status, objective=objective, x=x, duals=duals,
                      model=model)


_SOLVERS = {"highs": _solve_scipy_highs}


def register_solver(name: str, adapter) -> None:
    """Register a backend adapter: a callable Model -> LpSolution."""
    _SOLVERS[name] = adapter


def available_solvers() -> list[str]:
    return sorted(_SOLVERS)
