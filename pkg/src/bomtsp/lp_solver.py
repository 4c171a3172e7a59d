"""Dense revised simplex for small and medium linear programs.

``solve_lp`` accepts a general LP (rows with ``<=``, ``=`` or ``>=``, finite or
infinite variable bounds) and returns primal values, row duals and a
duality-gap certificate. Row duals follow the sensitivity convention
``duals[i] = d(objective) / d(rhs[i])`` for both senses.

``RevisedSimplex`` is the bounded primal simplex core. It is exposed so that
column generation can add columns to a solved problem and re-optimize from
the current basis.

``method="highs"`` routes the problem to scipy's HiGHS dual simplex behind
the same result contract; the subtour cutting-plane loop uses it for speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from bomtsp.errors import LpError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

_RELATIONS = ("<=", "=", ">=")


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    relations: list[str]
    rhs: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        nvar = len(self.c)
        if sparse.issparse(self.A):
            self.A = self.A.tocsr().astype(float)
        else:
            self.A = np.asarray(self.A, dtype=float).reshape(-1, nvar)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.relations = list(self.relations)
        self.lower = np.zeros(nvar) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = (np.full(nvar, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float))
        m = self.A.shape[0]
        if self.A.shape[1] != nvar or len(self.rhs) != m or len(self.relations) != m:
            raise ValueError("inconsistent LP dimensions")
        if len(self.lower) != nvar or len(self.upper) != nvar:
            raise ValueError("bounds do not match the number of variables")
        if any(r not in _RELATIONS for r in self.relations):
            raise ValueError(f"relations must be among {_RELATIONS}")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        data = self.A.data if sparse.issparse(self.A) else self.A
        if not (np.isfinite(self.c).all() and np.isfinite(data).all()
                and np.isfinite(self.rhs).all()):
            raise ValueError("LP coefficients must be finite")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("invalid variable bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float | None = None
    reduced_costs: np.ndarray | None = None
    dual_objective: float | None = None
    iterations: int = 0

    @property
    def gap(self) -> float:
        if self.objective is None or self.dual_objective is None:
            return np.inf
        return abs(self.objective - self.dual_objective)


def solve_lp(p: LpProblem, tol_feas: float = 1e-7, tol_gap: float = 1e-7,
             method: str = "simplex", max_iter: int = 50_000) -> LpResult:
    """Solve ``p`` and certify optimal answers.

    Feasibility and gap tolerances are relative to ``max(1, |value|)``.
    A certificate failure on a result reported optimal raises ``LpError``.
    """
    if method == "simplex":
        res = _solve_simplex(p, max_iter)
    elif method == "highs":
        res = _solve_highs(p, max_iter)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if res.status == OPTIMAL:
        _certify(p, res, tol_feas, tol_gap)
    return res


def _certify(p: LpProblem, res: LpResult, tol_feas: float, tol_gap: float) -> None:
    x, y = res.x, res.duals
    ax = p.A @ x
    scale = 1.0 + np.abs(p.rhs)
    viol = np.zeros(len(p.rhs))
    for i, rel in enumerate(p.relations):
        if rel == "<=":
            viol[i] = max(0.0, ax[i] - p.rhs[i])
        elif rel == ">=":
            viol[i] = max(0.0, p.rhs[i] - ax[i])
        else:
            viol[i] = abs(ax[i] - p.rhs[i])
    bound_viol = np.maximum(p.lower - x, 0.0).max(initial=0.0) + \
        np.maximum(x - p.upper, 0.0).max(initial=0.0)
    if (viol / scale).max(initial=0.0) > tol_feas or bound_viol > tol_feas:
        raise LpError(f"primal infeasibility {max(viol.max(initial=0), bound_viol):.3g} "
                      f"exceeds tolerance")
    # minimisation view: dual objective y.b + sum of bound terms of reduced costs
    sgn = 1.0 if p.sense == "min" else -1.0
    c = sgn * p.c
    ymin = sgn * y
    d = c - p.A.T @ ymin
    dual = float(ymin @ p.rhs)
    dtol = tol_gap * (1.0 + np.abs(c))
    for j, dj in enumerate(d):
        if dj > dtol[j]:
            if not np.isfinite(p.lower[j]):
                raise LpError("dual infeasible reduced cost at a free lower bound")
            dual += dj * p.lower[j]
        elif dj < -dtol[j]:
            if not np.isfinite(p.upper[j]):
                raise LpError("dual infeasible reduced cost at a free upper bound")
            dual += dj * p.upper[j]
        else:
            # near-zero reduced cost: pair it with whichever bound x sits at
            b = p.lower[j] if np.isfinite(p.lower[j]) else p.upper[j]
            if np.isfinite(b):
                dual += dj * b
    for i, rel in enumerate(p.relations):
        if (rel == "<=" and ymin[i] > dtol.max(initial=tol_gap)) or \
                (rel == ">=" and ymin[i] < -dtol.max(initial=tol_gap)):
            raise LpError("row dual has the wrong sign")
    res.reduced_costs = sgn * d
    res.dual_objective = sgn * dual
    if res.gap > tol_gap * max(1.0, abs(res.objective)):
        raise LpError(f"duality gap {res.gap:.3g} exceeds tolerance")


# --------------------------------------------------------------- simplex ---


class RevisedSimplex:
    """Bounded primal revised simplex on ``min c.x, A x = b, 0 <= x <= u``.

    The basis inverse is kept dense and updated by eta transformations, with
    a fresh inverse every ``refactor`` pivots. Pricing is Dantzig's rule
    until the objective stalls for ``stall`` iterations, then Bland's rule.
    """

    def __init__(self, A, b, c, upper=None, basis=None, refactor: int = 64,
                 stall: int = 50, tol: float = 1e-9):
        self.A = np.array(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        m, nvar = self.A.shape
        self.u = np.full(nvar, np.inf) if upper is None else np.asarray(upper, dtype=float).copy()
        self.refactor_every = refactor
        self.stall_limit = stall
        self.tol = tol
        self.at_upper = np.zeros(nvar, dtype=bool)
        self.iterations = 0
        self.basis = np.array(basis if basis is not None else [], dtype=int)
        if len(self.basis) != m:
            raise ValueError("an initial basis of size m is required")
        self._refactor()

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def _refactor(self) -> None:
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self._since_refactor = 0
        self._recompute_xb()

    def _recompute_xb(self) -> None:
        nb_up = np.flatnonzero(self.at_upper)
        rhs = self.b - self.A[:, nb_up] @ self.u[nb_up] if len(nb_up) else self.b
        self.xb = self.Binv @ rhs

    def add_columns(self, cols: np.ndarray, costs: np.ndarray, upper=None) -> None:
        cols = np.asarray(cols, dtype=float).reshape(self.m, -1)
        k = cols.shape[1]
        self.A = np.hstack([self.A, cols])
        self.c = np.concatenate([self.c, np.asarray(costs, dtype=float)])
        up = np.full(k, np.inf) if upper is None else np.asarray(upper, dtype=float)
        self.u = np.concatenate([self.u, up])
        self.at_upper = np.concatenate([self.at_upper, np.zeros(k, dtype=bool)])

    @property
    def x(self) -> np.ndarray:
        x = np.where(self.at_upper, self.u, 0.0)
        x[self.basis] = self.xb
        return x

    @property
    def duals(self) -> np.ndarray:
        return self.c[self.basis] @ self.Binv

    @property
    def objective(self) -> float:
        return float(self.c @ self.x)

    def optimize(self, max_iter: int = 50_000, allowed: np.ndarray | None = None) -> str:
        """Run primal simplex from the current (feasible) basis."""
        tol = self.tol
        bland = False
        best_obj = self.objective
        stalled = 0
        in_basis = np.zeros(self.A.shape[1], dtype=bool)
        for _ in range(max_iter):
            in_basis[:] = False
            in_basis[self.basis] = True
            y = self.duals
            d = self.c - y @ self.A
            score = np.where(self.at_upper, d, -d)
            score[in_basis] = -np.inf
            if allowed is not None:
                score[~allowed] = -np.inf
            if bland:
                cand = np.flatnonzero(score > tol)
                j = int(cand[0]) if len(cand) else -1
            else:
                j = int(np.argmax(score))
                if score[j] <= tol:
                    j = -1
            if j < 0:
                # confirm optimality on a fresh factorization
                if self._since_refactor == 0:
                    return OPTIMAL
                self._refactor()
                continue
            status = self._pivot(j, bland)
            if status != "ok":
                return status
            self.iterations += 1
            obj = self.objective
            if obj < best_obj - tol * max(1.0, abs(best_obj)):
                best_obj, stalled, bland = obj, 0, False
            else:
                stalled += 1
                if stalled >= self.stall_limit:
                    bland = True
        return ITERATION_LIMIT

    def _pivot(self, j: int, bland: bool) -> str:
        tol = self.tol
        s = -1.0 if self.at_upper[j] else 1.0
        alpha = self.Binv @ self.A[:, j]
        a = s * alpha
        ub = self.u[self.basis]
        ratios = np.full(self.m, np.inf)
        piv_tol = max(1e-9, 1e-9 * np.abs(a).max(initial=0.0))
        pos = a > piv_tol
        neg = a < -piv_tol
        ratios[pos] = np.maximum(self.xb[pos], 0.0) / a[pos]
        fin = neg & np.isfinite(ub)
        ratios[fin] = np.maximum(ub[fin] - self.xb[fin], 0.0) / -a[fin]
        t_row = ratios.min(initial=np.inf)
        t_flip = self.u[j]
        if not np.isfinite(t_row) and not np.isfinite(t_flip):
            return UNBOUNDED
        if t_flip <= t_row:
            self.at_upper[j] = not self.at_upper[j]
            self.xb -= t_flip * a
            return "ok"
        ties = np.flatnonzero(ratios <= t_row + tol)
        if bland:
            # smallest basic index among ties, skipping numerically poor pivots
            big = np.abs(a[ties])
            ties = ties[big >= 1e-3 * big.max()]
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            r = int(ties[np.argmax(np.abs(a[ties]))])
        leaving = self.basis[r]
        leave_upper = bool(a[r] < 0)
        self.xb -= t_row * a
        self.xb[r] = (self.u[j] - t_row) if self.at_upper[j] else t_row
        self.at_upper[j] = False
        self.at_upper[leaving] = leave_upper and np.isfinite(self.u[leaving])
        self.basis[r] = j
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every or abs(piv) < 1e-5:
            self._refactor()
        return "ok"


def _standard_form(p: LpProblem):
    """Rewrite ``p`` as ``min c.x, A x = b >= 0, 0 <= x <= u``.

    Returns the arrays plus the bookkeeping to map solutions back.
    """
    A = p.A.toarray() if sparse.issparse(p.A) else p.A
    m, nvar = A.shape
    sgn = 1.0 if p.sense == "min" else -1.0
    cols, costs, ups = [], [], []
    back = []  # (original index, coefficient, offset)
    shift = np.zeros(nvar)
    for j in range(nvar):
        lo, hi = p.lower[j], p.upper[j]
        if np.isfinite(lo):
            shift[j] = lo
            back.append([(len(cols), 1.0)])
            cols.append(A[:, j]); costs.append(sgn * p.c[j]); ups.append(hi - lo)
        elif np.isfinite(hi):
            shift[j] = hi
            back.append([(len(cols), -1.0)])
            cols.append(-A[:, j]); costs.append(-sgn * p.c[j]); ups.append(np.inf)
        else:
            back.append([(len(cols), 1.0), (len(cols) + 1, -1.0)])
            cols += [A[:, j], -A[:, j]]
            costs += [sgn * p.c[j], -sgn * p.c[j]]
            ups += [np.inf, np.inf]
    b = p.rhs - A @ shift
    for i, rel in enumerate(p.relations):
        if rel == "=":
            continue
        e = np.zeros(m)
        e[i] = 1.0 if rel == "<=" else -1.0
        cols.append(e); costs.append(0.0); ups.append(np.inf)
    M = np.column_stack(cols) if cols else np.zeros((m, 0))
    flip = np.where(b < 0, -1.0, 1.0)
    M = M * flip[:, None]
    b = b * flip
    return M, b, np.array(costs), np.array(ups), flip, back, shift


def _solve_simplex(p: LpProblem, max_iter: int) -> LpResult:
    M, b, c, u, flip, back, shift = _standard_form(p)
    m, ncols = M.shape
    sgn = 1.0 if p.sense == "min" else -1.0
    if np.any(u < -1e-12):
        return LpResult(INFEASIBLE)
    u = np.maximum(u, 0.0)
    if m == 0:
        # no rows: every variable sits at its cheapest bound
        x = np.where(c < 0, u, 0.0)
        if np.any(np.isinf(x)):
            return LpResult(UNBOUNDED)
        return _finish(p, x, np.zeros(0), back, shift, flip, sgn, 0)
    # phase 1 with one artificial per row
    art = np.eye(m)
    A1 = np.hstack([M, art])
    c1 = np.concatenate([np.zeros(ncols), np.ones(m)])
    u1 = np.concatenate([u, np.full(m, np.inf)])
    core = RevisedSimplex(A1, b, c1, u1, basis=np.arange(ncols, ncols + m))
    st = core.optimize(max_iter)
    if st == ITERATION_LIMIT:
        return LpResult(ITERATION_LIMIT, iterations=core.iterations)
    if core.objective > 1e-9 * max(1.0, np.abs(b).max()):
        return LpResult(INFEASIBLE, iterations=core.iterations)
    # drive artificials out of the basis where possible
    for r in range(m):
        if core.basis[r] >= ncols:
            row = core.Binv[r] @ M
            nb = np.ones(ncols, dtype=bool)
            nb[core.basis[core.basis < ncols]] = False
            cand = np.flatnonzero(nb & (np.abs(row) > 1e-9) & ~core.at_upper[:ncols])
            if len(cand):
                j = int(cand[np.argmax(np.abs(row[cand]))])
                alpha = core.Binv @ A1[:, j]
                piv = alpha[r]
                rw = core.Binv[r] / piv
                core.Binv -= np.outer(alpha, rw)
                core.Binv[r] = rw
                core.basis[r] = j
    core._refactor()
    core.c = np.concatenate([c, np.zeros(m)])
    core.u[ncols:] = 0.0
    allowed = np.concatenate([np.ones(ncols, dtype=bool), np.zeros(m, dtype=bool)])
    st = core.optimize(max_iter - core.iterations, allowed=allowed)
    if st != OPTIMAL:
        return LpResult(st, iterations=core.iterations)
    core._refactor()
    x = core.x[:ncols]
    y = core.duals * flip
    return _finish(p, x, y, back, shift, flip, sgn, core.iterations)


def _finish(p, xs, y, back, shift, flip, sgn, iterations) -> LpResult:
    x = shift.copy()
    for j, parts in enumerate(back):
        for k, coef in parts:
            x[j] += coef * xs[k]
    x = np.clip(x, p.lower, p.upper)
    duals = sgn * y if len(y) else np.zeros(len(p.rhs))
    return LpResult(OPTIMAL, x=x, duals=duals, objective=float(p.c @ x),
                    iterations=iterations)


# ----------------------------------------------------------------- HiGHS ---


def _solve_highs(p: LpProblem, max_iter: int) -> LpResult:
    sgn = 1.0 if p.sense == "min" else -1.0
    rel = np.array(p.relations)
    A = p.A if sparse.issparse(p.A) else sparse.csr_matrix(p.A)
    eq = np.flatnonzero(rel == "=")
    le = np.flatnonzero(rel == "<=")
    ge = np.flatnonzero(rel == ">=")
    ub_rows = np.concatenate([le, ge])
    A_ub = sparse.vstack([A[le], -A[ge]]) if len(ub_rows) else None
    b_ub = np.concatenate([p.rhs[le], -p.rhs[ge]]) if len(ub_rows) else None
    bounds = np.column_stack([np.where(np.isfinite(p.lower), p.lower, -np.inf),
                              np.where(np.isfinite(p.upper), p.upper, np.inf)])
    kwargs = dict(A_ub=A_ub, b_ub=b_ub,
                  A_eq=A[eq] if len(eq) else None, b_eq=p.rhs[eq] if len(eq) else None,
                  bounds=[(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)
                          for lo, hi in bounds],
                  method="highs-ds")
    res = linprog(sgn * p.c, options={"maxiter": max_iter}, **kwargs)
    if res.status == 2:
        # presolve can report unbounded models as infeasible
        res = linprog(sgn * p.c, options={"maxiter": max_iter, "presolve": False}, **kwargs)
    its = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return LpResult(INFEASIBLE, iterations=its)
    if res.status == 3:
        return LpResult(UNBOUNDED, iterations=its)
    if res.status == 1:
        return LpResult(ITERATION_LIMIT, iterations=its)
    if res.status != 0:
        raise LpError(f"HiGHS failed: {res.message}")
    y = np.zeros(len(p.rhs))
    if len(eq):
        y[eq] = res.eqlin.marginals
    if len(ub_rows):
        marg = res.ineqlin.marginals
        y[le] = marg[:len(le)]
        y[ge] = -marg[len(le):]
    x = np.clip(res.x, p.lower, p.upper)
    return LpResult(OPTIMAL, x=x, duals=sgn * y, objective=float(p.c @ x), iterations=its)
