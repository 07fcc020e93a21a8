"""Dense LP solving with dual extraction, and a binary branch-and-bound on top.

The simplex is a two-phase dense-tableau implementation.  Entering columns
are picked by the most-negative reduced cost; after a run of degenerate
pivots the rule permanently switches to Bland's rule, which guarantees
termination.  Problem sizes here are small (hundreds of rows/columns), so
no factorization or warm starting is attempted.

Dual convention: inequality duals are reported for the constraint rewritten
in its sense-natural orientation (``>=`` for minimization, ``<=`` for
maximization) and are therefore nonnegative; equality duals are the
problem-sense shadow prices d(objective)/d(rhs).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["LpError", "LpProblem", "LpSolution", "solve_lp", "solve_binary_ilp"]

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
GAP_TOL = 1e-6


class LpError(ValueError):
    """Ill-formed problem data or a solver breakdown."""


@dataclass
class LpProblem:
    """min/max ``c @ x`` subject to ``A x (<=,=,>=) b`` and ``lb <= x <= ub``.

    Bounds default to ``[0, +inf)``.  All data must be finite except upper
    bounds, which may be ``+inf`` (and lower bounds ``-inf``).
    """

    sense: str
    c: np.ndarray
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = self.c.shape[0]
        if self.A.size == 0:
            self.A = self.A.reshape((len(self.b), n))
        if self.lb is None:
            self.lb = np.zeros(n)
        else:
            self.lb = np.asarray(self.lb, dtype=float)
        if self.ub is None:
            self.ub = np.full(n, np.inf)
        else:
            self.ub = np.asarray(self.ub, dtype=float)
        if self.sense not in ("min", "max"):
            raise LpError(f"unknown sense {self.sense!r}")
        m = self.A.shape[0]
        if self.A.shape != (m, n) or self.b.shape != (m,) or len(self.senses) != m:
            raise LpError(
                f"dimension mismatch: c has {n} entries, A is {self.A.shape}, "
                f"b has {self.b.shape[0]}, senses has {len(self.senses)}"
            )
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise LpError("bound vectors must match the variable count")
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise LpError(f"unknown row sense {s!r}")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float | None = None
    dual_objective: float | None = None
    iterations: int = 0


def _pivot(T: np.ndarray, b: np.ndarray, i: int, j: int) -> None:
    piv = T[i, j]
    T[i] /= piv
    b[i] /= piv
    col = T[:, j].copy()
    col[i] = 0.0
    T -= np.outer(col, T[i])
    b -= col * b[i]
    T[:, j] = 0.0
    T[i, j] = 1.0


def _run_simplex(T, b, cost, basis, banned, max_iter):
    """Primal simplex from a feasible basis.  Returns (status, iterations)."""
    m, n_cols = T.shape
    allowed = np.ones(n_cols, dtype=bool)
    allowed[list(banned)] = False
    # Entering tolerance scales with the costs so accumulated roundoff in the
    # tableau cannot masquerade as an improving column.
    enter_tol = PIVOT_TOL * (1.0 + float(np.abs(cost).max(initial=0.0)))
    # Degenerate pivots are routine; Bland's rule engages only after a stretch
    # long enough to indicate genuine cycling, since its lowest-index entering
    # tends to select numerically poor pivots.
    bland_after = 3 * (m + n_cols) + 200
    bland = False
    stall = 0
    last_obj = np.inf
    for it in range(max_iter):
        red = cost - cost[basis] @ T
        red[~allowed] = 0.0
        if bland:
            cands = np.nonzero(red < -enter_tol)[0]
            if len(cands) == 0:
                return "optimal", it
            j = int(cands[0])
        else:
            j = int(np.argmin(red))
            if red[j] >= -enter_tol:
                return "optimal", it
        col = T[:, j]
        pos = col > PIVOT_TOL
        if not np.any(pos):
            return "unbounded", it
        rows = np.nonzero(pos)[0]
        ratios = b[rows] / col[rows]
        rmin = ratios.min()
        ties = rows[ratios <= rmin + 1e-9 * (1.0 + abs(rmin))]
        if bland:
            # Smallest basic index, preferring rows with a safe pivot size.
            safe = ties[col[ties] > 1e-7]
            pick = safe if len(safe) else ties
            i = int(pick[np.argmin(basis[pick])])
        else:
            # Largest pivot element keeps the tableau well-scaled.
            i = int(ties[np.argmax(col[ties])])
        _pivot(T, b, i, j)
        basis[i] = j
        obj = float(cost[basis] @ b)
        if obj > last_obj - 1e-12:
            stall += 1
            if stall > bland_after:
                bland = True
        else:
            stall = 0
        last_obj = obj
    raise LpError("simplex iteration limit exceeded")


def solve_lp(problem: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Solve an LP; on ``optimal`` the solution carries primal values, one
    dual per original constraint, and the dual objective value."""
    n = problem.n_vars
    m = problem.n_rows
    minimizing = problem.sense == "min"
    c_int = problem.c if minimizing else -problem.c

    # Variable transform to x' >= 0.  Each original variable becomes
    # offset + sum(sign * column); two columns for a fully free variable.
    col_of: list[list[tuple[int, float]]] = []
    offsets = np.zeros(n)
    cols: list[np.ndarray] = []
    costs: list[float] = []
    bound_rows: list[tuple[int, float]] = []  # (structural column, rhs)
    for j in range(n):
        lo, hi = problem.lb[j], problem.ub[j]
        if lo > hi + 1e-12:
            return LpSolution(status="infeasible")
        if np.isfinite(lo):
            offsets[j] = lo
            k = len(cols)
            cols.append(problem.A[:, j].copy())
            costs.append(float(c_int[j]))
            col_of.append([(k, 1.0)])
            if np.isfinite(hi):
                bound_rows.append((k, hi - lo))
        elif np.isfinite(hi):
            offsets[j] = hi
            k = len(cols)
            cols.append(-problem.A[:, j])
            costs.append(float(-c_int[j]))
            col_of.append([(k, -1.0)])
        else:
            k = len(cols)
            cols.append(problem.A[:, j].copy())
            costs.append(float(c_int[j]))
            cols.append(-problem.A[:, j])
            costs.append(float(-c_int[j]))
            col_of.append([(k, 1.0), (k + 1, -1.0)])
    n_struct = len(cols)
    shift_const = float(c_int @ offsets)

    n_rows = m + len(bound_rows)
    A_std = np.zeros((n_rows, n_struct))
    if n_struct:
        A_std[:m] = np.column_stack(cols) if cols else np.zeros((m, 0))
    b_std = problem.b - problem.A @ offsets
    b_std = np.concatenate([b_std, [rhs for _, rhs in bound_rows]])
    senses_std = list(problem.senses) + ["<="] * len(bound_rows)
    for i, (k, _) in enumerate(bound_rows):
        A_std[m + i, k] = 1.0

    if n_rows == 0:
        # Only the nonnegativity cone: optimum at zero unless a cost is negative.
        if np.any(np.asarray(costs) < -PIVOT_TOL):
            return LpSolution(status="unbounded")
        x = offsets.copy()
        obj = float(problem.c @ x)
        return LpSolution(status="optimal", x=x, duals=np.zeros(0), objective=obj, dual_objective=obj)

    # Slack columns, row flips to make b >= 0, then artificials where the
    # flipped row lacks a +1 slack.
    slack_col = np.full(n_rows, -1, dtype=int)
    columns = [A_std]
    next_col = n_struct
    for i, s in enumerate(senses_std):
        if s != "=":
            e = np.zeros((n_rows, 1))
            e[i, 0] = 1.0 if s == "<=" else -1.0
            columns.append(e)
            slack_col[i] = next_col
            next_col += 1
    flipped = b_std < 0
    T_base = np.hstack(columns)
    T_base[flipped] *= -1.0
    b_work = np.abs(b_std)

    basis = np.full(n_rows, -1, dtype=int)
    art_cols: list[int] = []
    art_data = []
    for i in range(n_rows):
        s = senses_std[i]
        natural = (s == "<=" and not flipped[i]) or (s == ">=" and flipped[i])
        if natural:
            basis[i] = slack_col[i]
        else:
            e = np.zeros((n_rows, 1))
            e[i, 0] = 1.0
            art_data.append(e)
            art_cols.append(next_col)
            basis[i] = next_col
            next_col += 1
    if art_data:
        T = np.hstack([T_base] + art_data)
    else:
        T = T_base
    n_total = T.shape[1]
    art_set = set(art_cols)

    limit = max_iter if max_iter is not None else 2000 + 60 * (n_rows + n_total)
    iters = 0
    if art_cols:
        cost1 = np.zeros(n_total)
        cost1[art_cols] = 1.0
        status, it1 = _run_simplex(T, b_work, cost1, basis, set(), limit)
        iters += it1
        if status != "optimal" or float(cost1[basis] @ b_work) > FEAS_TOL:
            return LpSolution(status="infeasible", iterations=iters)
        # Drive remaining artificials out of the basis where possible.
        for i in range(n_rows):
            if basis[i] in art_set:
                row = T[i, :n_struct + (n_total - n_struct - len(art_cols))]
                cands = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                if len(cands):
                    _pivot(T, b_work, i, int(cands[0]))
                    basis[i] = int(cands[0])

    cost2 = np.zeros(n_total)
    cost2[:n_struct] = costs
    status, it2 = _run_simplex(T, b_work, cost2, basis, art_set, limit)
    iters += it2
    if status == "unbounded":
        return LpSolution(status="unbounded", iterations=iters)

    x_struct = np.zeros(n_total)
    x_struct[basis] = b_work
    x = offsets.copy()
    for j in range(n):
        for k, sign in col_of[j]:
            x[j] += sign * x_struct[k]

    red = cost2 - cost2[basis] @ T
    y_std = np.zeros(n_rows)
    # Identity-origin columns: the +1 slack where natural, else the artificial.
    art_iter = iter(art_cols)
    for i in range(n_rows):
        s = senses_std[i]
        natural = (s == "<=" and not flipped[i]) or (s == ">=" and flipped[i])
        ident = slack_col[i] if natural else next(art_iter)
        y_eq = -red[ident]
        y_std[i] = -y_eq if flipped[i] else y_eq

    dual_obj_int = float(y_std @ b_std) + shift_const
    obj = float(problem.c @ x)

    sigma = np.ones(m)
    for i, s in enumerate(problem.senses):
        if minimizing:
            sigma[i] = -1.0 if s == "<=" else 1.0
        else:
            sigma[i] = 1.0 if s == ">=" else -1.0
    duals = sigma * y_std[:m]

    return LpSolution(
        status="optimal",
        x=x,
        duals=duals,
        objective=obj,
        dual_objective=dual_obj_int if minimizing else -dual_obj_int,
        iterations=iters,
    )


def _fractional(x, binary_vars):
    """Binary variable most in need of branching (not within 1e-6 of 0 or 1),
    or None."""
    worst = None
    worst_gap = 1e-6
    for j in binary_vars:
        gap = abs(x[j] - round(x[j]))
        if round(x[j]) not in (0, 1):
            gap = max(gap, abs(x[j]), abs(x[j] - 1.0))
        if gap > worst_gap:
            worst_gap = gap
            worst = j
    return worst


def solve_binary_ilp(
    problem: LpProblem,
    binary_vars,
    node_limit: int = 200_000,
) -> LpSolution:
    """Depth-first branch-and-bound with LP bounding over 0/1 variables.

    The LP relaxation must be bounded.  Binariness is enforced by branching
    (variables are fixed to 0 or 1), so callers whose constraints already
    imply unit bounds need not add them.  If the root relaxation is already
    0/1 on ``binary_vars`` it is returned unchanged (duals included).
    """
    binary_vars = sorted(binary_vars)
    base_lb = problem.lb.copy()
    base_ub = problem.ub.copy()

    minimizing = problem.sense == "min"

    def score(objective: float) -> float:
        return objective if minimizing else -objective

    root = replace(problem, lb=base_lb.copy(), ub=base_ub.copy())
    sol = solve_lp(root)
    if sol.status == "infeasible":
        return LpSolution(status="infeasible")
    if sol.status == "unbounded":
        raise LpError("LP relaxation is unbounded; cannot bound the search")
    if _fractional(sol.x, binary_vars) is None:
        x = sol.x.copy()
        for j in binary_vars:
            x[j] = round(x[j])
        return replace(sol, x=x)

    incumbent: LpSolution | None = None
    inc_score = np.inf
    stack: list[dict[int, int]] = [{}]
    nodes = 0
    while stack:
        fixes = stack.pop()
        nodes += 1
        if nodes > node_limit:
            raise LpError("branch-and-bound node limit exceeded")
        lb = base_lb.copy()
        ub = base_ub.copy()
        for j, v in fixes.items():
            lb[j] = ub[j] = float(v)
        sub = replace(problem, lb=lb, ub=ub)
        sol = solve_lp(sub)
        if sol.status != "optimal":
            continue
        if score(sol.objective) >= inc_score - 1e-9:
            continue
        j = _fractional(sol.x, binary_vars)
        if j is None:
            x = sol.x.copy()
            for k in binary_vars:
                x[k] = round(x[k])
            incumbent = replace(sol, x=x, duals=None)
            inc_score = score(sol.objective)
            continue
        near = 1 if sol.x[j] >= 0.5 else 0
        stack.append({**fixes, j: 1 - near})
        stack.append({**fixes, j: near})  # explored first (LIFO)
    if incumbent is None:
        return LpSolution(status="infeasible")
    return incumbent
