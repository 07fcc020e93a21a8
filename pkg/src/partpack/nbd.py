"""Pricing by nested Benders decomposition.

Each non-root part owns a pool of cuts.  A cut for part ``r`` is an affine
lower bound, in the parent's state indicators, on the best conditional
value of the subtree rooted at ``r``.  One pricing call loops:

  1. reset every cut offset to its tightest feasible value (cheap, and the
     step that lets pools be recycled across calls with new multipliers),
  2. a root-to-leaves forward pass choosing one state per part, giving an
     upper bound (the pose read off) and a lower bound (the root minimum),
  3. attribution of the bound gap to the single part introducing most of it,
  4. generation of one new cut for that part at its parent's chosen state.

Cut coefficient vectors depend only on the pairwise costs of one tree
edge, so pools are shared across multiplier vectors and neck subsets; only
the offsets are context-dependent, and step 1 re-fits them.  Pools persist
on the pricer across calls, which is what makes later calls converge in a
handful of iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .instance import Pose, reduced_cost
from .lp import LpProblem, solve_lp
from .pricing import PricingContext, PricingModel

__all__ = [
    "NEG_FLOOR",
    "NbdError",
    "NbdInvariantError",
    "BendersRow",
    "RowPool",
    "refresh_row",
    "cut_values",
    "mu_star_minus",
    "generate_row_compressed",
    "generate_row_full",
    "NbdPricer",
]

# Stand-in for the minus-infinity bound of an empty cut pool; kept finite so
# argmins over states are unaffected (it is state-independent).
NEG_FLOOR = -1e18

# Bias weight on the full row-generation LP's auxiliary variables; keeps them
# at the smallest values that still give an optimal dual solution.
EPS_BIAS = 1e-10

_TERM_REL = 1e-9


class NbdError(RuntimeError):
    pass


class NbdInvariantError(NbdError):
    """A cut overestimated a subtree value (lower bound crossed the upper)."""


@dataclass
class BendersRow:
    """One cut owned by ``owner``: value at parent state ``s`` is
    ``offset + parent_integrals[s]``.

    ``own_coeffs`` are the coefficients the cut's constraints place on the
    owner's own detections; they are what the offset re-fit needs.
    ``sum_delta1`` ties the offset to the re-fitted feasibility value.
    Integrals over both state spaces are cached at creation.
    """

    owner: int
    parent_coeffs: np.ndarray
    own_coeffs: np.ndarray
    sum_delta1: float
    parent_integrals: np.ndarray
    own_integrals: np.ndarray
    delta0: float = 0.0
    offset: float = 0.0


class RowPool:
    """Cuts of one part, with a version stamp for downstream caches."""

    def __init__(self, part: int):
        self.part = part
        self.rows: list[BendersRow] = []
        self.version = 0

    def add(self, row: BendersRow) -> None:
        self.rows.append(row)
        self.version += 1

    def bump(self) -> None:
        self.version += 1

    def __len__(self) -> int:
        return len(self.rows)


def refresh_row(row: BendersRow, mu_star: np.ndarray) -> None:
    """Re-fit the offset: the largest value keeping the cut's constraints
    feasible for the current subtree values.  Leaves the coefficient
    vectors untouched."""
    row.delta0 = -float(np.min(mu_star + row.own_integrals))
    row.offset = -row.delta0 - row.sum_delta1


def cut_values(pool: RowPool, n_parent_states: int) -> np.ndarray:
    """Pointwise maximum of the pool's cuts over all parent states; the
    floor sentinel where the pool is empty."""
    out = np.full(n_parent_states, NEG_FLOOR)
    for row in pool.rows:
        np.maximum(out, row.parent_integrals + row.offset, out=out)
    return out


def mu_star_minus(model: PricingModel, pools: dict[int, RowPool], psi: dict[int, np.ndarray], part: int) -> np.ndarray:
    """Lower-bound surrogate of the subtree value of ``part`` per own state:
    its potential plus the children's cut maxima."""
    tree = model.tree
    acc = psi[part].astype(float).copy()
    n_states = model.spaces[part].n_states
    for c in tree.children[part]:
        acc += cut_values(pools[c], n_states)
    return acc


def _finalize_row(model, part, mu_star, parent_coeffs, own_coeffs, sum_delta1) -> BendersRow:
    par = model.tree.parent[part]
    parent_integrals = model.spaces[par].indicator @ parent_coeffs
    own_integrals = model.spaces[part].indicator @ own_coeffs
    row = BendersRow(
        owner=part,
        parent_coeffs=parent_coeffs,
        own_coeffs=own_coeffs,
        sum_delta1=float(sum_delta1),
        parent_integrals=parent_integrals,
        own_integrals=own_integrals,
    )
    refresh_row(row, mu_star)
    return row


def generate_row_compressed(
    model: PricingModel,
    part: int,
    mu_star: np.ndarray,
    parent_state: int,
    filtered: bool = True,
):
    """Generate the most violated cut for ``part`` at ``parent_state`` via the
    compressed LP: one variable per own detection, bounded by the edge's
    signed pairwise mass, against only the state constraints still violated
    when the variables are zero.

    Returns ``(row, delta4)``.  The cut is tight at the generating parent
    state and valid at every other one by construction.
    """
    if np.min(mu_star) < -1e17:
        raise NbdError("cut generation reached a part whose children have no cuts yet")
    tree = model.tree
    par = tree.parent[part]
    if par is None:
        raise NbdError("the root part does not own cuts")
    t = model.cross[part]
    a = model.spaces[par].indicator[parent_state]
    ind = model.spaces[part].indicator
    n_own = t.shape[1]

    tpos = np.maximum(t, 0.0)
    tneg = np.minimum(t, 0.0)
    qpos = a @ tpos
    qneg = (1.0 - a) @ (-tneg)
    q = qpos + qneg
    negsum = tneg.sum(axis=0)

    phi = ind @ (a @ t)
    m0 = float(np.min(phi + mu_star))
    base_slack = mu_star - m0 + (ind @ negsum)

    delta4 = np.zeros(n_own)
    if n_own:
        if filtered:
            sel = np.nonzero(base_slack < 0.0)[0]
        else:
            sel = np.arange(len(base_slack))
        if len(sel):
            lp = LpProblem(
                sense="min",
                c=np.ones(n_own),
                A=ind[sel],
                senses=[">="] * len(sel),
                b=-base_slack[sel],
                lb=np.zeros(n_own),
                ub=q.copy(),
            )
            sol = solve_lp(lp)
            if sol.status != "optimal":
                raise NbdError(f"row-generation LP returned {sol.status}")
            delta4 = np.clip(sol.x, 0.0, q)

    own_coeffs = delta4 + negsum
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(q > 0.0, delta4 / np.where(q > 0.0, q, 1.0), 0.0)
    parent_coeffs = (tpos * a[:, None] + tneg * (1.0 - a)[:, None]) @ ratio
    sum_delta1 = float(qpos @ ratio)
    row = _finalize_row(model, part, mu_star, parent_coeffs, own_coeffs, sum_delta1)
    return row, delta4


def generate_row_full(model: PricingModel, part: int, mu_star: np.ndarray, parent_state: int):
    """Generate a cut by solving the uncompressed dual LP over all pairwise
    auxiliary variables.  Kept as a cross-check for the compressed path;
    its LP has one constraint per own state, so use it on small parts only.

    Returns ``(row, deltas)`` with the raw LP variables in ``deltas``.
    """
    if np.min(mu_star) < -1e17:
        raise NbdError("cut generation reached a part whose children have no cuts yet")
    tree = model.tree
    par = tree.parent[part]
    t = model.cross[part]
    a = model.spaces[par].indicator[parent_state]
    ind = model.spaces[part].indicator
    n_par, n_own = t.shape
    n_pairs = n_par * n_own
    n_states = ind.shape[0]

    # Variables: [delta0 | delta1 (pairs) | delta2 (pairs) | delta3 (pairs)].
    n_vars = 1 + 3 * n_pairs
    c = np.zeros(n_vars)
    c[0] = -1.0
    for i in range(n_par):
        for j in range(n_own):
            k = i * n_own + j
            c[1 + k] = (a[i] - 1.0) - EPS_BIAS
            c[1 + n_pairs + k] = -a[i] - EPS_BIAS
            c[1 + 2 * n_pairs + k] = -EPS_BIAS

    A = np.zeros((n_states + n_pairs, n_vars))
    b = np.zeros(n_states + n_pairs)
    senses = [">="] * (n_states + n_pairs)
    for s in range(n_states):
        A[s, 0] = 1.0
        for i in range(n_par):
            for j in range(n_own):
                k = i * n_own + j
                A[s, 1 + k] = ind[s, j]
                A[s, 1 + 2 * n_pairs + k] = -ind[s, j]
        b[s] = -mu_star[s]
    for i in range(n_par):
        for j in range(n_own):
            k = i * n_own + j
            row_i = n_states + k
            A[row_i, 1 + k] = -1.0
            A[row_i, 1 + n_pairs + k] = 1.0
            A[row_i, 1 + 2 * n_pairs + k] = 1.0
            b[row_i] = -t[i, j]

    lb = np.zeros(n_vars)
    lb[0] = -np.inf
    lp = LpProblem(sense="max", c=c, A=A, senses=senses, b=b, lb=lb)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise NbdError(f"full row-generation LP returned {sol.status}")

    delta1 = sol.x[1 : 1 + n_pairs].reshape(n_par, n_own)
    delta2 = sol.x[1 + n_pairs : 1 + 2 * n_pairs].reshape(n_par, n_own)
    delta3 = sol.x[1 + 2 * n_pairs :].reshape(n_par, n_own)
    own_coeffs = (delta1 - delta3).sum(axis=0)
    parent_coeffs = (delta1 - delta2).sum(axis=1)
    sum_delta1 = float(delta1.sum())
    row = _finalize_row(model, part, mu_star, parent_coeffs, own_coeffs, sum_delta1)
    deltas = {"delta0": float(sol.x[0]), "delta1": delta1, "delta2": delta2, "delta3": delta3}
    return row, deltas


class NbdPricer:
    """Pricing engine with persistent cut pools.

    ``row_engine`` selects the cut generator ("compressed" is the default;
    "full" solves the uncompressed LP and is only practical on small
    parts).  ``row_observer``, when set, is called as
    ``observer(part, parent_state, mu_star)`` right before each cut is
    generated; ``keep_iteration_trace`` adds per-iteration bound records to
    the returned stats.
    """

    def __init__(
        self,
        model: PricingModel,
        row_engine: str = "compressed",
        keep_iteration_trace: bool = False,
        row_observer=None,
        iteration_cap_factor: int = 10,
    ):
        if row_engine not in ("compressed", "full"):
            raise ValueError(f"unknown row engine {row_engine!r}")
        self.model = model
        self.row_engine = row_engine
        self.keep_iteration_trace = keep_iteration_trace
        self.row_observer = row_observer
        self.iteration_cap_factor = iteration_cap_factor
        self.pools: dict[int, RowPool] = {}
        if model.tree is not None:
            for r in model.tree.order_down:
                if model.tree.parent[r] is not None:
                    self.pools[r] = RowPool(r)

    # -- per-call helpers ------------------------------------------------

    def _phi_at(self, part: int, parent_state: int, state: int) -> float:
        model = self.model
        par = model.tree.parent[part]
        w = model.spaces[par].indicator[parent_state] @ model.cross[part]
        return float(model.spaces[part].indicator[state] @ w)

    def price(self, lam, neck_subset):
        """Minimize reduced cost over poses with neck detections exactly
        ``neck_subset``; returns ``(pose, cost, stats)``."""
        t_start = perf_counter()
        model = self.model
        ctx = model.context(lam, neck_subset)
        if model.tree is None:
            pose = Pose(frozenset(ctx.neck_subset))
            cost = reduced_cost(model.instance, pose, ctx.lam)
            return pose, cost, {
                "context": tuple(sorted(ctx.neck_subset)),
                "iterations": 0,
                "rows_added": 0,
                "rows_refreshed": 0,
                "lb": cost,
                "ub": cost,
                "wall_time": perf_counter() - t_start,
            }

        tree = model.tree
        psi = ctx.psi
        cut_cache: dict[int, tuple[int, np.ndarray]] = {}
        mu_cache: dict[int, tuple[tuple[int, ...], np.ndarray]] = {}

        def cut_term(r: int) -> np.ndarray:
            pool = self.pools[r]
            hit = cut_cache.get(r)
            if hit is not None and hit[0] == pool.version:
                return hit[1]
            out = cut_values(pool, model.spaces[tree.parent[r]].n_states)
            cut_cache[r] = (pool.version, out)
            return out

        def mu_star(r: int) -> np.ndarray:
            key = tuple(self.pools[c].version for c in tree.children[r])
            hit = mu_cache.get(r)
            if hit is not None and hit[0] == key:
                return hit[1]
            acc = psi[r].copy()
            for c in tree.children[r]:
                acc += cut_term(c)
            mu_cache[r] = (key, acc)
            return acc

        iterations = 0
        rows_added = 0
        rows_refreshed = 0
        x: dict[int, int] = {}
        r_star: int | None = None
        trace: list[dict] = []
        cap = self.iteration_cap_factor * max(1, model.total_states)

        while True:
            iterations += 1
            if iterations > cap:
                raise NbdError(
                    f"nbd did not converge within {cap} iterations "
                    f"(context {tuple(sorted(ctx.neck_subset))}); suspect an invalid cut"
                )

            # Step 1: re-fit offsets.  On the first iteration of the call the
            # multipliers changed, so every pooled cut needs it; afterwards
            # only the ancestors of the part that last gained a cut do.
            if iterations == 1:
                refresh_parts = [r for r in tree.order_up if tree.parent[r] is not None]
            else:
                refresh_parts = [a for a in tree.ancestors(r_star) if tree.parent[a] is not None]
            for r in refresh_parts:
                pool = self.pools[r]
                if not pool.rows:
                    continue
                mu_r = mu_star(r)
                for row in pool.rows:
                    refresh_row(row, mu_r)
                rows_refreshed += len(pool.rows)
                pool.bump()

            # Step 2: forward pass.  Parts whose parent kept its state and
            # that are not ancestors of the last-augmented part keep theirs.
            anc_set = None if iterations == 1 else set(tree.ancestors(r_star))
            changed: set[int] = set()
            root_min = None
            for r in tree.order_down:
                par = tree.parent[r]
                if par is None:
                    vals = mu_star(r)
                    s = int(np.argmin(vals))
                    root_min = float(vals[s])
                elif anc_set is None or r in anc_set or par in changed:
                    vals = mu_star(r) + model.phi_column(r, x[par])
                    s = int(np.argmin(vals))
                else:
                    continue
                if r not in x or x[r] != s:
                    changed.add(r)
                x[r] = s

            lb = root_min + ctx.const
            dets = set(ctx.neck_subset)
            for r in tree.order_down:
                dets.update(model.spaces[r].state_set(x[r]))
            pose = Pose(frozenset(dets))
            ub = reduced_cost(model.instance, pose, ctx.lam)

            scale = 1.0 + abs(ub)
            if lb > ub + 1e-6 * scale:
                raise NbdInvariantError(
                    f"lower bound {lb} exceeds upper bound {ub}; a cut is invalid"
                )
            record = {"lb": lb, "ub": ub}
            if ub - lb <= _TERM_REL * scale:
                if self.keep_iteration_trace:
                    trace.append(record)
                break

            # Step 3: attribute the gap.
            m1: dict[int, float] = {}
            m2: dict[int, float] = {}
            for r in tree.order_up:
                par = tree.parent[r]
                v = float(psi[r][x[r]])
                for c in tree.children[r]:
                    v += m1[c]
                if par is not None:
                    v += self._phi_at(r, x[par], x[r])
                    m2[r] = float(cut_term(r)[x[par]])
                m1[r] = v
            best_m3 = None
            m3_sum = 0.0
            for r in sorted(m2):  # non-root parts by id; ties keep the lowest
                m3 = (m1[r] - m2[r]) - sum(m1[c] - m2[c] for c in tree.children[r])
                m3_sum += m3
                if best_m3 is None or m3 > best_m3:
                    best_m3 = m3
                    r_star = r
            if self.keep_iteration_trace:
                record["m3_sum"] = m3_sum
                record["r_star"] = r_star
                record["pools_complete"] = all(len(p.rows) > 0 for p in self.pools.values())
                trace.append(record)

            # Step 4: one new cut for the worst part, at its parent's state.
            mu_r = mu_star(r_star)
            s_hat = x[tree.parent[r_star]]
            if self.row_observer is not None:
                self.row_observer(r_star, s_hat, mu_r.copy())
            if self.row_engine == "compressed":
                row, _ = generate_row_compressed(model, r_star, mu_r, s_hat)
            else:
                row, _ = generate_row_full(model, r_star, mu_r, s_hat)
            self.pools[r_star].add(row)
            rows_added += 1

        stats = {
            "context": tuple(sorted(ctx.neck_subset)),
            "iterations": iterations,
            "rows_added": rows_added,
            "rows_refreshed": rows_refreshed,
            "lb": lb,
            "ub": ub,
            "wall_time": perf_counter() - t_start,
        }
        if self.keep_iteration_trace:
            stats["trace"] = trace
        return pose, ub, stats
