"""Column-generation driver: restricted master solves, multiplier caps,
anytime lower bounds, pricing rounds, and the final pool ILP.

The restricted master is solved in its dual form: maximize ``-sum(lam)``
over nonnegative multipliers satisfying one constraint per pooled pose.
Pricing then hunts for a pose with negative reduced cost per neck context;
the loop stops when no context produces one, at which point the dual value
equals the LP optimum and a binary solve over the pool gives the reported
packing.  When the two values agree, the packing is certified globally
optimal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .dp import DpPricer, enumerate_poses_within
from .instance import (
    InstanceError,
    Pose,
    ProblemInstance,
    pose_cost,
    reduced_cost,
)
from .lp import LpProblem, solve_binary_ilp, solve_lp
from .nbd import NbdPricer
from .pricing import build_pricing_model
from .states import DEFAULT_STATE_CAP

__all__ = [
    "SolverConfig",
    "SolverError",
    "EngineMismatchError",
    "IcgNotConvergedError",
    "ColumnPool",
    "DoiBounds",
    "compute_doi",
    "solve_rmp",
    "anytime_lower_bound",
    "enumerate_neck_contexts",
    "icg_solve",
    "SolveResult",
    "solution_to_dict",
    "verify_solution",
    "VerificationReport",
]

RC_ADMIT_TOL = -1e-7


class SolverError(RuntimeError):
    pass


class EngineMismatchError(SolverError):
    def __init__(self, iteration: int, context, dp_cost: float, nbd_cost: float):
        self.iteration = iteration
        self.context = tuple(sorted(context))
        self.dp_cost = dp_cost
        self.nbd_cost = nbd_cost
        super().__init__(
            f"pricing engines disagree at iteration {iteration}, context {self.context}: "
            f"dp={dp_cost!r} nbd={nbd_cost!r}"
        )


class IcgNotConvergedError(SolverError):
    def __init__(self, iterations: int, trace):
        self.trace = trace
        super().__init__(f"column generation did not converge within {iterations} iterations")


@dataclass
class SolverConfig:
    engine: str = "nbd"  # "nbd" | "dp" | "both"
    neck_mode: str = "one"  # "one" | "powerset"
    state_cap: int = DEFAULT_STATE_CAP
    use_doi: bool = True
    doi_offset: float = 1e-6
    max_iterations: int = 200
    powerset_max_size: int | None = None
    row_engine: str = "compressed"
    # When the pool packing beats the LP value, poses of any optimal packing
    # have reduced cost at most that gap under the final multipliers; a
    # bounded threshold enumeration completes the pool so the final packing
    # is exact.  Disabled automatically when the caps are exceeded.
    complete_pool: bool = True
    complete_pose_cap: int = 20_000
    complete_node_cap: int = 2_000_000

    def __post_init__(self) -> None:
        if self.engine not in ("nbd", "dp", "both"):
            raise SolverError(f"unknown engine {self.engine!r}")
        if self.neck_mode not in ("one", "powerset"):
            raise SolverError(f"unknown neck mode {self.neck_mode!r}")


class ColumnPool:
    """Generated poses with their costs; duplicates by detection set are
    dropped silently (their dual constraints would be redundant)."""

    def __init__(self, instance: ProblemInstance):
        self.instance = instance
        self.poses: list[Pose] = []
        self.costs: list[float] = []
        self._seen: dict[frozenset[int], int] = {}

    def add(self, pose: Pose) -> bool:
        key = pose.detections
        if key in self._seen:
            return False
        self._seen[key] = len(self.poses)
        self.poses.append(pose)
        self.costs.append(pose_cost(self.instance, pose))
        return True

    def __len__(self) -> int:
        return len(self.poses)


@dataclass
class DoiBounds:
    """Per-detection caps on the multipliers: an upper bound on how much the
    cost of any pose can rise when the detection is removed, plus a small
    offset that keeps the caps inactive at termination.  Neck detections
    get an infinite cap since a pose cannot shed its neck."""

    xi: np.ndarray
    offset: float


def compute_doi(instance: ProblemInstance, mode: str = "one", offset: float = 1e-6) -> DoiBounds:
    """Removal-cost caps.  Every pose here contains at least one neck
    detection (both neck modes price nonempty neck subsets), so removing a
    non-neck detection never empties a pose and the pose-count offset term
    is dropped; neck detections are uncapped in both modes."""
    n = instance.n_detections
    neg_mass = np.zeros(n)
    for (d1, d2), v in instance.theta2.items():
        if v < 0:
            neg_mass[d1] += v
            neg_mass[d2] += v
    xi = np.empty(n)
    for d in range(n):
        if instance.part_of[d] == instance.neck:
            xi[d] = np.inf
        else:
            xi[d] = -min(0.0, instance.theta1[d] + neg_mass[d]) + offset
    return DoiBounds(xi=xi, offset=offset)


def solve_rmp(pool: ColumnPool, doi: DoiBounds | None, n_detections: int):
    """Solve the restricted master in its expanded primal form: fractional
    pose weights under at-most-once coverage, plus (with caps) one
    over-inclusion slack per finitely capped detection priced at its cap.
    The coverage-row duals are the multipliers and automatically respect
    the caps.

    Returns ``(lam, value, gamma)``: the multipliers, the dual objective
    ``-sum(lam)`` (an upper bound on the LP optimum), and the fractional
    pose weights.
    """
    n_poses = len(pool)
    finite = [d for d in range(n_detections) if doi is not None and np.isfinite(doi.xi[d])]
    A = np.zeros((n_detections, n_poses + len(finite)))
    c = np.zeros(n_poses + len(finite))
    for p, pose in enumerate(pool.poses):
        for d in pose.detections:
            A[d, p] = 1.0
        c[p] = pool.costs[p]
    for k, d in enumerate(finite):
        A[d, n_poses + k] = -1.0
        c[n_poses + k] = doi.xi[d]
    lp = LpProblem(
        sense="min",
        c=c,
        A=A,
        senses=["<="] * n_detections,
        b=np.ones(n_detections),
    )
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise SolverError(f"restricted master solve returned {sol.status}")
    lam = np.maximum(sol.duals, 0.0)
    return lam, float(-lam.sum()), sol.x[:n_poses].copy()


def anytime_lower_bound(lam, best_reduced_cost: float, n_detections: int) -> float:
    """Valid lower bound on the full LP optimum from one pricing round: the
    dual value plus the detection count times the most negative reduced
    cost found (zero if none was negative)."""
    return float(-np.sum(lam)) + n_detections * min(0.0, best_reduced_cost)


def enumerate_neck_contexts(instance: ProblemInstance, mode: str, max_size: int | None = None):
    """Neck subsets to price: all singletons in "one" mode; in "powerset"
    mode every nonempty subset up to ``max_size`` (cardinality order,
    lexicographic within), guarded against more than 20 neck detections."""
    necks = sorted(instance.neck_detections)
    if mode == "one":
        return [frozenset((d,)) for d in necks]
    if mode != "powerset":
        raise SolverError(f"unknown neck mode {mode!r}")
    if len(necks) > 20:
        raise SolverError(f"{len(necks)} neck detections is too many for power-set pricing")
    import itertools

    cap = len(necks) if max_size is None else min(max_size, len(necks))
    out = []
    for k in range(1, cap + 1):
        for combo in itertools.combinations(necks, k):
            out.append(frozenset(combo))
    return out


@dataclass
class IterationRecord:
    iteration: int
    rmp_value: float
    lower_bound: float
    columns_added: int


@dataclass
class SolveResult:
    poses: list[list[int]]
    objective: float
    lp_objective: float
    best_lower_bound: float
    certificate: bool
    lp_is_integral: bool
    trace: list[IterationRecord]
    pricing_log: list[dict] = field(default_factory=list, repr=False)
    pool_size: int = 0
    integrality_gap: float = 0.0


def solution_to_dict(result: SolveResult) -> dict:
    return {
        "objective": result.objective,
        "lp_objective": result.lp_objective,
        "best_lower_bound": result.best_lower_bound,
        "certificate": result.certificate,
        "poses": [sorted(p) for p in result.poses],
        "trace": [
            {
                "iter": rec.iteration,
                "rmp_value": rec.rmp_value,
                "lb": rec.lower_bound,
                "columns_added": rec.columns_added,
            }
            for rec in result.trace
        ],
    }


def _solve_pool_ilp(instance: ProblemInstance, pool: ColumnPool):
    if len(pool) == 0:
        return 0.0, []
    n_det = instance.n_detections
    A = np.zeros((n_det, len(pool)))
    for p, pose in enumerate(pool.poses):
        for d in pose.detections:
            A[d, p] = 1.0
    used = np.nonzero(A.sum(axis=1) > 0)[0]
    ilp = LpProblem(
        sense="min",
        c=np.array(pool.costs),
        A=A[used],
        senses=["<="] * len(used),
        b=np.ones(len(used)),
        lb=np.zeros(len(pool)),
    )
    sol = solve_binary_ilp(ilp, range(len(pool)))
    if sol.status != "optimal":
        raise SolverError(f"pool packing solve returned {sol.status}")
    selected = [pool.poses[p].sorted_ids() for p in range(len(pool)) if sol.x[p] > 0.5]
    return float(sol.objective), selected


def icg_solve(instance: ProblemInstance, config: SolverConfig | None = None) -> SolveResult:
    """Run column generation to dual optimality, then solve the pool ILP.

    With ``engine="both"`` every pricing call runs both engines and raises
    :class:`EngineMismatchError` if their costs differ beyond 1e-6; the
    fast engine's pose is kept.
    """
    config = config or SolverConfig()
    model = build_pricing_model(instance, config.state_cap)
    pool = ColumnPool(instance)
    doi = compute_doi(instance, config.neck_mode, config.doi_offset) if config.use_doi else None
    contexts = enumerate_neck_contexts(instance, config.neck_mode, config.powerset_max_size)
    n_det = instance.n_detections

    nbd = NbdPricer(model, row_engine=config.row_engine) if config.engine in ("nbd", "both") else None
    dp = DpPricer(model) if config.engine in ("dp", "both") else None

    trace: list[IterationRecord] = []
    pricing_log: list[dict] = []
    best_lb = -math.inf
    lam = np.zeros(n_det)
    rmp_value = 0.0
    gamma = np.zeros(0)
    converged = False

    for it in range(config.max_iterations):
        lam, rmp_value, gamma = solve_rmp(pool, doi, n_det)
        added = 0
        best_rc = math.inf
        for ctx in contexts:
            entry = {"iteration": it, "context": tuple(sorted(ctx))}
            if nbd is not None:
                t0 = perf_counter()
                pose, cost, stats = nbd.price(lam, ctx)
                entry["nbd_time"] = perf_counter() - t0
                entry["nbd_stats"] = stats
            if dp is not None:
                t0 = perf_counter()
                pose_dp, cost_dp, stats_dp = dp.price(lam, ctx)
                entry["dp_time"] = perf_counter() - t0
                entry["dp_stats"] = stats_dp
                if nbd is None:
                    pose, cost = pose_dp, cost_dp
                elif abs(cost - cost_dp) > 1e-6:
                    raise EngineMismatchError(it, ctx, cost_dp, cost)
            entry["cost"] = cost
            pricing_log.append(entry)
            best_rc = min(best_rc, cost)
            if cost < RC_ADMIT_TOL:
                added += pool.add(pose)
        lb = anytime_lower_bound(lam, best_rc if contexts else 0.0, n_det)
        best_lb = max(best_lb, lb)
        trace.append(IterationRecord(it, rmp_value, lb, added))
        if added == 0:
            converged = True
            break
    if not converged:
        raise IcgNotConvergedError(config.max_iterations, trace)

    lp_objective = rmp_value
    lp_is_integral = bool(len(gamma) == 0 or np.all(np.abs(gamma - np.round(gamma)) <= 1e-6))

    ilp_objective, selected = _solve_pool_ilp(instance, pool)
    scale = 1.0 + abs(lp_objective)

    # Close the pool/packing gap when there is one: any pose of an optimal
    # packing has reduced cost at most (packing value - LP value) under the
    # final multipliers, so enumerating to that threshold makes the pool
    # provably sufficient for the packing.
    if (
        config.complete_pool
        and len(pool)
        and ilp_objective - lp_objective > 1e-6 * scale
    ):
        budget = (ilp_objective - lp_objective) + 1e-5
        extra: list[Pose] = []
        complete = True
        for ctx in contexts:
            found = enumerate_poses_within(
                model, lam, ctx, budget,
                pose_cap=config.complete_pose_cap,
                node_cap=config.complete_node_cap,
            )
            if found is None:
                complete = False
                break
            extra.extend(Pose(dets) for dets, _ in found)
        if complete and len(pool) + len(extra) <= config.complete_pose_cap:
            for pose in extra:
                pool.add(pose)
            ilp_objective, selected = _solve_pool_ilp(instance, pool)

    certificate = abs(ilp_objective - lp_objective) <= 1e-6 * scale
    gap = max(0.0, (ilp_objective - lp_objective) / max(1.0, abs(lp_objective)))

    return SolveResult(
        poses=selected,
        objective=ilp_objective,
        lp_objective=lp_objective,
        best_lower_bound=best_lb,
        certificate=certificate,
        lp_is_integral=lp_is_integral,
        trace=trace,
        pricing_log=pricing_log,
        pool_size=len(pool),
        integrality_gap=gap,
    )


@dataclass
class VerificationReport:
    issues: list[str]

    @property
    def ok(self) -> bool:
        return not self.issues


def verify_solution(instance: ProblemInstance, solution: dict) -> VerificationReport:
    """Independently re-check a solution document: pose costs, pairwise
    disjointness, the stated objective, and the bound ordering."""
    issues: list[str] = []
    poses = solution.get("poses")
    if not isinstance(poses, list):
        return VerificationReport(["solution has no 'poses' list"])

    counts = np.zeros(instance.n_detections, dtype=int)
    total = 0.0
    for k, ids in enumerate(poses):
        try:
            dets = frozenset(int(d) for d in ids)
        except (TypeError, ValueError):
            issues.append(f"poses[{k}] is not a list of detection ids")
            continue
        if not dets:
            issues.append(f"poses[{k}] is empty")
            continue
        bad = [d for d in dets if not (0 <= d < instance.n_detections)]
        if bad:
            issues.append(f"poses[{k}] references unknown detections {sorted(bad)}")
            continue
        for d in dets:
            counts[d] += 1
        total += pose_cost(instance, dets)
    overlap = np.nonzero(counts > 1)[0]
    if len(overlap):
        issues.append(f"detections {overlap.tolist()} appear in more than one pose")

    stated = solution.get("objective")
    if not isinstance(stated, (int, float)):
        issues.append("solution has no numeric 'objective'")
    else:
        if abs(total - stated) > 1e-6 * (1.0 + abs(total)):
            issues.append(f"stated objective {stated} does not match recomputed {total}")

    lb = solution.get("best_lower_bound")
    if isinstance(lb, (int, float)) and isinstance(stated, (int, float)):
        if lb > stated + 1e-6 * (1.0 + abs(stated)):
            issues.append(f"lower bound {lb} exceeds the objective {stated}")
    lp = solution.get("lp_objective")
    if isinstance(lp, (int, float)) and isinstance(stated, (int, float)):
        if lp > stated + 1e-6 * (1.0 + abs(stated)):
            issues.append(f"lp objective {lp} exceeds the objective {stated}")
    return VerificationReport(issues)
