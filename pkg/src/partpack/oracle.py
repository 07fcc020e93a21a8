"""Exhaustive ground truth for small instances.

Enumerates the full pose universe (every neck context crossed with every
combination of per-part states from the capped spaces) and solves the
packing exactly.  Guarded to at most 14 detections; intended as the
correctness oracle for the column-generation solver.
"""

from __future__ import annotations

import itertools

import numpy as np

from .instance import InstanceError, Pose, ProblemInstance, pose_cost
from .lp import LpProblem, solve_binary_ilp, solve_lp
from .master import SolverConfig, enumerate_neck_contexts
from .states import build_state_space

__all__ = ["enumerate_poses", "brute_force_mwsp", "full_lp_value"]

MAX_ORACLE_DETECTIONS = 14
_MAX_POSES = 500_000


def enumerate_poses(instance: ProblemInstance, config: SolverConfig | None = None):
    """All poses the solver's universe contains: one neck context times one
    state per non-neck part.  Returns ``[(frozenset, cost), ...]`` in a
    deterministic order."""
    config = config or SolverConfig()
    contexts = enumerate_neck_contexts(instance, config.neck_mode, config.powerset_max_size)
    spaces = [build_state_space(instance, r, config.state_cap) for r in instance.non_neck_parts]

    total = len(contexts)
    for s in spaces:
        total *= s.n_states
    if total > _MAX_POSES:
        raise InstanceError(f"pose universe has {total} members; enumeration refused")

    poses = []
    state_sets = [[space.state_set(s) for s in range(space.n_states)] for space in spaces]
    for ctx in contexts:
        for combo in itertools.product(*state_sets) if spaces else [()]:
            dets = set(ctx)
            for part_state in combo:
                dets.update(part_state)
            key = frozenset(dets)
            poses.append((key, pose_cost(instance, key)))
    return poses


def _packing_lp(instance: ProblemInstance, poses):
    n = len(poses)
    A = np.zeros((instance.n_detections, n))
    for p, (dets, _) in enumerate(poses):
        for d in dets:
            A[d, p] = 1.0
    used = np.nonzero(A.sum(axis=1) > 0)[0]
    return LpProblem(
        sense="min",
        c=np.array([c for _, c in poses]),
        A=A[used],
        senses=["<="] * len(used),
        b=np.ones(len(used)),
        lb=np.zeros(n),
    )


def brute_force_mwsp(instance: ProblemInstance, config: SolverConfig | None = None):
    """Exact minimum-weight packing over the enumerated pose universe.

    Returns ``(objective, poses)`` with poses as sorted id lists.  When the
    universe is tiny (at most 14 poses) the result is cross-checked against
    plain subset enumeration.
    """
    if instance.n_detections > MAX_ORACLE_DETECTIONS:
        raise InstanceError(
            f"instance has {instance.n_detections} detections; the oracle is "
            f"guarded to {MAX_ORACLE_DETECTIONS}"
        )
    poses = enumerate_poses(instance, config)
    if not poses:
        return 0.0, []
    sol = solve_binary_ilp(_packing_lp(instance, poses), range(len(poses)))
    if sol.status != "optimal":
        raise InstanceError(f"oracle packing solve returned {sol.status}")
    objective = float(sol.objective)
    chosen = [sorted(poses[p][0]) for p in range(len(poses)) if sol.x[p] > 0.5]

    if len(poses) <= 14:
        best = 0.0
        for mask in range(1, 1 << len(poses)):
            sel = [p for p in range(len(poses)) if mask >> p & 1]
            seen: set[int] = set()
            ok = True
            for p in sel:
                if seen & poses[p][0]:
                    ok = False
                    break
                seen |= poses[p][0]
            if ok:
                best = min(best, sum(poses[p][1] for p in sel))
        if abs(best - objective) > 1e-9 * (1.0 + abs(best)):
            raise InstanceError(f"packing cross-check failed: {best} vs {objective}")
    return objective, chosen


def full_lp_value(instance: ProblemInstance, config: SolverConfig | None = None) -> float:
    """LP relaxation optimum over the full enumerated pose universe."""
    poses = enumerate_poses(instance, config)
    if not poses:
        return 0.0
    sol = solve_lp(_packing_lp(instance, poses))
    if sol.status != "optimal":
        raise InstanceError(f"full LP solve returned {sol.status}")
    return float(sol.objective)
