"""Exact pricing by dynamic programming over the part tree.

This is the reference engine: a leaves-to-root pass computes, for every
edge and every parent state, the best conditional subtree value; reading
the argmins root-to-leaves recovers the optimal pose.  Its cost is the
product of adjacent state-space sizes per edge, which is what the Benders
engine avoids.
"""

from __future__ import annotations

from dataclasses import dataclass
from time import perf_counter

import numpy as np

from .instance import Pose, reduced_cost
from .pricing import PricingContext, PricingModel

__all__ = ["MessageTable", "dp_messages", "dp_price", "DpPricer"]

# Cap on the temporary (parent-block x child-states) matrix.
_BLOCK_CELLS = 8_000_000


@dataclass
class MessageTable:
    """Conditional subtree values, one vector per non-root part.

    ``mu[r][s_hat]`` is the best value of the subtree rooted at ``r`` given
    its parent in state ``s_hat``, including the edge terms to the parent;
    ``argmin[r][s_hat]`` is the state of ``r`` attaining it (lowest index on
    ties).  ``root_values[s]`` covers the root, which has no parent.
    """

    root: int
    mu: dict[int, np.ndarray]
    argmin: dict[int, np.ndarray]
    root_values: np.ndarray


def _edge_min(parent_ind: np.ndarray, cross: np.ndarray, child_ind: np.ndarray, base: np.ndarray):
    n_par = parent_ind.shape[0]
    n_child = base.shape[0]
    w = parent_ind @ cross  # (n_par, n_child_dets)
    mu = np.empty(n_par)
    arg = np.empty(n_par, dtype=np.int64)
    block = max(16, _BLOCK_CELLS // max(n_child, 1))
    for i0 in range(0, n_par, block):
        vals = w[i0 : i0 + block] @ child_ind.T
        vals += base
        a = vals.argmin(axis=1)
        arg[i0 : i0 + block] = a
        mu[i0 : i0 + block] = vals[np.arange(len(a)), a]
    return mu, arg


def dp_messages(model: PricingModel, ctx: PricingContext) -> MessageTable:
    """Leaves-to-root pass producing every edge's conditional value table."""
    tree = model.tree
    if tree is None:
        raise ValueError("dp_messages needs at least one non-neck part")
    base: dict[int, np.ndarray] = {}
    mu: dict[int, np.ndarray] = {}
    arg: dict[int, np.ndarray] = {}
    for r in tree.order_up:
        acc = ctx.psi[r].copy()
        for c in tree.children[r]:
            acc += mu[c]
        base[r] = acc
        par = tree.parent[r]
        if par is not None:
            mu[r], arg[r] = _edge_min(
                model.spaces[par].indicator, model.cross[r], model.spaces[r].indicator, acc
            )
    return MessageTable(root=tree.root, mu=mu, argmin=arg, root_values=base[tree.root])


def dp_price(model: PricingModel, lam, neck_subset):
    """Minimize the reduced cost over poses whose neck detections are exactly
    ``neck_subset`` and whose per-part states lie in the capped spaces.

    Returns ``(pose, cost, stats)``; the cost is re-evaluated from the pose
    so it matches :func:`partpack.instance.reduced_cost` exactly.
    """
    t0 = perf_counter()
    ctx = model.context(lam, neck_subset)
    if model.tree is None:
        pose = Pose(frozenset(ctx.neck_subset))
        cost = reduced_cost(model.instance, pose, ctx.lam)
        return pose, cost, {"wall_time": perf_counter() - t0, "dp_value": ctx.const}

    table = dp_messages(model, ctx)
    tree = model.tree
    x: dict[int, int] = {tree.root: int(np.argmin(table.root_values))}
    for r in tree.order_down[1:]:
        x[r] = int(table.argmin[r][x[tree.parent[r]]])

    dets = set(ctx.neck_subset)
    for r, s in x.items():
        dets.update(model.spaces[r].state_set(s))
    pose = Pose(frozenset(dets))
    cost = reduced_cost(model.instance, pose, ctx.lam)
    dp_value = float(table.root_values[x[tree.root]]) + ctx.const
    return pose, cost, {"wall_time": perf_counter() - t0, "dp_value": dp_value}


class DpPricer:
    """Stateless pricing engine wrapper with the common ``price`` interface."""

    def __init__(self, model: PricingModel):
        self.model = model

    def price(self, lam, neck_subset):
        return dp_price(self.model, lam, neck_subset)


class _EnumerationAborted(Exception):
    pass


def enumerate_poses_within(
    model: PricingModel,
    lam,
    neck_subset,
    max_cost: float,
    pose_cap: int = 20_000,
    node_cap: int = 2_000_000,
):
    """Every pose of this neck context with reduced cost at most ``max_cost``.

    Depth-first enumeration over the part tree with exact completion bounds
    from the message tables, so only assignments that can still finish under
    the threshold are expanded.  Returns ``[(frozenset, reduced_cost), ...]``
    or ``None`` if either cap is hit.
    """
    ctx = model.context(lam, neck_subset)
    if model.tree is None:
        rc = reduced_cost(model.instance, Pose(frozenset(ctx.neck_subset)), ctx.lam)
        return [(frozenset(ctx.neck_subset), rc)] if rc <= max_cost else []

    table = dp_messages(model, ctx)
    tree = model.tree
    budget_root = max_cost - ctx.const
    if budget_root < float(np.min(table.root_values)) - 1e-12:
        return []
    counter = {"nodes": 0}

    def subtree(r: int, parent_state: int | None, budget: float):
        # Yields (detections, cost) of subtree assignments at most `budget`,
        # where cost includes the edge to the parent.
        psi = ctx.psi[r]
        phi = psi * 0.0 if parent_state is None else model.phi_column(r, parent_state)
        kids = tree.children[r]
        floor = phi + psi
        for c in kids:
            floor = floor + table.mu[c]
        for s in np.nonzero(floor <= budget + 1e-12)[0]:
            counter["nodes"] += 1
            if counter["nodes"] > node_cap:
                raise _EnumerationAborted
            s = int(s)
            head = float(phi[s] + psi[s])
            own = list(model.spaces[r].state_set(s))
            child_mins = [float(table.mu[c][s]) for c in kids]

            def combos(i: int, remaining: float):
                if i == len(kids):
                    yield [], 0.0
                    return
                rest = sum(child_mins[i + 1 :])
                for dets_i, t_i in subtree(kids[i], s, remaining - rest):
                    for dets_rest, t_rest in combos(i + 1, remaining - t_i):
                        yield dets_i + dets_rest, t_i + t_rest

            for dets_children, t in combos(0, budget - head):
                yield own + dets_children, head + t

    out = []
    try:
        for dets, cost in subtree(tree.root, None, budget_root):
            out.append((frozenset(dets) | ctx.neck_subset, cost + ctx.const))
            if len(out) > pose_cap:
                return None
    except _EnumerationAborted:
        return None
    return out
