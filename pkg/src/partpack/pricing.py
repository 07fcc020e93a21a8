"""Shared pricing machinery: the rooted part tree and per-context potentials.

Both pricing engines condition on a fixed subset of neck detections, which
turns the augmented structure into a plain tree over the non-neck parts.
The tree is rooted at the part with the most detections, so the engines
share one orientation; edge cost matrices collect stored pairwise terms in
either storage direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from time import perf_counter

import numpy as np

from .instance import InstanceError, ProblemInstance
from .states import DEFAULT_STATE_CAP, StateSpace, build_state_space

__all__ = ["select_root", "PricingTree", "PricingModel", "PricingContext", "build_pricing_model"]


def select_root(instance: ProblemInstance) -> int:
    """The non-neck part with the most detections; ties go to the lowest id."""
    best = None
    best_size = -1
    for r in instance.non_neck_parts:
        size = len(instance.dets_of_part[r])
        if size > best_size:
            best, best_size = r, size
    if best is None:
        raise InstanceError("instance has no non-neck part")
    return best


@dataclass(frozen=True)
class PricingTree:
    """The non-neck part tree re-rooted for pricing.

    ``order_down`` lists parts root-first; ``order_up`` is its reverse.
    """

    root: int
    parent: dict[int, int | None]
    children: dict[int, tuple[int, ...]]
    order_down: tuple[int, ...]

    @property
    def order_up(self) -> tuple[int, ...]:
        return tuple(reversed(self.order_down))

    def ancestors(self, part: int) -> list[int]:
        """Proper ancestors of ``part``, nearest first, ending at the root."""
        out = []
        p = self.parent[part]
        while p is not None:
            out.append(p)
            p = self.parent[p]
        return out


def _build_tree(instance: ProblemInstance, root: int) -> PricingTree:
    adj: dict[int, set[int]] = {r: set() for r in instance.non_neck_parts}
    for p, c in instance.tree_edges:
        adj[p].add(c)
        adj[c].add(p)
    parent: dict[int, int | None] = {root: None}
    children: dict[int, list[int]] = {r: [] for r in instance.non_neck_parts}
    order = [root]
    frontier = [root]
    while frontier:
        r = frontier.pop(0)
        for nb in sorted(adj[r]):
            if nb not in parent:
                parent[nb] = r
                children[r].append(nb)
                order.append(nb)
                frontier.append(nb)
    if len(order) != len(instance.non_neck_parts):
        raise InstanceError("non-neck parts do not form a connected tree")
    return PricingTree(
        root=root,
        parent=parent,
        children={r: tuple(children[r]) for r in children},
        order_down=tuple(order),
    )


@dataclass
class PricingContext:
    """Potentials for one pricing call: a multiplier vector and a neck subset.

    ``psi[r]`` is the per-state potential of part ``r`` (unaries plus
    multipliers, intra-part pairwise terms, and links to the neck subset);
    ``const`` collects the pose offset and all terms internal to the neck
    subset.
    """

    lam: np.ndarray
    neck_subset: frozenset[int]
    psi: dict[int, np.ndarray]
    const: float


class PricingModel:
    """Immutable per-instance arrays shared by every pricing call.

    Safe for concurrent reads; contexts built from it are owned by one
    pricing call each.
    """

    def __init__(self, instance: ProblemInstance, state_cap: int = DEFAULT_STATE_CAP):
        self.instance = instance
        self.state_cap = state_cap
        if instance.non_neck_parts:
            self.tree: PricingTree | None = _build_tree(instance, select_root(instance))
        else:
            self.tree = None
        self.spaces: dict[int, StateSpace] = {
            r: build_state_space(instance, r, state_cap) for r in instance.non_neck_parts
        }
        self.neck_dets = np.array(instance.neck_detections, dtype=int)
        self._neck_pos = {int(d): k for k, d in enumerate(self.neck_dets)}

        theta2 = instance.theta2
        self.theta1_local: dict[int, np.ndarray] = {}
        self.intra_state: dict[int, np.ndarray] = {}
        self.neck_cross: dict[int, np.ndarray] = {}
        self.cross: dict[int, np.ndarray] = {}

        for r in instance.non_neck_parts:
            space = self.spaces[r]
            dets = space.det_ids
            n = len(dets)
            ind = space.indicator
            self.theta1_local[r] = np.array([instance.theta1[d] for d in dets])
            intra = np.zeros((n, n))
            for i, d1 in enumerate(dets):
                for j, d2 in enumerate(dets):
                    v = theta2.get((d1, d2))
                    if v:
                        intra[i, j] = v
            if n:
                self.intra_state[r] = np.einsum("si,ij,sj->s", ind, intra, ind)
            else:
                self.intra_state[r] = np.zeros(space.n_states)
            nc = np.zeros((len(self.neck_dets), n))
            for k, nd in enumerate(self.neck_dets):
                for j, d2 in enumerate(dets):
                    nc[k, j] = theta2.get((int(nd), d2), 0.0) + theta2.get((d2, int(nd)), 0.0)
            self.neck_cross[r] = nc

        if self.tree is not None:
            for r in self.tree.order_down:
                par = self.tree.parent[r]
                if par is None:
                    continue
                pdets = self.spaces[par].det_ids
                cdets = self.spaces[r].det_ids
                t = np.zeros((len(pdets), len(cdets)))
                for i, d1 in enumerate(pdets):
                    for j, d2 in enumerate(cdets):
                        t[i, j] = theta2.get((d1, d2), 0.0) + theta2.get((d2, d1), 0.0)
                self.cross[r] = t

        n_neck = len(self.neck_dets)
        self.neck_intra = np.zeros((n_neck, n_neck))
        for i, d1 in enumerate(self.neck_dets):
            for j, d2 in enumerate(self.neck_dets):
                v = theta2.get((int(d1), int(d2)))
                if v:
                    self.neck_intra[i, j] = v

    @property
    def total_states(self) -> int:
        return sum(s.n_states for s in self.spaces.values())

    def context(self, lam, neck_subset) -> PricingContext:
        instance = self.instance
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (instance.n_detections,):
            raise InstanceError("lambda length must equal the detection count")
        if np.any(lam < 0):
            raise InstanceError("lambda must be nonnegative")
        neck = frozenset(int(d) for d in neck_subset)
        for d in neck:
            if d not in self._neck_pos:
                raise InstanceError(f"detection {d} is not a neck detection")

        neck_idx = np.array(sorted(self._neck_pos[d] for d in neck), dtype=int)
        psi: dict[int, np.ndarray] = {}
        for r in instance.non_neck_parts:
            space = self.spaces[r]
            dets = space.det_ids
            if len(dets) == 0:
                psi[r] = self.intra_state[r].copy()
                continue
            vec = self.theta1_local[r] + lam[list(dets)]
            if len(neck_idx):
                vec = vec + self.neck_cross[r][neck_idx].sum(axis=0)
            psi[r] = space.indicator @ vec + self.intra_state[r]

        const = instance.theta0
        for d in neck:
            const += instance.theta1[d] + float(lam[d])
        if len(neck_idx):
            const += float(self.neck_intra[np.ix_(neck_idx, neck_idx)].sum())
        return PricingContext(lam=lam, neck_subset=neck, psi=psi, const=const)

    def phi_column(self, part: int, parent_state: int) -> np.ndarray:
        """Edge cost of every state of ``part`` against one parent state."""
        par = self.tree.parent[part]
        w = self.spaces[par].indicator[parent_state] @ self.cross[part]
        return self.spaces[part].indicator @ w


def build_pricing_model(instance: ProblemInstance, state_cap: int = DEFAULT_STATE_CAP) -> PricingModel:
    return PricingModel(instance, state_cap)
