"""Capped power-set state spaces and the potentials evaluated on them.

A state of a part is a subset of that part's detections.  States are
enumerated by increasing cardinality, lexicographically within each
cardinality group, starting from the empty set.  Whole cardinality groups
are added until the next group would push the count past the cap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .instance import InstanceError, ProblemInstance

__all__ = [
    "DEFAULT_STATE_CAP",
    "StateSpace",
    "build_state_space",
    "state_indicator",
    "PotentialTable",
    "psi_table",
    "phi_value",
]

DEFAULT_STATE_CAP = 50_000


@dataclass(frozen=True)
class StateSpace:
    """Enumerated detection subsets of one part.

    ``masks[s]`` holds state ``s`` as a bitmask over local detection
    indices; ``det_ids[i]`` maps local index ``i`` back to the global
    detection id.
    """

    part: int
    det_ids: tuple[int, ...]
    masks: np.ndarray  # (n_states,) uint64, read-only
    cap: int

    def __len__(self) -> int:
        return len(self.masks)

    @property
    def n_states(self) -> int:
        return len(self.masks)

    @cached_property
    def indicator(self) -> np.ndarray:
        """Dense 0/1 matrix of shape (n_states, n_local_detections)."""
        n = len(self.det_ids)
        if n == 0:
            return np.zeros((self.n_states, 0))
        bits = (self.masks[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & np.uint64(1)
        out = bits.astype(np.float64)
        out.setflags(write=False)
        return out

    @cached_property
    def local_index(self) -> dict[int, int]:
        return {d: i for i, d in enumerate(self.det_ids)}

    def state_set(self, s: int) -> frozenset[int]:
        """Global detection ids of state ``s``."""
        mask = int(self.masks[s])
        return frozenset(self.det_ids[i] for i in range(len(self.det_ids)) if mask >> i & 1)

    def index_of(self, dets) -> int:
        """State index of an exact detection subset; raises if not enumerated."""
        mask = 0
        for d in dets:
            mask |= 1 << self.local_index[d]
        hits = np.nonzero(self.masks == np.uint64(mask))[0]
        if len(hits) == 0:
            raise InstanceError(f"subset {sorted(dets)} is not in the state space of part {self.part}")
        return int(hits[0])


def build_state_space(instance: ProblemInstance, part: int, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """Enumerate the capped power set of a part's detections.

    The empty state is always present.  A cardinality group is added only
    if it fits wholly under ``cap``; the first group that does not fit
    terminates enumeration.
    """
    if cap < 1:
        raise InstanceError("state cap must be at least 1")
    if not (0 <= part < instance.n_parts):
        raise InstanceError(f"unknown part id {part}")
    dets = instance.dets_of_part[part]
    n = len(dets)
    if n > 63:
        raise InstanceError(f"part {part} has {n} detections; at most 63 are supported")

    masks: list[int] = [0]
    for k in range(1, n + 1):
        group = math.comb(n, k)
        if len(masks) + group > cap:
            break
        for combo in itertools.combinations(range(n), k):
            mask = 0
            for i in combo:
                mask |= 1 << i
            masks.append(mask)
    arr = np.array(masks, dtype=np.uint64)
    arr.setflags(write=False)
    return StateSpace(part=part, det_ids=dets, masks=arr, cap=cap)


def state_indicator(space: StateSpace, s: int, d: int) -> int:
    """1 iff detection ``d`` is included in state ``s``."""
    if not (0 <= s < space.n_states):
        raise InstanceError(f"state index {s} out of range for part {space.part}")
    if d not in space.local_index:
        raise InstanceError(f"detection {d} does not belong to part {space.part}")
    return int(space.masks[s]) >> space.local_index[d] & 1


@dataclass(frozen=True)
class PotentialTable:
    """Per-state unary-plus-intra-part potential of one part, for one pricing
    context (a multiplier vector and a fixed neck subset)."""

    part: int
    psi: np.ndarray
    neck_subset: frozenset[int]
    lam: np.ndarray


def psi_table(
    instance: ProblemInstance,
    part: int,
    space: StateSpace,
    lam,
    neck_subset,
) -> PotentialTable:
    """Evaluate, for every state ``s`` of ``part``: the unary costs plus
    multipliers of the included detections, the stored pairwise costs with
    both endpoints in ``s``, and the pairwise costs linking ``s`` to the
    fixed neck subset."""
    if part == instance.neck:
        raise InstanceError("psi tables are defined for non-neck parts only")
    lam = np.asarray(lam, dtype=float)
    neck = frozenset(neck_subset)
    ind = space.indicator
    dets = space.det_ids
    n = len(dets)

    unary = np.array([instance.theta1[d] + lam[d] for d in dets]) if n else np.zeros(0)

    intra = np.zeros((n, n))
    neck_link = np.zeros(n)
    for (d1, d2), v in instance.theta2.items():
        i = space.local_index.get(d1)
        j = space.local_index.get(d2)
        if i is not None and j is not None:
            intra[i, j] += v
        elif j is not None and d1 in neck:
            neck_link[j] += v
        elif i is not None and d2 in neck:
            neck_link[i] += v

    psi = ind @ (unary + neck_link) if n else np.zeros(space.n_states)
    if n:
        psi = psi + np.einsum("si,ij,sj->s", ind, intra, ind)
    return PotentialTable(part=part, psi=psi, neck_subset=neck, lam=lam)


def phi_value(
    instance: ProblemInstance,
    parent_space: StateSpace,
    child_space: StateSpace,
    parent_state: int,
    child_state: int,
) -> float:
    """Pairwise cost between a parent state and a child state: the sum of
    every stored pairwise term with one endpoint in each state."""
    p_set = parent_space.state_set(parent_state)
    c_set = child_space.state_set(child_state)
    total = 0.0
    for (d1, d2), v in instance.theta2.items():
        if (d1 in p_set and d2 in c_set) or (d1 in c_set and d2 in p_set):
            total += v
    return total
