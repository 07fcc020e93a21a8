"""Problem instances: detections, parts, the augmented part tree, and pose costs.

An instance groups *detections* into *parts*.  One part is the neck; the
remaining parts form a rooted tree, and the neck is implicitly linked to
every other part.  Pairwise costs are stored sparsely as an ordered-pair
map and may only connect detections of the same part, of a parent part to
a child part, or of the neck to any non-neck part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "InstanceError",
    "InstanceFormatError",
    "ProblemInstance",
    "Pose",
    "ValidationIssue",
    "validate_instance",
    "pose_cost",
    "reduced_cost",
    "GeneratorConfig",
    "generate_instance",
    "instance_to_dict",
    "instance_from_dict",
    "save_instance",
    "load_instance",
]


class InstanceError(ValueError):
    """Malformed instance data or an operation on detections that do not exist."""


class InstanceFormatError(InstanceError):
    """Raised while parsing the JSON instance format; message carries the field path."""


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable description of one part-grouping problem.

    Detection ids are dense integers ``0..n_detections-1`` and part ids are
    dense integers ``0..n_parts-1``; all array-like fields are indexed by
    those ids.  ``tree_edges`` lists ``(parent, child)`` pairs over the
    non-neck parts only.  ``root`` is the tree root, or the neck id in the
    degenerate case of an instance with no non-neck parts.
    """

    part_names: tuple[str, ...]
    neck: int
    root: int
    tree_edges: tuple[tuple[int, int], ...]
    part_of: tuple[int, ...]
    theta0: float
    theta1: tuple[float, ...]
    theta2: dict[tuple[int, int], float]
    metadata: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_parts(self) -> int:
        return len(self.part_names)

    @property
    def n_detections(self) -> int:
        return len(self.part_of)

    @property
    def parts(self) -> range:
        return range(self.n_parts)

    @property
    def detections(self) -> range:
        return range(self.n_detections)

    @cached_property
    def dets_of_part(self) -> tuple[tuple[int, ...], ...]:
        """Detections of each part, ascending, indexed by part id."""
        buckets: list[list[int]] = [[] for _ in range(self.n_parts)]
        for d, r in enumerate(self.part_of):
            if 0 <= r < self.n_parts:
                buckets[r].append(d)
        return tuple(tuple(b) for b in buckets)

    @cached_property
    def neck_detections(self) -> tuple[int, ...]:
        return self.dets_of_part[self.neck] if 0 <= self.neck < self.n_parts else ()

    @cached_property
    def children_of(self) -> tuple[tuple[int, ...], ...]:
        """Tree children of each part (empty tuple for the neck and for leaves)."""
        kids: list[list[int]] = [[] for _ in range(self.n_parts)]
        for parent, child in self.tree_edges:
            kids[parent].append(child)
        return tuple(tuple(sorted(k)) for k in kids)

    @cached_property
    def non_neck_parts(self) -> tuple[int, ...]:
        return tuple(r for r in self.parts if r != self.neck)

    def parent_of(self, part: int) -> int | None:
        for p, c in self.tree_edges:
            if c == part:
                return p
        return None


@dataclass(frozen=True)
class Pose:
    """A candidate grouping: one set of detection ids."""

    detections: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "detections", frozenset(self.detections))

    def sorted_ids(self) -> list[int]:
        return sorted(self.detections)


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - convenience only
        return f"[{self.code}] {self.message}"


def _as_detection_set(pose) -> frozenset[int]:
    if isinstance(pose, Pose):
        return pose.detections
    return frozenset(pose)


def validate_instance(instance: ProblemInstance) -> list[ValidationIssue]:
    """Check all structural invariants; an empty list means the instance is valid."""
    issues: list[ValidationIssue] = []
    n_parts = instance.n_parts
    n_det = instance.n_detections

    if n_parts == 0:
        issues.append(ValidationIssue("parts", "instance has no parts"))
        return issues
    if not (0 <= instance.neck < n_parts):
        issues.append(ValidationIssue("neck", f"neck part {instance.neck} out of range"))
        return issues

    # Every detection must map to exactly one existing part.
    for d, r in enumerate(instance.part_of):
        if not isinstance(r, int) or not (0 <= r < n_parts):
            issues.append(ValidationIssue("surjection", f"detection {d} has no valid part assignment ({r!r})"))

    # Non-neck parts must form a single tree rooted at `root`.
    non_neck = set(instance.non_neck_parts)
    if non_neck:
        if instance.root == instance.neck or not (0 <= instance.root < n_parts):
            issues.append(ValidationIssue("tree", f"root {instance.root} is not a non-neck part"))
        else:
            parents: dict[int, int] = {}
            ok = True
            for parent, child in instance.tree_edges:
                if parent not in non_neck or child not in non_neck:
                    issues.append(ValidationIssue("tree", f"edge ({parent},{child}) leaves the non-neck part set"))
                    ok = False
                    continue
                if child in parents or child == instance.root:
                    issues.append(ValidationIssue("tree", f"part {child} has more than one parent or is the root"))
                    ok = False
                parents[child] = parent
            if ok:
                # Reachability from the root must cover every non-neck part.
                seen = {instance.root}
                frontier = [instance.root]
                while frontier:
                    r = frontier.pop()
                    for c in instance.children_of[r]:
                        if c in seen:
                            issues.append(ValidationIssue("tree", f"part {c} reached twice"))
                        else:
                            seen.add(c)
                            frontier.append(c)
                if seen != non_neck:
                    missing = sorted(non_neck - seen)
                    issues.append(ValidationIssue("tree", f"parts {missing} not connected to the root"))
    else:
        if instance.root != instance.neck:
            issues.append(ValidationIssue("tree", "instance with no non-neck parts must use the neck as root"))
        if instance.tree_edges:
            issues.append(ValidationIssue("tree", "tree edges present but there are no non-neck parts"))

    if len(instance.theta1) != n_det:
        issues.append(ValidationIssue("costs", f"theta1 has {len(instance.theta1)} entries for {n_det} detections"))

    if not math.isfinite(instance.theta0):
        issues.append(ValidationIssue("costs", "theta0 is not finite"))
    for d, v in enumerate(instance.theta1):
        if not math.isfinite(v):
            issues.append(ValidationIssue("costs", f"theta1[{d}] is not finite"))

    # Pairwise sparsity: same part, parent->child in the tree, or neck->non-neck.
    children = instance.children_of
    for (d1, d2), v in instance.theta2.items():
        if not (0 <= d1 < n_det and 0 <= d2 < n_det):
            issues.append(ValidationIssue("costs", f"theta2 pair ({d1},{d2}) references an unknown detection"))
            continue
        if not math.isfinite(v):
            issues.append(ValidationIssue("costs", f"theta2[{d1},{d2}] is not finite"))
        if v == 0.0:
            continue
        r1, r2 = instance.part_of[d1], instance.part_of[d2]
        if r1 == r2:
            continue
        if r1 == instance.neck and r2 != instance.neck:
            continue
        if 0 <= r1 < n_parts and r2 in children[r1]:
            continue
        issues.append(
            ValidationIssue(
                "tree sparsity",
                f"theta2[{d1},{d2}]={v} links part {r1} to part {r2}, which are not "
                "tree-adjacent (parent to child) and neither is the neck parent",
            )
        )

    return issues


def pose_cost(instance: ProblemInstance, pose) -> float:
    """Cost of one pose: the constant offset, its unary terms, and every stored
    ordered pairwise term whose two detections are both in the pose."""
    dets = _as_detection_set(pose)
    for d in dets:
        if not (0 <= d < instance.n_detections):
            raise InstanceError(f"unknown detection id {d}")
    total = instance.theta0
    for d in dets:
        total += instance.theta1[d]
    for (d1, d2), v in instance.theta2.items():
        if d1 in dets and d2 in dets:
            total += v
    return total


def reduced_cost(instance: ProblemInstance, pose, lam) -> float:
    """Pose cost plus the multipliers of its detections.

    ``lam`` is indexed by detection id and must be entrywise nonnegative.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (instance.n_detections,):
        raise InstanceError(f"lambda has shape {lam.shape}, expected ({instance.n_detections},)")
    if np.any(lam < 0):
        raise InstanceError("lambda must be nonnegative")
    dets = _as_detection_set(pose)
    total = pose_cost(instance, dets)
    for d in dets:
        total += float(lam[d])
    return total


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the random-instance generator.

    ``dets_per_part`` may be a single count applied to every part or a
    per-part sequence.  ``theta1_range`` is biased negative by default so
    that nontrivial poses exist.
    """

    n_parts: int
    dets_per_part: int | Sequence[int]
    theta0: float = 2.0
    theta1_range: tuple[float, float] = (-9.0, 3.0)
    theta2_range: tuple[float, float] = (-3.0, 1.5)
    theta2_density: float = 0.3


def _det_counts(config: GeneratorConfig) -> list[int]:
    if isinstance(config.dets_per_part, int):
        return [config.dets_per_part] * config.n_parts
    counts = list(config.dets_per_part)
    if len(counts) != config.n_parts:
        raise InstanceError("dets_per_part sequence length must equal n_parts")
    return counts


def generate_instance(config: GeneratorConfig, seed: int) -> ProblemInstance:
    """Deterministically generate a random instance.

    Part 0 is the neck.  The non-neck parts form a random tree rooted at
    part 1.  Pairwise costs are drawn only on pairs the sparsity rule
    allows.  Degenerate configurations (no parts, or no neck detections)
    are flagged in the instance metadata rather than rejected.
    """
    rng = np.random.default_rng(seed)
    warnings: list[str] = []
    if config.n_parts == 0:
        warnings.append("zero parts")
        return ProblemInstance(
            part_names=(),
            neck=0,
            root=0,
            tree_edges=(),
            part_of=(),
            theta0=config.theta0,
            theta1=(),
            theta2={},
            metadata={"seed": seed, "warnings": warnings},
        )

    counts = _det_counts(config)
    neck = 0
    names = tuple("neck" if r == neck else f"part{r}" for r in range(config.n_parts))
    root = 1 if config.n_parts > 1 else neck

    edges: list[tuple[int, int]] = []
    for r in range(2, config.n_parts):
        parent = int(rng.integers(1, r))
        edges.append((parent, r))

    part_of: list[int] = []
    for r in range(config.n_parts):
        part_of.extend([r] * counts[r])
    n_det = len(part_of)

    lo1, hi1 = config.theta1_range
    theta1 = tuple(float(v) for v in rng.uniform(lo1, hi1, size=n_det))

    dets_of = [[] for _ in range(config.n_parts)]
    for d, r in enumerate(part_of):
        dets_of[r].append(d)

    candidates: list[tuple[int, int]] = []
    for r in range(config.n_parts):
        ds = dets_of[r]
        for i in range(len(ds)):
            for j in range(i + 1, len(ds)):
                candidates.append((ds[i], ds[j]))
    for parent, child in edges:
        for d1 in dets_of[parent]:
            for d2 in dets_of[child]:
                candidates.append((d1, d2))
    for r in range(config.n_parts):
        if r == neck:
            continue
        for d1 in dets_of[neck]:
            for d2 in dets_of[r]:
                candidates.append((d1, d2))

    lo2, hi2 = config.theta2_range
    theta2: dict[tuple[int, int], float] = {}
    for pair in candidates:
        if rng.uniform() < config.theta2_density:
            theta2[pair] = float(rng.uniform(lo2, hi2))

    if counts[neck] == 0:
        warnings.append("zero neck detections")

    metadata = {"seed": seed}
    if warnings:
        metadata["warnings"] = warnings

    return ProblemInstance(
        part_names=names,
        neck=neck,
        root=root,
        tree_edges=tuple(edges),
        part_of=tuple(part_of),
        theta0=float(config.theta0),
        theta1=theta1,
        theta2=theta2,
        metadata=metadata,
    )


# --------------------------------------------------------------------------
# JSON format.  Field names are fixed; unknown fields are rejected.
# --------------------------------------------------------------------------

_TOP_FIELDS = {"parts", "tree_edges", "root", "detections", "theta0", "theta1", "theta2"}
_PART_FIELDS = {"id", "name", "is_neck"}
_DET_FIELDS = {"id", "part"}


def instance_to_dict(instance: ProblemInstance) -> dict:
    return {
        "parts": [
            {"id": r, "name": instance.part_names[r], "is_neck": r == instance.neck}
            for r in instance.parts
        ],
        "tree_edges": [[p, c] for p, c in instance.tree_edges],
        "root": instance.root,
        "detections": [{"id": d, "part": instance.part_of[d]} for d in instance.detections],
        "theta0": instance.theta0,
        "theta1": {str(d): instance.theta1[d] for d in instance.detections},
        "theta2": [[d1, d2, v] for (d1, d2), v in sorted(instance.theta2.items())],
    }


def _fail(path: str, message: str):
    raise InstanceFormatError(f"{path}: {message}")


def _require_fields(obj: Mapping, fields: set[str], path: str) -> None:
    if not isinstance(obj, Mapping):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    unknown = set(obj) - fields
    if unknown:
        _fail(path, f"unknown field(s) {sorted(unknown)}")
    missing = fields - set(obj)
    if missing:
        _fail(path, f"missing field(s) {sorted(missing)}")


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    return value


def _as_num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    return float(value)


def instance_from_dict(data: Mapping) -> ProblemInstance:
    """Parse the JSON instance format, then run the structural validator.

    Any violation is raised as :class:`InstanceFormatError` naming the
    offending field.
    """
    _require_fields(data, _TOP_FIELDS, "instance")

    parts_raw = data["parts"]
    if not isinstance(parts_raw, list):
        _fail("parts", "expected a list")
    names: dict[int, str] = {}
    neck: int | None = None
    for k, entry in enumerate(parts_raw):
        path = f"parts[{k}]"
        _require_fields(entry, _PART_FIELDS, path)
        pid = _as_int(entry["id"], path + ".id")
        if pid in names:
            _fail(path + ".id", f"duplicate part id {pid}")
        if not isinstance(entry["name"], str):
            _fail(path + ".name", "expected a string")
        if not isinstance(entry["is_neck"], bool):
            _fail(path + ".is_neck", "expected a boolean")
        names[pid] = entry["name"]
        if entry["is_neck"]:
            if neck is not None:
                _fail(path + ".is_neck", "more than one neck part")
            neck = pid
    n_parts = len(names)
    if sorted(names) != list(range(n_parts)):
        _fail("parts", f"part ids must be dense 0..{n_parts - 1}")
    if neck is None:
        _fail("parts", "no part is flagged is_neck")

    edges_raw = data["tree_edges"]
    if not isinstance(edges_raw, list):
        _fail("tree_edges", "expected a list")
    edges: list[tuple[int, int]] = []
    for k, entry in enumerate(edges_raw):
        path = f"tree_edges[{k}]"
        if not isinstance(entry, list) or len(entry) != 2:
            _fail(path, "expected a [parent, child] pair")
        edges.append((_as_int(entry[0], path), _as_int(entry[1], path)))

    root = _as_int(data["root"], "root")

    dets_raw = data["detections"]
    if not isinstance(dets_raw, list):
        _fail("detections", "expected a list")
    part_of_map: dict[int, int] = {}
    for k, entry in enumerate(dets_raw):
        path = f"detections[{k}]"
        _require_fields(entry, _DET_FIELDS, path)
        did = _as_int(entry["id"], path + ".id")
        if did in part_of_map:
            _fail(path + ".id", f"duplicate detection id {did}")
        part_of_map[did] = _as_int(entry["part"], path + ".part")
    n_det = len(part_of_map)
    if sorted(part_of_map) != list(range(n_det)):
        _fail("detections", f"detection ids must be dense 0..{n_det - 1}")

    theta0 = _as_num(data["theta0"], "theta0")

    theta1_raw = data["theta1"]
    if not isinstance(theta1_raw, Mapping):
        _fail("theta1", "expected an object mapping detection id to cost")
    theta1 = [0.0] * n_det
    seen: set[int] = set()
    for key, value in theta1_raw.items():
        path = f"theta1.{key}"
        try:
            d = int(key)
        except (TypeError, ValueError):
            _fail(path, "key is not a detection id")
        if not (0 <= d < n_det):
            _fail(path, f"unknown detection id {d}")
        if d in seen:
            _fail(path, "duplicate key")
        seen.add(d)
        theta1[d] = _as_num(value, path)
    if len(seen) != n_det:
        missing = sorted(set(range(n_det)) - seen)
        _fail("theta1", f"missing entries for detections {missing}")

    theta2_raw = data["theta2"]
    if not isinstance(theta2_raw, list):
        _fail("theta2", "expected a list of [d1, d2, value] triples")
    theta2: dict[tuple[int, int], float] = {}
    for k, entry in enumerate(theta2_raw):
        path = f"theta2[{k}]"
        if not isinstance(entry, list) or len(entry) != 3:
            _fail(path, "expected a [d1, d2, value] triple")
        d1 = _as_int(entry[0], path)
        d2 = _as_int(entry[1], path)
        v = _as_num(entry[2], path)
        if (d1, d2) in theta2:
            _fail(path, f"duplicate pair ({d1},{d2})")
        theta2[(d1, d2)] = v

    instance = ProblemInstance(
        part_names=tuple(names[r] for r in range(n_parts)),
        neck=neck,
        root=root,
        tree_edges=tuple(edges),
        part_of=tuple(part_of_map[d] for d in range(n_det)),
        theta0=theta0,
        theta1=tuple(theta1),
        theta2=theta2,
    )
    issues = validate_instance(instance)
    if issues:
        summary = "; ".join(str(i) for i in issues[:5])
        raise InstanceFormatError(f"instance fails validation: {summary}")
    return instance


def save_instance(instance: ProblemInstance, path) -> None:
    import json

    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")


def load_instance(path) -> ProblemInstance:
    import json

    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(f"malformed JSON: {exc}") from exc
    return instance_from_dict(data)
