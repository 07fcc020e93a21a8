"""Benchmark harness comparing the two pricing engines.

Each instance is solved twice with identical configuration, once per
engine.  Both runs are deterministic, so their pricing-call sequences
align one-to-one; the harness records per-engine pricing wall time only
(master solves are excluded) and checks that every aligned pair of calls
returned the same reduced cost.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field, replace

from .instance import GeneratorConfig, generate_instance
from .master import SolverConfig, icg_solve

__all__ = [
    "BenchTier",
    "BenchSuite",
    "BenchRow",
    "BenchReport",
    "default_suite",
    "load_suite",
    "run_benchmark",
    "write_report_csv",
]

COST_EQUAL_TOL = 1e-6


@dataclass(frozen=True)
class BenchTier:
    parts: int
    dets_per_part: int
    instances: int
    base_seed: int
    state_cap: int

    @property
    def name(self) -> str:
        return f"p{self.parts}d{self.dets_per_part}"


@dataclass(frozen=True)
class BenchSuite:
    tiers: tuple[BenchTier, ...]
    neck_mode: str = "one"
    theta0: float = 2.0
    theta1_range: tuple[float, float] = (-9.0, 3.0)
    theta2_range: tuple[float, float] = (-3.0, 1.5)
    theta2_density: float = 0.3


def default_suite(instances_per_tier: int = 10) -> BenchSuite:
    """Three tiers of five-part instances with 8, 12, and 16 detections per
    part.  State caps grow with the tier so the per-part spaces do too."""
    return BenchSuite(
        tiers=(
            BenchTier(parts=5, dets_per_part=8, instances=instances_per_tier, base_seed=8000, state_cap=300),
            BenchTier(parts=5, dets_per_part=12, instances=instances_per_tier, base_seed=12000, state_cap=1600),
            BenchTier(parts=5, dets_per_part=16, instances=instances_per_tier, base_seed=16000, state_cap=4000),
        )
    )


_SUITE_FIELDS = {"tiers", "neck_mode", "theta0", "theta1_range", "theta2_range", "theta2_density"}
_TIER_FIELDS = {"parts", "dets_per_part", "instances", "base_seed", "state_cap"}


def load_suite(path) -> BenchSuite:
    with open(path) as fh:
        data = json.load(fh)
    unknown = set(data) - _SUITE_FIELDS
    if unknown:
        raise ValueError(f"suite: unknown field(s) {sorted(unknown)}")
    if "tiers" not in data or not isinstance(data["tiers"], list) or not data["tiers"]:
        raise ValueError("suite: 'tiers' must be a nonempty list")
    tiers = []
    for k, entry in enumerate(data["tiers"]):
        unknown = set(entry) - _TIER_FIELDS
        if unknown:
            raise ValueError(f"suite.tiers[{k}]: unknown field(s) {sorted(unknown)}")
        missing = _TIER_FIELDS - set(entry)
        if missing:
            raise ValueError(f"suite.tiers[{k}]: missing field(s) {sorted(missing)}")
        tiers.append(BenchTier(**{k2: entry[k2] for k2 in _TIER_FIELDS}))
    kwargs = {}
    for key in ("neck_mode", "theta0", "theta2_density"):
        if key in data:
            kwargs[key] = data[key]
    for key in ("theta1_range", "theta2_range"):
        if key in data:
            kwargs[key] = tuple(data[key])
    return BenchSuite(tiers=tuple(tiers), **kwargs)


@dataclass
class BenchRow:
    instance: str
    tier: str
    dp_ms: float
    nbd_ms: float
    speedup: float
    calls: int
    equal: bool


@dataclass
class BenchReport:
    rows: list[BenchRow]
    total_dp_ms: float
    total_nbd_ms: float
    tier_median_speedup: dict[str, float]
    max_speedup: float
    first_mismatch: tuple[str, int, tuple] | None = None

    @property
    def all_equal(self) -> bool:
        return all(r.equal for r in self.rows)


def _pricing_trace(result, key: str):
    """(iteration, context, cost, seconds) per pricing call, in call order."""
    out = []
    for entry in result.pricing_log:
        stats = entry[f"{key}_stats"]
        out.append((entry["iteration"], entry["context"], entry["cost"], stats["wall_time"]))
    return out


def run_benchmark(suite: BenchSuite, progress=None) -> BenchReport:
    """Run every suite instance with both engines and collect the report.

    Instances run sequentially for timing fidelity.  A cost mismatch is
    recorded on the row (``equal=False``) and as ``first_mismatch``; the
    caller decides whether that is fatal.
    """
    rows: list[BenchRow] = []
    mismatch = None
    for tier in suite.tiers:
        gen = GeneratorConfig(
            n_parts=tier.parts,
            dets_per_part=tier.dets_per_part,
            theta0=suite.theta0,
            theta1_range=suite.theta1_range,
            theta2_range=suite.theta2_range,
            theta2_density=suite.theta2_density,
        )
        for k in range(tier.instances):
            seed = tier.base_seed + k
            name = f"{tier.name}s{seed}"
            instance = generate_instance(gen, seed)
            base = SolverConfig(neck_mode=suite.neck_mode, state_cap=tier.state_cap)
            res_dp = icg_solve(instance, replace(base, engine="dp"))
            res_nbd = icg_solve(instance, replace(base, engine="nbd"))
            trace_dp = _pricing_trace(res_dp, "dp")
            trace_nbd = _pricing_trace(res_nbd, "nbd")
            dp_ms = 1000.0 * sum(t for *_, t in trace_dp)
            nbd_ms = 1000.0 * sum(t for *_, t in trace_nbd)
            equal = len(trace_dp) == len(trace_nbd)
            if equal:
                for (it_d, ctx_d, cost_d, _), (it_n, ctx_n, cost_n, _) in zip(trace_dp, trace_nbd):
                    if it_d != it_n or ctx_d != ctx_n or abs(cost_d - cost_n) > COST_EQUAL_TOL:
                        equal = False
                        if mismatch is None:
                            mismatch = (name, it_d, ctx_d)
                        break
            elif mismatch is None:
                mismatch = (name, -1, ())
            rows.append(
                BenchRow(
                    instance=name,
                    tier=tier.name,
                    dp_ms=dp_ms,
                    nbd_ms=nbd_ms,
                    speedup=dp_ms / nbd_ms if nbd_ms > 0 else float("inf"),
                    calls=len(trace_dp),
                    equal=equal,
                )
            )
            if progress is not None:
                progress(rows[-1])
    medians = {}
    for tier in suite.tiers:
        speedups = [r.speedup for r in rows if r.tier == tier.name]
        if speedups:
            medians[tier.name] = statistics.median(speedups)
    return BenchReport(
        rows=rows,
        total_dp_ms=sum(r.dp_ms for r in rows),
        total_nbd_ms=sum(r.nbd_ms for r in rows),
        tier_median_speedup=medians,
        max_speedup=max((r.speedup for r in rows), default=0.0),
        first_mismatch=mismatch,
    )


def write_report_csv(report: BenchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "dp_ms", "nbd_ms", "speedup", "calls", "equal"])
        for r in report.rows:
            writer.writerow([r.instance, f"{r.dp_ms:.3f}", f"{r.nbd_ms:.3f}", f"{r.speedup:.3f}", r.calls, r.equal])
