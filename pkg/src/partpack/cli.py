"""Command-line entry points: gen, solve, verify, oracle, and bench."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .bench import default_suite, load_suite, run_benchmark, write_report_csv
from .instance import (
    GeneratorConfig,
    InstanceError,
    ProblemInstance,
    generate_instance,
    load_instance,
    save_instance,
)
from .master import (
    SolverConfig,
    SolverError,
    icg_solve,
    solution_to_dict,
    verify_solution,
)
from .oracle import brute_force_mwsp
from .states import DEFAULT_STATE_CAP


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        engine=args.engine,
        neck_mode=args.neck_mode,
        state_cap=args.state_cap,
    )


def _cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    if args.theta0_override is not None:
        instance = dataclasses.replace(instance, theta0=args.theta0_override)
    result = icg_solve(instance, _solver_config(args))
    doc = solution_to_dict(result)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    else:
        json.dump(doc, sys.stdout, indent=1)
        print()
    cert = "certified optimal" if result.certificate else f"gap {result.integrality_gap:.3%}"
    print(
        f"objective {result.objective:.6f} ({len(result.poses)} poses, "
        f"lp {result.lp_objective:.6f}, {cert})",
        file=sys.stderr,
    )
    return 0


def _cmd_gen(args) -> int:
    config = GeneratorConfig(
        n_parts=args.parts,
        dets_per_part=args.dets_per_part,
        theta0=args.theta0,
        theta2_density=args.density,
    )
    instance = generate_instance(config, args.seed)
    save_instance(instance, args.out)
    print(f"wrote {args.out}: {instance.n_parts} parts, {instance.n_detections} detections", file=sys.stderr)
    return 0


def _cmd_bench(args) -> int:
    suite = load_suite(args.suite) if args.suite else default_suite()

    def progress(row):
        print(
            f"{row.instance}: dp {row.dp_ms:.1f} ms, nbd {row.nbd_ms:.1f} ms, "
            f"speedup {row.speedup:.2f}, calls {row.calls}, equal {row.equal}",
            file=sys.stderr,
        )

    report = run_benchmark(suite, progress=progress)
    write_report_csv(report, args.out)
    made = [args.out]
    if not args.no_figures:
        from .plots import render_bench_figures

        made += render_bench_figures(report, args.out)
    for tier, med in report.tier_median_speedup.items():
        print(f"tier {tier}: median speedup {med:.2f}", file=sys.stderr)
    print(
        f"totals: dp {report.total_dp_ms:.1f} ms, nbd {report.total_nbd_ms:.1f} ms; wrote {', '.join(made)}",
        file=sys.stderr,
    )
    if not report.all_equal:
        name, it, ctx = report.first_mismatch
        print(f"COST MISMATCH at instance {name}, iteration {it}, context {ctx}", file=sys.stderr)
        return 1
    return 0


def _cmd_verify(args) -> int:
    instance = load_instance(args.instance)
    with open(args.solution) as fh:
        solution = json.load(fh)
    report = verify_solution(instance, solution)
    if report.ok:
        print("solution verified: poses disjoint, costs and bounds consistent")
        return 0
    for issue in report.issues:
        print(f"FAIL: {issue}")
    return 1


def _cmd_oracle(args) -> int:
    instance = load_instance(args.instance)
    config = SolverConfig(neck_mode=args.neck_mode, state_cap=args.state_cap)
    objective, poses = brute_force_mwsp(instance, config)
    json.dump({"objective": objective, "poses": poses}, sys.stdout, indent=1)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partpack", description="Minimum-weight set packing over part detections")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve an instance by column generation")
    p.add_argument("instance")
    p.add_argument("--engine", choices=["nbd", "dp", "both"], default="nbd")
    p.add_argument("--neck-mode", choices=["one", "powerset"], default="one")
    p.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP)
    p.add_argument("--theta0-override", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--parts", type=int, required=True)
    p.add_argument("--dets-per-part", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--theta0", type=float, default=2.0)
    p.add_argument("--density", type=float, default=0.3)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("bench", help="time both pricing engines over a suite")
    p.add_argument("--suite", default=None, help="suite JSON (defaults to the built-in three-tier suite)")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("verify", help="re-check a solution file against its instance")
    p.add_argument("instance")
    p.add_argument("solution")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("oracle", help="exact brute-force solve of a small instance")
    p.add_argument("instance")
    p.add_argument("--neck-mode", choices=["one", "powerset"], default="one")
    p.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP)
    p.set_defaults(func=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InstanceError, SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
