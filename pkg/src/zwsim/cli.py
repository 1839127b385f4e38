"""Command-line front end.

    zwsim simulate <scenario> [--seed N] [--trace-out F] [--report-out F]
                                [--figures-out DIR]
    zwsim discover <scenario> [--seed N]
    zwsim budget --nodes N --timeout T

<scenario> is a path or the name of a bundled scenario. The seed falls back
to the ZWSIM_SEED environment variable, then to 0. Exit codes: 0 success,
1 scenario or usage problem, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import attack, report, sniff
from .scenario import (
    ScenarioError,
    bundled_scenarios,
    build_simulation,
    load_scenario,
    run_scenario,
)


def _default_seed() -> int:
    return int(os.environ.get("ZWSIM_SEED", "0"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zwsim",
        description="Discrete-event simulator of nonce-handshake blocking attacks "
                    "on a Z-Wave-style home-automation network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write trace/report")
    sim.add_argument("scenario", help="scenario file or bundled name "
                                      f"({', '.join(bundled_scenarios())})")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--trace-out", metavar="FILE", default=None)
    sim.add_argument("--report-out", metavar="FILE", default=None)
    sim.add_argument("--figures-out", metavar="DIR", default=None,
                     help="also render PNG figures of the run into DIR")

    disc = sub.add_parser("discover", help="probe which ids the gateway answers for")
    disc.add_argument("scenario")
    disc.add_argument("--seed", type=int, default=None)
    disc.add_argument("--id-range", default="2:233", metavar="LO:HI",
                      help="half-open candidate range (default 2:233)")

    budget = sub.add_parser("budget", help="worst-case frames needed to block "
                                           "when targeting every included id")
    budget.add_argument("--nodes", type=int, required=True)
    budget.add_argument("--timeout", type=float, required=True)
    return parser


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else _default_seed()
    result = run_scenario(scenario, seed)
    if args.trace_out:
        sniff.export_csv(result.simulation.trace.records, args.trace_out)
    if args.report_out:
        report.write_report(args.report_out, result.report)
    if args.figures_out:
        written = report.render_figures(
            result.simulation.trace.records, result.report, args.figures_out
        )
        result.report["figures"] = ",".join(str(p) for p in written)
    sys.stdout.write(report.render_report(result.report))
    return 0


def _cmd_discover(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else _default_seed()
    lo, _, hi = args.id_range.partition(":")
    sim = build_simulation(scenario, seed)
    classification = attack.find_online_nodes(
        sim.medium, sim.attacker, ids=range(int(lo), int(hi))
    )
    responding = {i for i, v in classification.items() if v == "responding"}
    observed = attack.observed_traffic_sources(sim.trace.records)
    failed = attack.identify_failed(responding, observed)
    for node_id in sorted(classification):
        print(f"id {node_id}: {classification[node_id]}")
    print(f"responding = {','.join(str(i) for i in sorted(responding)) or '-'}")
    print(f"observed_traffic = {','.join(str(i) for i in sorted(observed)) or '-'}")
    print(f"failed_candidates = {','.join(str(i) for i in sorted(failed)) or '-'}")
    return 0


def _cmd_budget(args) -> int:
    frames, per = attack.worst_case_budget(args.nodes, args.timeout)
    print(f"{frames} frames per {per:g} s")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "discover":
            return _cmd_discover(args)
        return _cmd_budget(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
