"""Command line: ``swapforge run`` and ``swapforge batch``.

Exit codes for ``run``: 0 when every conforming party is safe, 1 when the
audit finds a safety violation, 2 when the trade is infeasible.  Scenario
and usage errors exit with 3.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .behavior import Behavior, BehaviorError
from .clearing import describe_plan
from .engine import execute, prepare
from .metrics import STRATEGIES, parallel_run, run_batch
from .scenario import BUNDLED, ScenarioError, load_scenario

EXIT_SAFE = 0
EXIT_VIOLATION = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 3

log = logging.getLogger("swapforge")


def _party_behavior(text: str, sep: str) -> tuple[str, str]:
    party, found, rest = text.partition(sep)
    if not found or not party or not rest:
        raise argparse.ArgumentTypeError(f"expected PARTY{sep}..., got {text!r}")
    return party, rest


def crash_arg(text: str) -> tuple[str, Behavior]:
    party, at = _party_behavior(text, "@")
    try:
        return party, Behavior.parse(f"crash@{at}")
    except BehaviorError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def behavior_arg(text: str) -> tuple[str, Behavior]:
    party, spec = _party_behavior(text, "=")
    try:
        return party, Behavior.parse(spec)
    except BehaviorError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swapforge", description="Robust multi-party atomic swap simulator.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="clear the market and run one protocol execution")
    run.add_argument("scenario", help=f"scenario file or bundled name ({', '.join(BUNDLED)})")
    run.add_argument("--protocol", choices=("base", "A", "B"), help="defaults to the scenario's choice")
    run.add_argument("--seed", type=int, help="overrides the scenario seed")
    run.add_argument(
        "--crash", type=crash_arg, action="append", default=[], metavar="P@PHASE",
        help="crash party P at escrow, redeem or a round number (repeatable)",
    )
    run.add_argument(
        "--behavior", type=behavior_arg, action="append", default=[], metavar="P=SPEC",
        help="any deviation, e.g. Alice=withhold_hashkey:1 (repeatable)",
    )
    run.add_argument("--q", type=float, help="draw scheme failures with success probability Q, as one batch run does")
    run.add_argument("--dump-plan", action="store_true", help="print the cleared market plan")
    run.add_argument("--trace", type=Path, metavar="FILE", help="write the NDJSON ledger trace")
    run.add_argument("--verdicts", type=Path, metavar="FILE", help="write per-party verdicts as JSON")
    run.add_argument("--report", type=Path, metavar="FILE", help="write a CSV report and a PNG figure beside it")

    batch = sub.add_parser("batch", help="Monte-Carlo comparison of sequential retries, A and B")
    batch.add_argument("scenario")
    batch.add_argument("--runs", type=int, required=True)
    batch.add_argument("--seed", type=int, required=True)
    batch.add_argument("--q", type=float, help="per-alternative success probability (scenario default otherwise)")
    batch.add_argument("--strategies", nargs="+", choices=STRATEGIES, default=list(STRATEGIES))
    batch.add_argument("--report", type=Path, metavar="FILE", help="write a CSV report and a PNG figure beside it")
    return ap


def _verdicts_json(report) -> dict:
    return {
        "feasible": report.feasible,
        "completion_round": report.completion_round,
        "completed_schemes": report.completed_schemes,
        "assignment": {k: report.assignment[k] for k in sorted(report.assignment)},
        "parties": {
            x: {
                "conforming": v.conforming,
                "safety_ok": v.safety_ok,
                "liveness_ok": v.liveness_ok,
                "collateral": v.collateral,
                "completion_round": v.completion_round,
                "paid": list(v.paid),
                "received": list(v.received),
            }
            for x, v in sorted(report.verdicts.items())
        },
        "violations": {
            "safety": report.safety_violations,
            "conservation": report.conservation_violations,
            "double_trigger": report.double_triggers,
            "unauthorized_unlock": report.unauthorized_unlocks,
            "overpay": report.overpay_violations,
            "level": report.level_violations,
            "level_split": report.level_splits,
        },
    }


def cmd_run(args, out) -> int:
    scenario = load_scenario(args.scenario)
    behaviors = dict(scenario.behaviors)
    for party, b in list(args.crash) + list(args.behavior):
        if party not in scenario.graph.vertices:
            raise ScenarioError(f"unknown party {party!r}")
        behaviors[party] = b
    scenario = scenario.with_behaviors(behaviors)
    protocol = args.protocol or scenario.protocol
    seed = scenario.seed if args.seed is None else args.seed
    setup = prepare(scenario, protocol, seed=seed)
    if args.dump_plan:
        if setup.market is not None:
            print(describe_plan(setup.market, scenario.graph), file=out)
        else:
            plan = setup.schemes[0]
            print(f"base scheme: generators {', '.join(sorted(plan.leaders))}", file=out)
            for h in plan.hashlocks:
                print(f"  lock {h.label} {h.hex[:16]}", file=out)
    if args.q is not None:
        if protocol == "base":
            raise ScenarioError("--q needs protocol A or B")
        _, result = parallel_run(scenario, protocol, seed, args.q)
    else:
        result = execute(setup)
    report = result.report

    if args.trace is not None:
        text = result.trace.to_jsonl() if result.world is not None else ""
        args.trace.write_text(text)
    if args.verdicts is not None:
        args.verdicts.write_text(json.dumps(_verdicts_json(report), indent=2, sort_keys=True) + "\n")
    if args.report is not None:
        from .report import write_run_report

        csv_path, png = write_run_report(result, args.report)
        log.info("wrote %s and %s", csv_path, png)

    print(f"scenario {scenario.name}, protocol {protocol}, seed {seed}", file=out)
    if not report.feasible:
        print("no feasible trade: the predicates admit no non-trivial strongly connected solution", file=out)
        return EXIT_INFEASIBLE
    print(f"completed schemes: {report.completed_schemes or 'none'}; last settlement round {report.completion_round}", file=out)
    for x, v in sorted(report.verdicts.items()):
        tag = "conforming" if v.conforming else str(setup.behavior(x))
        print(
            f"  {x:<10} {tag:<22} safety={'ok' if v.safety_ok else 'VIOLATED'} "
            f"liveness={'ok' if v.liveness_ok else 'no'} collateral={v.collateral}",
            file=out,
        )
    if not report.safe:
        for name in ("safety_violations", "conservation_violations", "double_triggers", "unauthorized_unlocks", "overpay_violations"):
            for item in getattr(report, name):
                print(f"VIOLATION {name}: {item}", file=out)
        return EXIT_VIOLATION
    return EXIT_SAFE


def cmd_batch(args, out) -> int:
    scenario = load_scenario(args.scenario)
    if args.runs < 1:
        raise ScenarioError("--runs must be positive")
    batch = run_batch(scenario, args.runs, args.seed, args.q, tuple(args.strategies))
    if not batch.rows:
        print("no feasible trade", file=out)
        return EXIT_INFEASIBLE
    print(f"scenario {scenario.name}: {args.runs} runs from seed {args.seed}, q={batch.q:g}", file=out)
    summary = batch.summary()
    for s, st in summary.items():
        mean = "n/a" if st["mean_time"] is None else f"{st['mean_time']:.3f}"
        print(
            f"  {s:<10} success={st['success_rate']:.3f} mean_time={mean} mean_attempts={st['mean_attempts']:.3f} "
            f"max_collateral={json.dumps(st['max_collateral'], sort_keys=True)}",
            file=out,
        )
    closed = batch.closed
    if closed:
        parts = []
        if "sequential" in closed:
            parts.append(f"sequential={closed['sequential'].sequential:g}")
        if "A" in closed:
            parts.append(f"A best={closed['A'].a_best:g} A worst={closed['A'].a_worst:g}")
        if "B" in closed:
            parts.append(f"B top={closed['B'].b_top:g} B fallback={closed['B'].b_fallback:g}")
        print("  closed forms: " + " ".join(parts), file=out)
    if args.report is not None:
        from .report import write_batch_report

        csv_path, png = write_batch_report(batch, args.report)
        log.info("wrote %s and %s", csv_path, png)
    return EXIT_SAFE


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args, out)
        return cmd_batch(args, out)
    except (ScenarioError, BehaviorError, ValueError) as exc:
        print(f"swapforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
