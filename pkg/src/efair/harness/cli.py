"""``efair`` command line."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import defaultdict
from pathlib import Path
from typing import Sequence

from efair.dynamics import (
    FsmConfig,
    fit_exponential,
    format_transition_log,
    read_arrival_trace,
    run_lifecycle,
    write_transition_log,
)
from efair.errors import ConfigurationError, EFairError
from efair.harness.campaign import CampaignReport, emit_report, run_campaign
from efair.harness.config import bundled_config, load_config
from efair.model import FairInstance
from efair.pipeline import REPORT_FIELDS, optimize_fair
from efair.solver import SOLVERS, get_solver


def _formats(value: str | None) -> tuple[str, ...]:
    return ("csv", "json") if value is None else (value,)


def _cmd_optimize(args: argparse.Namespace) -> int:
    try:
        instance = FairInstance.from_json(Path(args.instance).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read instance {args.instance}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{args.instance}: invalid JSON ({exc})") from exc
    outcome = optimize_fair(instance, get_solver(args.solver or "builtin"))
    if args.out is None:
        print(outcome.to_json())
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = _formats(args.format)
    if "json" in formats:
        (out / "plan.json").write_text(outcome.to_json() + "\n")
    if "csv" in formats:
        with (out / "summary.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, REPORT_FIELDS, lineterminator="\n")
            w.writeheader()
            w.writerow(outcome.summary_row(1))
    print(f"total {outcome.total_cost} cents, direct {outcome.direct_cost} cents ({outcome.status})")
    return 0


def _load_campaign(args: argparse.Namespace):
    path = Path(args.config) if args.config else bundled_config("demo")
    config = load_config(path)
    return config.with_overrides(seed=args.seed, runs=args.runs, parallel=args.parallel, solver=args.solver)


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_campaign(args)
    report = run_campaign(config)
    out = Path(args.out or "efair-report")
    for path in emit_report(report, out, _formats(args.format)):
        print(path)
    agg = report.aggregates()["fair"]
    print(
        f"{len(report.results)} runs, mean total {agg['total_cost']['mean']:.1f} cents, "
        f"{len(report.failures)} failed"
    )
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    rows = read_arrival_trace(args.trace)
    by_fair: dict[str, list] = defaultdict(list)
    for fair_id, _, stamp in rows:
        by_fair[fair_id].append(stamp)
    gaps = []
    for stamps in by_fair.values():
        stamps.sort()
        gaps += [(b - a).total_seconds() / 86400 for a, b in zip(stamps, stamps[1:])]
    fit = fit_exponential(gaps)
    result = {
        "samples": len(gaps),
        "fairs": len(by_fair),
        "rate_per_day": fit.rate,
        "chi_square": fit.chi_square,
        "p_value": fit.p_value,
        "dof": fit.dof,
        "bins": fit.bins,
        "low_confidence": fit.low_confidence,
        "exponential_at_5pct": fit.accepts(0.05),
    }
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit.json").write_text(text)
    sys.stdout.write(text)
    return 0


def _cmd_fsm_trace(args: argparse.Namespace) -> int:
    fsm = load_config(args.config).fsm if args.config else FsmConfig()
    rows = read_arrival_trace(args.trace)
    by_fair: dict[str, list] = defaultdict(list)
    for fair_id, _, stamp in rows:
        by_fair[fair_id].append(stamp)
    out = Path(args.out) if args.out else None
    if out is None and len(by_fair) > 1:
        raise ConfigurationError("trace holds several fairs: pass --out DIR")
    for fair_id in sorted(by_fair):
        stamps = sorted(by_fair[fair_id])
        life = run_lifecycle([(s - stamps[0]).total_seconds() / 86400 for s in stamps], fsm)
        if out is None:
            sys.stdout.write(format_transition_log(life.transitions))
        else:
            out.mkdir(parents=True, exist_ok=True)
            target = out / f"transitions_{fair_id}.csv"
            write_transition_log(target, life.transitions)
            print(target)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        report = CampaignReport.from_json(Path(args.report).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read report {args.report}: {exc.strerror}") from exc
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigurationError(f"{args.report}: not a campaign report ({exc})") from exc
    for path in emit_report(report, Path(args.out or "efair-report"), _formats(args.format)):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="campaign TOML (default: bundled demo)")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--runs", type=int, metavar="N")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--format", choices=["csv", "json"], help="emit only this format")
    common.add_argument("--parallel", type=int, metavar="N")
    common.add_argument("--solver", choices=sorted(SOLVERS))

    parser = argparse.ArgumentParser(prog="efair", description="Group-buying fair optimizer and simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", parents=[common], help="optimize one instance file")
    p.add_argument("instance", help="instance JSON")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("simulate", parents=[common], help="run a campaign")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="fit exponential inter-arrivals on a trace")
    p.add_argument("trace", help="CSV fair_id,buyer_id,timestamp_iso8601")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("fsm-trace", parents=[common], help="replay a trace through the fair state machine")
    p.add_argument("trace", help="CSV fair_id,buyer_id,timestamp_iso8601")
    p.set_defaults(func=_cmd_fsm_trace)

    p = sub.add_parser("report", parents=[common], help="re-emit a saved report.json")
    p.add_argument("report", help="report.json from a previous run")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"efair: {exc}", file=sys.stderr)
        return 2
    except (EFairError, OSError) as exc:
        print(f"efair: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
