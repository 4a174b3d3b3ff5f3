"""Monte Carlo campaigns: many simulated fairs, with and without aggregation."""

from __future__ import annotations

import csv
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from efair.dynamics import run_lifecycle, write_arrival_trace
from efair.errors import EFairError
from efair.geo import Buyer, Pop, parse_timestamp
from efair.harness.config import CampaignConfig
from efair.harness.generate import buyers_for_run
from efair.model import FairInstance
from efair.pipeline import REPORT_FIELDS, FairOutcome, RunningFair, optimize_fair
from efair.solver import get_solver

MONEY_FIELDS = ["total_cost", "direct_cost", "purchase_savings", "shipment_savings", "fair_revenue"]
CURVE_HEADER = ["day", "mean_arrivals", "stdev_arrivals", "mean_joined"]


@dataclass(frozen=True)
class RunResult:
    """Outcome of one simulated fair; ``solo`` is the same buyers without aggregation."""

    run: int
    row: dict[str, Any]
    solo: dict[str, Any] | None
    arrivals: tuple[float, ...]  # day offsets of every simulated arrival
    joined: tuple[str, ...]
    join_times: tuple[float, ...]
    demand: int
    closed_by: str | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "run": self.run,
            "row": self.row,
            "solo": self.solo,
            "arrivals": list(self.arrivals),
            "joined": list(self.joined),
            "join_times": list(self.join_times),
            "demand": self.demand,
            "closed_by": self.closed_by,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunResult":
        return cls(
            int(data["run"]),
            dict(data["row"]),
            dict(data["solo"]) if data.get("solo") else None,
            tuple(data["arrivals"]),
            tuple(data["joined"]),
            tuple(data["join_times"]),
            int(data["demand"]),
            data.get("closed_by"),
        )


def _failure_row(run: int, buyers: int, reason: str) -> dict[str, Any]:
    row: dict[str, Any] = {name: None for name in REPORT_FIELDS}
    row.update(run=run, buyers=buyers, status="failed", reason=reason)
    return row


def _empty_row(run: int, reason: str) -> dict[str, Any]:
    row: dict[str, Any] = {name: 0 for name in REPORT_FIELDS}
    row.update(run=run, status="empty", reason=reason)
    return row


def _solo_row(run: int, template: FairInstance, buyers: Sequence[Buyer], solver) -> dict[str, Any]:
    """Every buyer served by a fair of their own: no pooling of purchases or shipments."""
    outcomes = [optimize_fair(template.with_buyers([b]), solver) for b in buyers]
    row: dict[str, Any] = {
        "run": run,
        "buyers": len(buyers),
        "status": "optimal" if all(o.status == "optimal" for o in outcomes) else "feasible",
        "reason": "solo",
    }
    for name in MONEY_FIELDS:
        row[name] = sum(o.summary_row()[name] for o in outcomes)
    return row


def _fair_outcome(config: CampaignConfig, template: FairInstance, joined: Sequence[Buyer], solver) -> FairOutcome:
    if config.reoptimize == "close":
        return optimize_fair(template.with_buyers(joined), solver)
    fair = RunningFair(template, solver)
    outcome = None
    for buyer in joined:
        outcome = fair.join(buyer)
    if outcome is None:
        # a lone buyer never triggers a re-optimization
        outcome = optimize_fair(fair.instance, solver)
    return outcome


def run_one(config: CampaignConfig, run: int, pops: Sequence[Pop] | None = None) -> RunResult:
    """Simulate one fair: arrivals through the state machine, then the optimized plan."""
    rng = np.random.default_rng([config.seed or 0, run])
    pops = config.load_pops() if pops is None else pops
    solver = get_solver(config.solver)
    template = FairInstance(config.sellers, tuple(pops), (), config.shipment_cost, config.beta, config.ticket_curve)

    pool = [b for b in buyers_for_run(config, rng) if b.arrival_time is not None]
    origin = config.start if config.buyers is not None else min((b.arrival_time for b in pool), default=None)
    offsets = [(b.arrival_time - origin) / timedelta(days=1) for b in pool]  # type: ignore[operator]
    life = run_lifecycle(offsets, config.fsm, [b.demand for b in pool], template.total_supply)
    joined = [pool[i] for i in life.admitted]
    join_times = tuple(offsets[i] for i in life.admitted)
    closed_by = life.state.closed_by
    demand = sum(b.demand for b in joined)

    if not joined:
        row: dict[str, Any] = _empty_row(run, "no arrivals")
        solo = _empty_row(run, "no arrivals") if config.paired else None
    else:
        try:
            row = _fair_outcome(config, template, joined, solver).summary_row(run, closed_by or "")
        except EFairError as exc:
            row = _failure_row(run, len(joined), f"{type(exc).__name__}: {exc}")
        solo = None
        if config.paired:
            try:
                solo = _solo_row(run, template, joined, solver)
            except EFairError as exc:
                solo = _failure_row(run, len(joined), f"{type(exc).__name__}: {exc}")
    return RunResult(run, row, solo, tuple(offsets), tuple(b.id for b in joined), join_times, demand, closed_by)


def _run_star(args: tuple[CampaignConfig, int, Sequence[Pop]]) -> RunResult:
    return run_one(*args)


# -- report ------------------------------------------------------------------------


def _stats(rows: Iterable[dict[str, Any]]) -> dict[str, dict[str, float]]:
    out = {}
    rows = [r for r in rows if r.get("status") != "failed"]
    for name in ["buyers"] + MONEY_FIELDS:
        values = [float(r[name]) for r in rows]
        out[name] = {
            "mean": statistics.fmean(values) if values else 0.0,
            "stdev": statistics.stdev(values) if len(values) > 1 else 0.0,
        }
    return out


@dataclass
class CampaignReport:
    name: str
    seed: int | None
    results: list[RunResult] = field(default_factory=list)
    curve: list[tuple[float, float, float, float]] = field(default_factory=list)
    settings: dict[str, Any] = field(default_factory=dict)

    @property
    def rows(self) -> list[dict[str, Any]]:
        return [r.row for r in self.results]

    @property
    def solo_rows(self) -> list[dict[str, Any]]:
        return [r.solo for r in self.results if r.solo is not None]

    @property
    def failures(self) -> list[dict[str, Any]]:
        return [r for r in self.rows if r["status"] == "failed"]

    def aggregates(self) -> dict[str, Any]:
        out: dict[str, Any] = {"fair": _stats(self.rows)}
        if self.solo_rows:
            out["solo"] = _stats(self.solo_rows)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "settings": self.settings,
            "aggregates": self.aggregates(),
            "runs": [r.to_dict() for r in self.results],
            "arrival_curve": [list(p) for p in self.curve],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CampaignReport":
        return cls(
            data["name"],
            data.get("seed"),
            [RunResult.from_dict(r) for r in data["runs"]],
            [tuple(p) for p in data.get("arrival_curve", [])],  # type: ignore[misc]
            dict(data.get("settings", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "CampaignReport":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def arrival_curve(
    results: Sequence[RunResult], step: float, horizon: float | None = None
) -> list[tuple[float, float, float, float]]:
    """Mean cumulative arrivals (and joins) across runs on a regular day grid."""
    if not results:
        return []
    last = max((max(r.arrivals, default=0.0) for r in results), default=0.0)
    end = horizon if horizon is not None else last
    grid = np.arange(0.0, end + step / 2, step)
    arrivals = np.array([np.searchsorted(np.sort(r.arrivals), grid, side="right") for r in results], dtype=float)
    joined = np.array([np.searchsorted(np.array(r.join_times), grid, side="right") for r in results], dtype=float)
    spread = arrivals.std(axis=0, ddof=1) if len(results) > 1 else np.zeros(len(grid))
    return [
        (round(float(t), 6), round(float(m), 6), round(float(s), 6), round(float(j), 6))
        for t, m, s, j in zip(grid, arrivals.mean(axis=0), spread, joined.mean(axis=0))
    ]


def run_campaign(config: CampaignConfig) -> CampaignReport:
    """Run ``config.runs`` fairs; rows are ordered by run index whatever the completion order."""
    pops = config.load_pops()
    jobs = [(config, run, pops) for run in range(1, config.runs + 1)]
    if config.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.parallel) as pool:
            results = list(pool.map(_run_star, jobs))
    else:
        results = [_run_star(job) for job in jobs]
    results.sort(key=lambda r: r.run)
    horizon = None
    if config.buyers is not None and config.buyers.arrival is not None:
        horizon = config.buyers.arrival.horizon_days
    settings = {
        "runs": config.runs,
        "solver": config.solver,
        "paired": config.paired,
        "reoptimize": config.reoptimize,
        "shipment_cost_cents": config.shipment_cost,
        "beta_cents_per_km": config.beta,
        "pops": len(pops),
        "start": config.start.isoformat(),
    }
    return CampaignReport(config.name, config.seed, results, arrival_curve(results, config.curve_step_days, horizon), settings)


# -- emission ------------------------------------------------------------------------


def _cell(value: Any) -> str:
    return "" if value is None else str(value)


def _write_rows(path: Path, rows: Sequence[dict[str, Any]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for row in rows:
            w.writerow([_cell(row[name]) for name in REPORT_FIELDS])
        if rows:
            total = {name: "" for name in REPORT_FIELDS}
            total["run"] = "total"
            for name in ["buyers"] + MONEY_FIELDS:
                total[name] = str(sum(r[name] for r in rows if r[name] is not None))
            w.writerow([total[name] for name in REPORT_FIELDS])


def _write_curve(path: Path, curve: Sequence[tuple[float, float, float, float]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for point in curve:
            w.writerow([f"{v:.6f}" for v in point])


def emit_report(report: CampaignReport, out_dir: str | Path, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    """Write the report files into ``out_dir``; returns their paths.

    ``csv`` gives ``report.csv`` (plus ``report_solo.csv`` for paired
    campaigns), ``arrival_curve.csv`` and an arrival trace of the buyers who
    joined; ``json`` gives ``report.json`` with everything.
    """
    out = Path(out_dir)
    written: list[Path] = []
    unknown = set(formats) - {"csv", "json"}
    if unknown:
        raise ValueError(f"unknown report format(s): {sorted(unknown)}")
    target = out
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            target = out / "report.csv"
            _write_rows(target, report.rows)
            written.append(target)
            if report.solo_rows:
                target = out / "report_solo.csv"
                _write_rows(target, report.solo_rows)
                written.append(target)
            target = out / "arrival_curve.csv"
            _write_curve(target, report.curve)
            written.append(target)
            target = out / "trace.csv"
            start = parse_timestamp(report.settings.get("start", "2024-01-01T00:00:00+00:00"))
            rows = [(f"run-{r.run:03d}", bid, t) for r in report.results for bid, t in zip(r.joined, r.join_times)]
            write_arrival_trace(target, rows, start)
            written.append(target)
        if "json" in formats:
            target = out / "report.json"
            target.write_text(report.to_json())
            written.append(target)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report: {exc.strerror or exc}", str(target)) from exc
    return written

