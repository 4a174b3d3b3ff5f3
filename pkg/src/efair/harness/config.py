"""Campaign configuration: one TOML file, overridable from the command line."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from efair.dynamics import BirthProcess, FsmConfig
from efair.errors import ConfigurationError
from efair.geo import GeoPoint, Pop, parse_timestamp, read_buyers, read_pops
from efair.model import Seller
from efair.pricing import PriceCurve
from efair.solver import SOLVERS


@dataclass(frozen=True)
class Cluster:
    center: GeoPoint
    sigma_km: float
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma_km >= 0 or not self.weight > 0:
            raise ConfigurationError("cluster sigma must be >= 0 and weight > 0")


@dataclass(frozen=True)
class ArrivalModel:
    """Birth-process arrivals: explicit ``rates``/``milestones`` or derived from a seller curve."""

    lambda1: float = 2.0
    rates: tuple[float, ...] | None = None
    milestones: tuple[int, ...] | None = None
    horizon_days: float = 60.0

    def process(self, curve: PriceCurve | None, count: int) -> BirthProcess:
        if self.rates is not None:
            return BirthProcess(self.rates, self.milestones or ())
        if curve is None:
            return BirthProcess((self.lambda1,), (count,))
        # milestones (in buyers) at the curve breakpoints below the pool size
        keep = tuple(m for m in curve.breakpoints if m < count)
        slopes = curve.slopes[: len(keep) + 1]
        rates = tuple(self.lambda1 * slopes[0] / f for f in slopes)
        return BirthProcess(rates, keep + (max(count, 1),))


@dataclass(frozen=True)
class BuyerSpec:
    """Synthetic buyer pool."""

    count: int
    clusters: tuple[Cluster, ...]
    demand_values: tuple[int, ...] = (1,)
    demand_weights: tuple[float, ...] = (1.0,)
    max_range_km: float = 2.0
    arrival: ArrivalModel | None = field(default_factory=ArrivalModel)

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ConfigurationError("buyer count must be >= 0")
        if self.count and not self.clusters:
            raise ConfigurationError("buyer generator needs at least one cluster")
        if len(self.demand_values) != len(self.demand_weights) or not self.demand_values:
            raise ConfigurationError("demand values and weights must have equal, non-zero length")
        if min(self.demand_values) < 1 or min(self.demand_weights) < 0 or sum(self.demand_weights) <= 0:
            raise ConfigurationError("demands must be >= 1 and weights non-negative")
        if not self.max_range_km >= 0:
            raise ConfigurationError("max_range_km must be >= 0")


@dataclass(frozen=True)
class GridSpec:
    south: float
    west: float
    north: float
    east: float
    spacing_km: float
    capacity: int = 50


@dataclass(frozen=True)
class CampaignConfig:
    name: str
    sellers: tuple[Seller, ...]
    shipment_cost: int
    beta: float
    ticket_curve: PriceCurve | None = None
    fsm: FsmConfig = field(default_factory=FsmConfig)
    pop_grid: GridSpec | None = None
    pop_file: Path | None = None
    buyers: BuyerSpec | None = None
    buyer_file: Path | None = None
    runs: int = 1
    seed: int | None = None
    solver: str = "builtin"
    parallel: int = 1
    paired: bool = True
    reoptimize: str = "join"
    start: datetime = datetime(2024, 1, 1, tzinfo=timezone.utc)
    curve_step_days: float = 0.5

    def __post_init__(self) -> None:
        if not self.sellers:
            raise ConfigurationError("at least one seller is required")
        if self.runs < 0:
            raise ConfigurationError("runs must be >= 0")
        if self.parallel < 1:
            raise ConfigurationError("parallel must be >= 1")
        if self.solver not in SOLVERS:
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        if self.reoptimize not in ("join", "close"):
            raise ConfigurationError("reoptimize must be 'join' or 'close'")
        if (self.pop_grid is None) == (self.pop_file is None):
            raise ConfigurationError("give exactly one POP source: [pops.grid] or pops.file")
        if (self.buyers is None) == (self.buyer_file is None):
            raise ConfigurationError("give exactly one buyer source: [buyers] generator or buyers.file")
        for path in (self.pop_file, self.buyer_file):
            if path is not None and not path.is_file():
                raise ConfigurationError(f"referenced file not found: {path}")
        if self.buyers is not None and self.seed is None:
            raise ConfigurationError("synthetic buyers need a seed")
        if not self.curve_step_days > 0:
            raise ConfigurationError("curve_step_days must be > 0")

    def with_overrides(self, **changes: Any) -> "CampaignConfig":
        """Copy with the non-``None`` keyword values replaced."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def load_pops(self) -> list[Pop]:
        from efair.harness.generate import generate_pop_grid

        if self.pop_file is not None:
            return read_pops(self.pop_file)
        assert self.pop_grid is not None
        return generate_pop_grid(self.pop_grid)

    def load_buyer_file(self):
        assert self.buyer_file is not None
        return read_buyers(self.buyer_file)


# -- parsing ------------------------------------------------------------------------


def _curve(raw: Any, where: str) -> PriceCurve:
    if not isinstance(raw, list) or not raw:
        raise ConfigurationError(f"{where}: expected a list of segments")
    try:
        return PriceCurve.from_dict({"segments": raw})
    except ConfigurationError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def _get(table: Mapping[str, Any], key: str, where: str) -> Any:
    try:
        return table[key]
    except KeyError:
        raise ConfigurationError(f"{where}: missing key {key!r}") from None


def _arrival(raw: Mapping[str, Any] | None) -> ArrivalModel | None:
    if raw is None:
        return ArrivalModel()
    if raw.get("model", "birth") == "none":
        return None
    rates = raw.get("rates")
    stones = raw.get("milestones")
    if (rates is None) != (stones is None):
        raise ConfigurationError("arrival: give both rates and milestones, or neither")
    return ArrivalModel(
        lambda1=float(raw.get("lambda1", 2.0)),
        rates=tuple(float(r) for r in rates) if rates is not None else None,
        milestones=tuple(int(m) for m in stones) if stones is not None else None,
        horizon_days=float(raw.get("horizon_days", 60.0)),
    )


def config_from_dict(data: Mapping[str, Any], base_dir: Path | None = None) -> CampaignConfig:
    """Build a config from parsed TOML; relative file paths resolve against ``base_dir``."""
    base = base_dir or Path.cwd()
    fair = data.get("fair", {})
    sellers = []
    for idx, raw in enumerate(data.get("sellers", [])):
        where = f"sellers[{idx}]"
        sellers.append(
            Seller(
                str(_get(raw, "id", where)),
                _curve(_get(raw, "fair_curve", where), f"{where}.fair_curve"),
                int(_get(raw, "supply", where)),
                _curve(raw["seller_curve"], f"{where}.seller_curve") if "seller_curve" in raw else None,
            )
        )
    ticket = fair.get("ticket_curve")
    fsm_raw = data.get("fsm", {})
    fsm = FsmConfig(
        float(fsm_raw.get("activity_threshold", 1.0)),
        float(fsm_raw.get("inactivity_timeout", 7.0)),
        float(fsm_raw.get("max_duration", 30.0)),
    )

    pops_raw = data.get("pops", {})
    grid = None
    if "grid" in pops_raw:
        g = pops_raw["grid"]
        grid = GridSpec(
            *(float(_get(g, k, "pops.grid")) for k in ("south", "west", "north", "east", "spacing_km")),
            capacity=int(g.get("capacity", 50)),
        )
    pop_file = base / pops_raw["file"] if "file" in pops_raw else None

    buyers_raw = data.get("buyers", {})
    buyer_file = base / buyers_raw["file"] if "file" in buyers_raw else None
    spec = None
    if buyer_file is None and buyers_raw:
        clusters = tuple(
            Cluster(
                GeoPoint(float(_get(c, "lat", "cluster")), float(_get(c, "lon", "cluster"))),
                float(c.get("sigma_km", 1.0)),
                float(c.get("weight", 1.0)),
            )
            for c in buyers_raw.get("clusters", [])
        )
        demand = buyers_raw.get("demand", {"values": [1], "weights": [1.0]})
        spec = BuyerSpec(
            int(_get(buyers_raw, "count", "buyers")),
            clusters,
            tuple(int(v) for v in _get(demand, "values", "buyers.demand")),
            tuple(float(w) for w in demand.get("weights", [1.0] * len(demand["values"]))),
            float(buyers_raw.get("max_range_km", 2.0)),
            _arrival(buyers_raw.get("arrival")),
        )

    campaign = data.get("campaign", {})
    start = campaign.get("start")
    if isinstance(start, str):
        start = parse_timestamp(start)
    elif isinstance(start, datetime) and start.tzinfo is None:
        start = start.replace(tzinfo=timezone.utc)
    try:
        return CampaignConfig(
            name=str(campaign.get("name", "campaign")),
            sellers=tuple(sellers),
            shipment_cost=int(_get(fair, "shipment_cost_cents", "fair")),
            beta=float(_get(fair, "beta_cents_per_km", "fair")),
            ticket_curve=_curve(ticket, "fair.ticket_curve") if ticket else None,
            fsm=fsm,
            pop_grid=grid,
            pop_file=pop_file,
            buyers=spec,
            buyer_file=buyer_file,
            runs=int(campaign.get("runs", 1)),
            seed=int(campaign["seed"]) if "seed" in campaign else None,
            solver=str(campaign.get("solver", "builtin")),
            parallel=int(campaign.get("parallel", 1)),
            paired=bool(campaign.get("paired", True)),
            reoptimize=str(campaign.get("reoptimize", "join")),
            start=start or datetime(2024, 1, 1, tzinfo=timezone.utc),
            curve_step_days=float(campaign.get("curve_step_days", 0.5)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad campaign value: {exc}") from exc


def load_config(path: str | Path) -> CampaignConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return config_from_dict(data, path.parent)


def bundled_config(name: str = "demo") -> Path:
    """Path of a config shipped with the package (``demo`` or ``milan``)."""
    path = Path(__file__).parent / "data" / f"{name}.toml"
    if not path.is_file():
        raise ConfigurationError(f"no bundled config named {name!r}")
    return path
