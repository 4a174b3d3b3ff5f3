"""Campaign configuration, synthetic data, Monte Carlo runs and reports."""

from efair.harness.campaign import (
    CURVE_HEADER,
    CampaignReport,
    RunResult,
    arrival_curve,
    emit_report,
    run_campaign,
    run_one,
)
from efair.harness.config import (
    ArrivalModel,
    BuyerSpec,
    CampaignConfig,
    Cluster,
    GridSpec,
    bundled_config,
    config_from_dict,
    load_config,
)
from efair.harness.generate import generate_buyers, generate_pop_grid

__all__ = [
    "CURVE_HEADER",
    "ArrivalModel",
    "BuyerSpec",
    "CampaignConfig",
    "CampaignReport",
    "Cluster",
    "GridSpec",
    "RunResult",
    "arrival_curve",
    "bundled_config",
    "config_from_dict",
    "emit_report",
    "generate_buyers",
    "generate_pop_grid",
    "load_config",
    "run_campaign",
    "run_one",
]
