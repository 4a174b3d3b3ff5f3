"""Arrival model and fair lifecycle."""

from efair.dynamics.arrivals import (
    BirthProcess,
    TRACE_HEADER,
    ExponentialFit,
    default_step,
    fit_exponential,
    milestone_times,
    poisson_probabilities,
    read_arrival_trace,
    sample_interarrivals,
    simulate_birth_process,
    state_probabilities,
    state_probability_path,
    write_arrival_trace,
)
from efair.dynamics.fsm import (
    BUYER_ARRIVAL,
    INACTIVITY,
    MAX_DURATION,
    SOLD_OUT,
    TIMER_EXPIRATION,
    TRANSITION_HEADER,
    FairEvent,
    FairState,
    FsmConfig,
    Lifecycle,
    ModelCheckReport,
    Phase,
    Transition,
    complete_shipment,
    format_transition_log,
    model_check,
    run_lifecycle,
    step_fsm,
    write_transition_log,
)

__all__ = [
    "BUYER_ARRIVAL",
    "INACTIVITY",
    "MAX_DURATION",
    "SOLD_OUT",
    "TIMER_EXPIRATION",
    "TRANSITION_HEADER",
    "TRACE_HEADER",
    "BirthProcess",
    "ExponentialFit",
    "FairEvent",
    "FairState",
    "FsmConfig",
    "Lifecycle",
    "ModelCheckReport",
    "Phase",
    "Transition",
    "complete_shipment",
    "default_step",
    "fit_exponential",
    "format_transition_log",
    "milestone_times",
    "model_check",
    "poisson_probabilities",
    "read_arrival_trace",
    "run_lifecycle",
    "sample_interarrivals",
    "simulate_birth_process",
    "state_probabilities",
    "state_probability_path",
    "step_fsm",
    "write_arrival_trace",
    "write_transition_log",
]
