"""Fair lifecycle as an extended finite-state machine.

Phases: ``initial -> active/inactive -> closed -> final``.  Active and
inactive are the operational phases.  Timers are kept as absolute deadlines
in the state; a timer event that arrives before its deadline (because the
timer was reset since) is stale and ignored.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from efair.errors import ConfigurationError, ProtocolError

BUYER_ARRIVAL = "buyer_arrival"
TIMER_EXPIRATION = "timer_expiration"
SOLD_OUT = "sold_out"
EVENT_KINDS = (BUYER_ARRIVAL, TIMER_EXPIRATION, SOLD_OUT)

INACTIVITY = "inactivity"
MAX_DURATION = "max_duration"
TIMERS = (INACTIVITY, MAX_DURATION)

ACTIONS = ("create_fair", "set_timer", "reset_timer", "assign_quantities", "ship", "optimize")


class Phase(str, enum.Enum):
    INITIAL = "initial"
    ACTIVE = "active"
    INACTIVE = "inactive"
    CLOSED = "closed"
    FINAL = "final"

    @property
    def operational(self) -> bool:
        return self in (Phase.ACTIVE, Phase.INACTIVE)


@dataclass(frozen=True)
class FsmConfig:
    """Thresholds in days."""

    activity_threshold: float = 1.0
    inactivity_timeout: float = 7.0
    max_duration: float = 30.0

    def __post_init__(self) -> None:
        if min(self.activity_threshold, self.inactivity_timeout, self.max_duration) <= 0:
            raise ConfigurationError("FSM thresholds must be positive")


@dataclass(frozen=True)
class FairEvent:
    kind: str
    time: float
    buyer_id: str | None = None
    timer: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ConfigurationError(f"unknown event kind {self.kind!r}")
        if self.kind == TIMER_EXPIRATION and self.timer not in TIMERS:
            raise ConfigurationError(f"unknown timer {self.timer!r}")

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.timer}" if self.timer else self.kind


@dataclass(frozen=True)
class FairState:
    phase: Phase = Phase.INITIAL
    n: int = 0
    clock: float = 0.0
    opened_at: float | None = None
    last_arrival: float | None = None
    inactivity_deadline: float | None = None
    max_deadline: float | None = None
    closed_by: str | None = None

    def deadline(self, timer: str) -> float | None:
        return self.inactivity_deadline if timer == INACTIVITY else self.max_deadline

    def evolve(self, **changes: object) -> "FairState":
        # dataclasses.replace re-runs field processing; this is a plain copy
        new = object.__new__(FairState)
        new.__dict__.update(self.__dict__)
        new.__dict__.update(changes)
        return new


def step_fsm(
    state: FairState, event: FairEvent, config: FsmConfig = FsmConfig()
) -> tuple[FairState, tuple[str, ...]]:
    """Apply one event; returns the new state and the actions to perform."""
    if state.phase is Phase.FINAL:
        raise ProtocolError(f"{event.label} after the fair reached its final state")
    if event.time < state.clock:
        raise ProtocolError(f"event at {event.time} precedes the clock {state.clock}")
    t = event.time

    if state.phase is Phase.INITIAL:
        if event.kind != BUYER_ARRIVAL:
            return state.evolve(clock=t), ()
        new = FairState(
            Phase.ACTIVE, 1, t, t, t, t + config.inactivity_timeout, t + config.max_duration
        )
        return new, ("create_fair", "set_timer")

    if state.phase is Phase.CLOSED:
        # closing is under way: nothing else is admitted
        return state.evolve(clock=t), ()

    # operational
    if event.kind == BUYER_ARRIVAL:
        assert state.last_arrival is not None
        gap = t - state.last_arrival
        phase = Phase.ACTIVE if gap <= config.activity_threshold else Phase.INACTIVE
        new = state.evolve(
            phase=phase,
            n=state.n + 1,
            clock=t,
            last_arrival=t,
            inactivity_deadline=t + config.inactivity_timeout,
        )
        return new, ("optimize", "reset_timer")
    if event.kind == TIMER_EXPIRATION:
        due = state.deadline(event.timer)  # type: ignore[arg-type]
        if due is None or t < due:
            return state.evolve(clock=t), ()
        return _close(state, t, event.timer)  # type: ignore[arg-type]
    return _close(state, t, SOLD_OUT)


def _close(state: FairState, t: float, reason: str) -> tuple[FairState, tuple[str, ...]]:
    new = state.evolve(phase=Phase.CLOSED, clock=t, closed_by=reason,
                       inactivity_deadline=None, max_deadline=None)
    return new, ("assign_quantities", "ship")


def complete_shipment(state: FairState) -> FairState:
    """Shipping finished: a closed fair becomes final."""
    if state.phase is not Phase.CLOSED:
        raise ProtocolError(f"cannot complete shipment from {state.phase.value}")
    return state.evolve(phase=Phase.FINAL)


# -- driving the machine ----------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    time: float
    source: Phase
    target: Phase
    event: str
    actions: tuple[str, ...]


@dataclass
class Lifecycle:
    """Result of :func:`run_lifecycle`."""

    state: FairState
    transitions: list[Transition] = field(default_factory=list)
    admitted: list[int] = field(default_factory=list)  # indices of arrivals that joined


def run_lifecycle(
    arrivals: Iterable[float],
    config: FsmConfig = FsmConfig(),
    demands: Iterable[int] | None = None,
    supply: int | None = None,
) -> Lifecycle:
    """Feed arrival times (days) through the machine, firing timers in between.

    An arrival whose demand would exceed ``supply`` raises the sold-out event
    instead of joining.  The fair is driven to its final state at the end
    (timers fire if no closing event happened earlier).
    """
    state = FairState()
    log = Lifecycle(state)
    times = list(arrivals)
    wants = list(demands) if demands is not None else [1] * len(times)
    taken = 0

    def apply(ev: FairEvent) -> None:
        nonlocal state
        before = state.phase
        state, actions = step_fsm(state, ev, config)
        if actions or state.phase is not before:
            log.transitions.append(Transition(ev.time, before, state.phase, ev.label, actions))

    def fire_timers(until: float | None) -> None:
        while state.phase.operational:
            due = [(state.deadline(tm), tm) for tm in TIMERS if state.deadline(tm) is not None]
            when, which = min(due)  # type: ignore[type-var]
            if until is not None and when > until:
                return
            apply(FairEvent(TIMER_EXPIRATION, when, timer=which))

    for idx, (t, want) in enumerate(zip(times, wants)):
        fire_timers(t)
        if state.phase is Phase.CLOSED:
            break
        if supply is not None and taken + want > supply:
            apply(FairEvent(SOLD_OUT, t))
            break
        apply(FairEvent(BUYER_ARRIVAL, t, buyer_id=str(idx)))
        taken += want
        log.admitted.append(idx)
    fire_timers(None)
    if state.phase is Phase.CLOSED:
        before = state.phase
        state = complete_shipment(state)
        log.transitions.append(Transition(state.clock, before, state.phase, "shipment_complete", ()))
    log.state = state
    return log


TRANSITION_HEADER = ["time", "from", "to", "event", "actions"]


def format_transition_log(transitions: Iterable[Transition]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRANSITION_HEADER)
    for tr in transitions:
        w.writerow([f"{tr.time:.6f}", tr.source.value, tr.target.value, tr.event, ";".join(tr.actions)])
    return buf.getvalue()


def write_transition_log(path: str | Path, transitions: Iterable[Transition]) -> None:
    Path(path).write_text(format_transition_log(transitions))


# -- exhaustive check -----------------------------------------------------------------

LETTERS = ("arrive_soon", "arrive_late", "inactivity", "max_duration", "sold_out")


@dataclass
class ModelCheckReport:
    sequences: int = 0
    violations: list[str] = field(default_factory=list)
    closures: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations


def _event(kind: str, time: float, timer: str | None = None) -> FairEvent:
    # letters are valid by construction, so skip validation in the hot loop
    ev = object.__new__(FairEvent)
    ev.__dict__.update(kind=kind, time=time, buyer_id=None, timer=timer)
    return ev


def _letter_event(letter: str, state: FairState, config: FsmConfig) -> FairEvent:
    base = state.clock
    if letter == "arrive_soon":
        return _event(BUYER_ARRIVAL, base + config.activity_threshold / 2)
    if letter == "arrive_late":
        return _event(BUYER_ARRIVAL, base + config.activity_threshold * 1.5)
    if letter in TIMERS:
        due = state.deadline(letter)
        return _event(TIMER_EXPIRATION, max(base, due if due is not None else base), letter)
    return _event(SOLD_OUT, base)


def model_check(config: FsmConfig = FsmConfig(), max_length: int = 8) -> ModelCheckReport:
    """Explore every event sequence up to ``max_length`` from the initial state.

    Checks that the buyer count never decreases, that every step is
    deterministic, that a fair which has closed always completes to final
    and then rejects every further event, and records which closing
    conditions were reached.

    Subtrees are memoized on ``(state, remaining depth)``: once a step is
    known to be deterministic, equal states have equal futures.  Sequence and
    closure counts still cover every path; a violation is reported once, on
    the first path that reaches it.
    """
    reasons = (SOLD_OUT, INACTIVITY, MAX_DURATION)
    violations: list[str] = []
    memo: dict[tuple[FairState, int], tuple[int, tuple[int, int, int]]] = {}

    def visit(state: FairState, depth: int, path: tuple[str, ...]) -> tuple[int, tuple[int, int, int]]:
        key = (state, depth)
        if key in memo:
            return memo[key]
        where = " ".join(path)
        if state.phase is Phase.CLOSED:
            final = complete_shipment(state)
            for letter in LETTERS:
                try:
                    step_fsm(final, _letter_event(letter, final, config), config)
                except ProtocolError:
                    continue
                violations.append(f"{where} + final + {letter}: accepted")
        count, closed = 1, [0, 0, 0]
        if depth:
            for letter in LETTERS:
                ev = _letter_event(letter, state, config)
                nxt, actions = step_fsm(state, ev, config)
                if step_fsm(state, ev, config) != (nxt, actions):
                    violations.append(f"{where} {letter}: non-deterministic")
                if nxt.n < state.n:
                    violations.append(f"{where} {letter}: buyer count decreased")
                if state.phase.operational and nxt.phase is Phase.CLOSED:
                    closed[reasons.index(nxt.closed_by)] += 1  # type: ignore[arg-type]
                    if actions != ("assign_quantities", "ship"):
                        violations.append(f"{where} {letter}: wrong closing actions")
                if state.phase is Phase.CLOSED and nxt.phase is not Phase.CLOSED:
                    violations.append(f"{where} {letter}: left the closed state")
                sub_count, sub_closed = visit(nxt, depth - 1, path + (letter,))
                count += sub_count
                closed = [a + b for a, b in zip(closed, sub_closed)]
        memo[key] = result = (count, tuple(closed))  # type: ignore[assignment]
        return result  # type: ignore[return-value]

    total, closed = visit(FairState(), max_length, ())
    return ModelCheckReport(total, violations, dict(zip(reasons, closed)))
