"""Episodic-semantics engine: cyclic revision of a test assumption.

One of the four measurements is seeded with an assumed result and the
cycle is then walked lap after lap, re-deriving every event from the local
rules with pair states carried across laps.  Conflicts at the seeded
target resolve asymmetrically, because an entanglement can be demolished
but never restored:

* assumed YES, later forced NO  ->  the target flips to NO and the walk
  continues;
* assumed NO, later found to require YES (preserving type, pair still
  intact)  ->  the assumption was erroneous; the walk restarts from
  scratch with the corrected YES value.

A NO result at a measurement means the superposition is missing from that
point on the cycle onward, so demolitions are recorded at cycle positions:
a reader at an earlier position (a measurement that executes first) never
sees a demolition recorded at a later one.  An assumed NO seeds such a
demolition at the target's own position; it binds strictly later readers
only, leaving the target's own re-evaluation free to expose an erroneous
assumption.

Evaluation stops at a fixed point: a full lap that changes no value and no
pair state.  The reported cycle count includes that confirming lap.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .ephemeral import enumerate_consistent
from .events import (
    CONTROLLER,
    CYCLE_POS,
    MEASUREMENT_CYCLE,
    MEASUREMENT_PAIR,
    MEASUREMENTS,
    NO,
    YES,
    EventId,
    EventValue,
    Pair,
    PairState,
    PairStatus,
    ProtocolError,
    ProtocolInstance,
    ScenarioConfig,
    build_instance,
)


class NonterminationError(ProtocolError):
    """The revision walk exceeded its safety cycle bound."""

    def __init__(self, message: str, trace: "RevisionTrace | None" = None):
        super().__init__(message)
        self.trace = trace


class VariantClass(Enum):
    # First variants assume a frame's later measurement; alternates the earlier.
    FIRST = "first"
    ALTERNATE = "alternate"


@dataclass(frozen=True)
class TestAssumption:
    target: EventId
    assumed: EventValue

    def __post_init__(self) -> None:
        if self.target not in MEASUREMENTS:
            raise ValueError(f"test assumptions target measurements, not {self.target.label}")
        if self.assumed not in (YES, NO):
            raise ValueError("assumed value must be YES or NO")

    @property
    def variant_class(self) -> VariantClass:
        if self.target in (EventId.A2, EventId.B2P):
            return VariantClass.FIRST
        return VariantClass.ALTERNATE

    @property
    def label(self) -> str:
        return f"{self.target.label}={self.assumed.value}"


@dataclass(frozen=True)
class TraceStep:
    segment: int
    lap: int
    event: EventId
    value: EventValue
    pair_s: PairStatus
    pair_sp: PairStatus


@dataclass(frozen=True)
class RestartMarker:
    segment: int
    lap: int
    reason: str


@dataclass(frozen=True)
class RevisionTrace:
    assumption: TestAssumption
    entry: EventId
    steps: tuple[TraceStep, ...]
    restarts: tuple[RestartMarker, ...]
    final_assignment: Mapping[EventId, EventValue]
    final_pair_states: Mapping[Pair, PairState]
    cycles: int

    @property
    def restarted(self) -> bool:
        return bool(self.restarts)

    @property
    def final_measurements(self) -> dict[EventId, EventValue]:
        return {m: self.final_assignment[m] for m in MEASUREMENTS}


class _PairTracker:
    """Demolition records for one pair: (cycle position, cause)."""

    __slots__ = ("real", "seed_pos")

    def __init__(self) -> None:
        self.real: list[tuple[int, str]] = []
        self.seed_pos: int | None = None

    def alive_at(self, pos: int) -> bool:
        if any(q <= pos for q, _ in self.real):
            return False
        if self.seed_pos is not None and pos > self.seed_pos:
            return False
        return True

    def record_demolition(self, pos: int, cause: str) -> None:
        if self.alive_at(pos):
            self.real.append((pos, cause))

    def status(self) -> PairStatus:
        if self.real or self.seed_pos is not None:
            return PairStatus.DEMOLISHED
        return PairStatus.INTACT

    def state(self) -> PairState:
        if self.real:
            cause = min(self.real)[1]
            return PairState(PairStatus.DEMOLISHED, cause)
        if self.seed_pos is not None:
            return PairState(PairStatus.DEMOLISHED, "assumption")
        return PairState(PairStatus.INTACT)


class _Erroneous(Exception):
    """Internal: the NO assumption cannot be reconciled; restart with YES."""


def _rotation(entry: EventId) -> tuple[EventId, ...]:
    start = MEASUREMENT_CYCLE.index(entry)
    return tuple(MEASUREMENT_CYCLE[(start + i) % 6] for i in range(6))


def evaluate(
    instance: ProtocolInstance,
    assumption: TestAssumption,
    entry: EventId | None = None,
    max_cycles: int = 16,
) -> RevisionTrace:
    """Run the revision procedure for one test assumption to its fixed point.

    `entry` selects where each lap starts (default: the assumed target,
    matching the narration order of the analysis); the fixed point must not
    depend on it.  Raises NonterminationError past `max_cycles` laps in a
    segment, with the partial trace attached.
    """
    if entry is None:
        entry = assumption.target
    if entry not in MEASUREMENT_CYCLE:
        raise ValueError(f"entry point {entry.label} is not on the measurement cycle")

    steps: list[TraceStep] = []
    restarts: list[RestartMarker] = []
    assumed = assumption.assumed
    for segment in (0, 1):
        try:
            values, trackers, laps = _run_segment(
                instance, assumption.target, assumed, entry, max_cycles, segment, steps,
            )
        except _Erroneous as exc:
            if segment == 1 or assumed is YES:
                raise ProtocolError(
                    f"revision diverged for {assumption.label}: {exc.args[0]}"
                ) from exc
            restarts.append(RestartMarker(segment, exc.args[1], exc.args[0]))
            assumed = YES
            continue
        return RevisionTrace(
            assumption=assumption,
            entry=entry,
            steps=tuple(steps),
            restarts=tuple(restarts),
            final_assignment=dict(values),
            final_pair_states={p: trackers[p].state() for p in Pair},
            cycles=laps,
        )
    raise AssertionError("unreachable")  # pragma: no cover


def _run_segment(
    instance: ProtocolInstance,
    target: EventId,
    assumed: EventValue,
    entry: EventId,
    max_cycles: int,
    segment: int,
    steps: list[TraceStep],
):
    values: dict[EventId, EventValue] = dict(instance.first_actions)
    for event in MEASUREMENT_CYCLE:
        values[event] = EventValue.UNKNOWN
    values[target] = assumed

    trackers = {p: _PairTracker() for p in Pair}
    if assumed is NO:
        # The assumed missing entanglement binds everything after the target
        # on the cycle, but not the earlier-executing partner measurement.
        trackers[MEASUREMENT_PAIR[target]].seed_pos = CYCLE_POS[target]

    order = _rotation(entry)
    seen_target = False
    laps = 0
    while laps < max_cycles:
        changed = False
        for event in order:
            pos = CYCLE_POS[event]
            previous = values[event]
            if event is target and not seen_target:
                seen_target = True
                new = previous  # the seed stands for its first pass
            else:
                intact = {p: trackers[p].alive_at(pos) for p in Pair}
                new = instance.local_rule(event, values, intact)
                if event in MEASUREMENTS:
                    if values[CONTROLLER[event]] is NO:
                        trackers[MEASUREMENT_PAIR[event]].record_demolition(pos, event.label)
                    if event is target and previous is NO and new is YES:
                        raise _Erroneous(
                            f"{target.label}=NO conflicts with preserving type and "
                            f"intact pair; corrected to YES",
                            laps + 1,
                        )
            if new is not previous:
                changed = True
            values[event] = new
            steps.append(TraceStep(
                segment, laps + 1, event, new,
                trackers[Pair.S].status(), trackers[Pair.SP].status(),
            ))
        laps += 1
        if not changed:
            return values, trackers, laps
    raise NonterminationError(
        f"no fixed point within {max_cycles} cycles for {target.label}={assumed.value}",
        RevisionTrace(
            assumption=TestAssumption(target, assumed),
            entry=entry,
            steps=tuple(steps),
            restarts=(),
            final_assignment=dict(values),
            final_pair_states={p: trackers[p].state() for p in Pair},
            cycles=laps,
        ),
    )


ALL_ASSUMPTIONS: tuple[TestAssumption, ...] = tuple(
    TestAssumption(target, value)
    for target in (EventId.A2, EventId.B2P, EventId.A2P, EventId.B2)
    for value in (YES, NO)
)


@dataclass(frozen=True)
class VariantResult:
    assumption: TestAssumption
    final_assignment: Mapping[EventId, EventValue]
    cycles: int
    restarted: bool


def run_all_variants(instance: ProtocolInstance, max_cycles: int = 16) -> tuple[VariantResult, ...]:
    """Evaluate every one of the eight possible test assumptions."""
    results = []
    for assumption in ALL_ASSUMPTIONS:
        trace = evaluate(instance, assumption, max_cycles=max_cycles)
        results.append(VariantResult(
            assumption, trace.final_assignment, trace.cycles, trace.restarted,
        ))
    return tuple(results)


@dataclass(frozen=True)
class Prediction:
    measurements: Mapping[EventId, EventValue]
    decisions: Mapping[EventId, EventValue]
    basis: str

    @property
    def all_entanglement_missing(self) -> bool:
        return all(v is NO for v in self.measurements.values())


def predict(config: ScenarioConfig) -> Prediction:
    """Predicted final measurement values under episodic semantics.

    With both first actions YES the interleaved episodes cycle until every
    entanglement is gone (any decoherence opportunity suffices), so all
    measurements end at NO.  Otherwise the chain is forced from the inputs
    and the prediction is the unique consistent propagation.
    """
    if config.both_first_actions_yes:
        measurements = {m: NO for m in MEASUREMENTS}
        decisions = {
            EventId.A1P: YES,
            EventId.B1: YES,
            EventId.A1: config.rule_a.apply(NO),
            EventId.B1P: config.rule_b.apply(NO),
        }
        return Prediction(measurements, decisions, "autonomous-decoherence")
    verdict = enumerate_consistent(build_instance(config))
    if len(verdict.consistent_assignments) != 1:
        raise ProtocolError(
            f"expected a unique consistent propagation for {config.describe()}, "
            f"found {len(verdict.consistent_assignments)}"
        )
    assignment = verdict.consistent_assignments[0]
    measurements = {m: assignment[m] for m in MEASUREMENTS}
    decisions = {d: assignment[d] for d in (EventId.A1P, EventId.A1, EventId.B1, EventId.B1P)}
    return Prediction(measurements, decisions, "unique-consistent-propagation")
