"""Ephemeral-semantics engine: exhaustive search for consistent histories.

Under ephemeral semantics every event happens exactly once and the full
history must satisfy every local rule simultaneously.  A causal loop is the
absence of any such history.

The search space is tiny (six non-input events, at most 64 candidates), so
the engine enumerates it outright; the enumeration doubles as its own
oracle.  Pair intactness at a measurement is decided by each pair's
absolute execution order (A2 before B2 for S, B2' before A2' for S') plus
any scheduled decoherence firing earlier on the cycle.

Scheduled decoherence only bites when both first actions are YES.  With a
NO first action the whole chain is forced from the inputs, episodes never
interleave, and the schedule changes no verdict.  When live, a schedule
entry filters the ideal histories twice over: the pair must still be
intact when the decoherence strikes (the entry records a real event, not a
hypothetical), and every measurement of that pair executing after the
strike must find the entanglement missing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Mapping

from .events import (
    CONTROLLER,
    CYCLE_POS,
    EVENT_ORDER,
    MEASUREMENT_CYCLE,
    MEASUREMENT_PAIR,
    MEASUREMENTS,
    NO,
    YES,
    DecisionRule,
    EventId,
    EventValue,
    Pair,
    ProtocolInstance,
    ScenarioConfig,
    ScheduleEntry,
    all_rule_action_combinations,
    build_instance,
)

Assignment = dict[EventId, EventValue]

NON_INPUT_EVENTS: tuple[EventId, ...] = (
    EventId.A2P, EventId.A1, EventId.A2, EventId.B2, EventId.B1P, EventId.B2P,
)


@dataclass(frozen=True)
class Witness:
    """Minimal explanation of why no consistent history exists."""

    kind: str
    chain: tuple[str, ...]
    description: str


@dataclass(frozen=True)
class ConsistencyVerdict:
    consistent_assignments: tuple[Mapping[EventId, EventValue], ...]
    witness: Witness | None

    @property
    def causal_loop(self) -> bool:
        return not self.consistent_assignments

    def __post_init__(self) -> None:
        assert (self.witness is not None) == self.causal_loop


def _assignment_sort_key(values: Assignment) -> tuple[int, ...]:
    # Lexicographic by EventId in frame-time order, NO before YES.
    return tuple(0 if values[e] is NO else 1 for e in EVENT_ORDER)


def _measurement_death_position(instance: ProtocolInstance, values: Assignment,
                                pair: Pair) -> float:
    """Earliest cycle position at which a NO-type measurement kills `pair`."""
    best = math.inf
    for m in MEASUREMENTS:
        if MEASUREMENT_PAIR[m] is pair and values[CONTROLLER[m]] is NO:
            best = min(best, CYCLE_POS[m])
    return best


def _candidate_assignments(instance: ProtocolInstance) -> Iterator[Assignment]:
    inputs = instance.first_actions
    for combo in itertools.product((YES, NO), repeat=len(NON_INPUT_EVENTS)):
        values: Assignment = dict(inputs)
        values.update(zip(NON_INPUT_EVENTS, combo))
        yield values


def _ideal_consistent(instance: ProtocolInstance, values: Assignment) -> bool:
    death = {p: _measurement_death_position(instance, values, p) for p in Pair}
    for event in NON_INPUT_EVENTS:
        if event in MEASUREMENTS:
            pair = MEASUREMENT_PAIR[event]
            intact = {pair: death[pair] >= CYCLE_POS[event] for pair in Pair}
        else:
            intact = {p: True for p in Pair}
        if instance.local_rule(event, values, intact) is not values[event]:
            return False
    return True


def _survives_schedule(instance: ProtocolInstance, values: Assignment) -> bool:
    """Apply the live-schedule filters to an ideal-consistent history."""
    for entry in instance.schedule.entries:
        fires_at = entry.firing_position
        death = _measurement_death_position(instance, values, entry.pair)
        if death < fires_at:
            return False  # nothing left to decohere; the entry never happened
        for m in MEASUREMENTS:
            if MEASUREMENT_PAIR[m] is entry.pair and CYCLE_POS[m] > fires_at:
                if values[m] is not NO:
                    return False
    return True


def enumerate_consistent(instance: ProtocolInstance) -> ConsistencyVerdict:
    """All globally consistent assignments; a causal loop if there are none."""
    live_schedule = instance.schedule_is_live
    consistent: list[Assignment] = []
    for values in _candidate_assignments(instance):
        if not _ideal_consistent(instance, values):
            continue
        if live_schedule and not _survives_schedule(instance, values):
            continue
        consistent.append(values)
    consistent.sort(key=_assignment_sort_key)
    witness = None if consistent else _build_witness(instance)
    return ConsistencyVerdict(tuple(consistent), witness)


def loop_with_schedule(instance: ProtocolInstance) -> ConsistencyVerdict:
    """Consistency under a non-empty decoherence schedule."""
    if not instance.schedule:
        raise ValueError("instance carries no decoherence schedule")
    return enumerate_consistent(instance)


def replay_assignment(instance: ProtocolInstance, values: Assignment,
                      entry: EventId) -> Assignment:
    """Re-derive every cycle event from `values`, starting the walk at `entry`.

    For a consistent ideal history the result equals the input regardless of
    the entry point; the walk reads dependency values from the assignment
    itself, so only the pair-state bookkeeping could disagree, and that is
    fixed by each pair's absolute execution order.
    """
    start = MEASUREMENT_CYCLE.index(entry)
    death = {p: _measurement_death_position(instance, values, p) for p in Pair}
    replayed: Assignment = dict(instance.first_actions)
    order = [MEASUREMENT_CYCLE[(start + i) % 6] for i in range(6)]
    for event in order:
        intact = {p: death[p] >= CYCLE_POS[event] for p in Pair}
        replayed[event] = instance.local_rule(event, values, intact)
    return replayed


# --- loop witnesses -----------------------------------------------------------


def _link(parity: bool, label: str) -> str:
    return f"= {'¬' if parity else ''}{label}"


def _build_witness(instance: ProtocolInstance) -> Witness:
    cfg = instance.config
    if not instance.schedule_is_live:
        return _parity_witness(cfg)
    # A live schedule emptied the ideal histories; name the conflicts.
    chain: list[str] = []
    ideal = [v for v in _candidate_assignments(instance) if _ideal_consistent(instance, v)]
    if not ideal:
        return _parity_witness(cfg)
    for values in ideal:
        summary = " ".join(f"{e.label}={values[e].value}" for e in MEASUREMENTS)
        reason = _schedule_conflict_reason(instance, values)
        chain.append(f"[{summary}] {reason}")
    return Witness(
        kind="scheduled-decoherence",
        chain=tuple(chain),
        description=(
            f"every ideal history conflicts with scheduled decoherence "
            f"({instance.schedule.label})"
        ),
    )


def _schedule_conflict_reason(instance: ProtocolInstance, values: Assignment) -> str:
    for entry in instance.schedule.entries:
        fires_at = entry.firing_position
        death = _measurement_death_position(instance, values, entry.pair)
        if death < fires_at:
            killer = next(
                m for m in MEASUREMENTS
                if MEASUREMENT_PAIR[m] is entry.pair and CYCLE_POS[m] == death
            )
            return (f"pair {entry.pair.value} already demolished by {killer.label} "
                    f"before decoherence on {entry.arc.label}")
        for m in MEASUREMENTS:
            if (MEASUREMENT_PAIR[m] is entry.pair and CYCLE_POS[m] > fires_at
                    and values[m] is not NO):
                return (f"{m.label}={values[m].value} impossible after decoherence "
                        f"of pair {entry.pair.value} on {entry.arc.label}")
    return "rejected by schedule"  # pragma: no cover - defensive


def _parity_witness(cfg: ScenarioConfig) -> Witness:
    """Shortest cyclic chain of violated implications around the cycle.

    With both first actions YES the cycle composes to
    A2' = B2' = ±B2 = ±A1 = ±A2'; an odd number of OPPOSITE links closes it
    on a negation.
    """
    parity = False
    chain = ["A2'"]
    chain.append(_link(parity, "B2'"))
    parity ^= cfg.rule_b is DecisionRule.OPPOSITE
    chain.append(_link(parity, "B2"))
    chain.append(_link(parity, "A1"))
    parity ^= cfg.rule_a is DecisionRule.OPPOSITE
    chain.append(_link(parity, "A2'"))
    return Witness(
        kind="implication-cycle",
        chain=tuple(chain),
        description=" ".join(chain),
    )


# --- the 16-combination scenario table -----------------------------------------


@dataclass(frozen=True)
class ScenarioRow:
    rule_a: DecisionRule
    rule_b: DecisionRule
    first_action_a: EventValue
    first_action_b: EventValue
    causal_loop: bool
    assignment_count: int


def scenario_table() -> tuple[ScenarioRow, ...]:
    """Verdicts for all 16 ideal rule/first-action combinations."""
    rows = []
    for cfg in all_rule_action_combinations():
        verdict = enumerate_consistent(build_instance(cfg))
        rows.append(ScenarioRow(
            cfg.rule_a, cfg.rule_b, cfg.first_action_a, cfg.first_action_b,
            verdict.causal_loop, len(verdict.consistent_assignments),
        ))
    return tuple(rows)
