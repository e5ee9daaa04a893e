"""Core protocol model for the Causal Loop Creation Experiment (CLCE).

Two observers, A and B, each receive one photon from each of two entangled
pair sources, S and S'.  Each observer makes two decisions and two
measurements.  A decision selects the *type* of the following measurement:
an entanglement-preserving one (YES) or an entanglement-demolishing one
(NO).  A measurement returns YES ("entanglement confirmed") exactly when it
is preserving and the pair's superposition is still intact; it returns NO
otherwise, and a demolishing measurement destroys its pair's superposition.

The delayed-choice wiring orders each frame's second measurement before
the *other* frame's first measurement.  Together with the per-frame
orderings this yields one directed cycle through all four measurements,

    B2' -> A2' -> A1 -> A2 -> B2 -> B1' -> B2'

which cannot be flattened onto a single timeline.  That cycle, not a
linear clock, carries all ordering content used here.  "Precedes" always
means precedes along the cycle from the canonical entry point B2'.

Unintended decoherence events are attached to arcs of the execution order:
an entry ``(pair, arc)`` states that the pair's superposition is destroyed
between the arc's endpoints.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Union


class ProtocolError(Exception):
    """Base class for protocol-level failures."""


class ConfigurationError(ProtocolError):
    """Invalid scenario configuration or decoherence schedule."""


class EvaluationOrderError(ProtocolError):
    """A local rule read an event value that has not been determined yet."""


class EventValue(Enum):
    YES = "YES"
    NO = "NO"
    UNKNOWN = "UNKNOWN"

    def negated(self) -> "EventValue":
        if self is EventValue.YES:
            return EventValue.NO
        if self is EventValue.NO:
            return EventValue.YES
        raise EvaluationOrderError("cannot negate UNKNOWN")


YES = EventValue.YES
NO = EventValue.NO
UNKNOWN = EventValue.UNKNOWN


class DecisionRule(Enum):
    """How an observer maps a first-measurement result to the second action."""

    SAME = "same"
    OPPOSITE = "opposite"

    def apply(self, observed: EventValue) -> EventValue:
        if observed is UNKNOWN:
            raise EvaluationOrderError("decision rule applied to UNKNOWN result")
        return observed if self is DecisionRule.SAME else observed.negated()


class Frame(Enum):
    A = "A"
    B = "B"


class Pair(Enum):
    """The two entangled photon-pair sources."""

    S = "S"
    SP = "Sp"


class EventKind(Enum):
    DECISION = "decision"
    MEASUREMENT = "measurement"


class EventId(Enum):
    """The eight protocol events; the member order is frame-local time order."""

    A1P = "A1'"
    A2P = "A2'"
    A1 = "A1"
    A2 = "A2"
    B1 = "B1"
    B2 = "B2"
    B1P = "B1'"
    B2P = "B2'"

    @property
    def label(self) -> str:
        return self.value

    @property
    def frame(self) -> Frame:
        return Frame.A if self.name.startswith("A") else Frame.B

    @property
    def kind(self) -> EventKind:
        return EventKind.DECISION if "1" in self.name else EventKind.MEASUREMENT

    @property
    def pair(self) -> Pair:
        try:
            return MEASUREMENT_PAIR[self]
        except KeyError:
            raise ValueError(f"{self.label} is a decision, not a measurement") from None


# Frame-local time order of all eight events (A's column, then B's column).
EVENT_ORDER: tuple[EventId, ...] = (
    EventId.A1P, EventId.A2P, EventId.A1, EventId.A2,
    EventId.B1, EventId.B2, EventId.B1P, EventId.B2P,
)

MEASUREMENTS: tuple[EventId, ...] = (EventId.A2P, EventId.A2, EventId.B2, EventId.B2P)
DECISIONS: tuple[EventId, ...] = (EventId.A1P, EventId.A1, EventId.B1, EventId.B1P)

# Frame A measures the S' photon first, then the S photon; frame B the reverse.
MEASUREMENT_PAIR: Mapping[EventId, Pair] = {
    EventId.A2P: Pair.SP,
    EventId.B2P: Pair.SP,
    EventId.A2: Pair.S,
    EventId.B2: Pair.S,
}

# The decision that fixes each measurement's type.
CONTROLLER: Mapping[EventId, EventId] = {
    EventId.A2P: EventId.A1P,
    EventId.A2: EventId.A1,
    EventId.B2: EventId.B1,
    EventId.B2P: EventId.B1P,
}

# First decisions are free observer inputs, never solved for.
FIRST_ACTIONS: tuple[EventId, EventId] = (EventId.A1P, EventId.B1)

# The single directed cycle through all four measurements, entered at B2'.
MEASUREMENT_CYCLE: tuple[EventId, ...] = (
    EventId.B2P, EventId.A2P, EventId.A1, EventId.A2, EventId.B2, EventId.B1P,
)
CYCLE_POS: Mapping[EventId, int] = {e: i for i, e in enumerate(MEASUREMENT_CYCLE)}

# Per pair: (executed-first measurement, executed-second measurement).  The
# delayed-choice protocol makes these orderings absolute: A2 runs before B2,
# and B2' runs before A2'.
PAIR_MEASUREMENTS: Mapping[Pair, tuple[EventId, EventId]] = {
    Pair.S: (EventId.A2, EventId.B2),
    Pair.SP: (EventId.B2P, EventId.A2P),
}


@dataclass(frozen=True)
class Arc:
    """A directed precedence edge of the execution order."""

    tail: EventId
    head: EventId

    @property
    def label(self) -> str:
        return f"{self.tail.label}->{self.head.label}"

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.label


def _chain(*events: EventId) -> tuple[Arc, ...]:
    return tuple(Arc(a, b) for a, b in zip(events, events[1:]))


FRAME_A_CHAIN = _chain(EventId.A1P, EventId.A2P, EventId.A1, EventId.A2)
FRAME_B_CHAIN = _chain(EventId.B1, EventId.B2, EventId.B1P, EventId.B2P)
CROSS_ARCS = (Arc(EventId.A2, EventId.B2), Arc(EventId.B2P, EventId.A2P))

#: All eight precedence arcs of the execution order.
ALL_ARCS: tuple[Arc, ...] = FRAME_A_CHAIN + FRAME_B_CHAIN + CROSS_ARCS

#: The six arcs forming the measurement cycle itself.
CYCLE_ARCS: tuple[Arc, ...] = tuple(
    Arc(MEASUREMENT_CYCLE[i], MEASUREMENT_CYCLE[(i + 1) % 6]) for i in range(6)
)

#: Arcs feeding the cycle from the two free first decisions.
INPUT_ARCS: tuple[Arc, ...] = (
    Arc(EventId.A1P, EventId.A2P),
    Arc(EventId.B1, EventId.B2),
)


def arc_firing_position(arc: Arc) -> float:
    """Cycle position at which a decoherence on `arc` takes effect.

    A decoherence between the arc's endpoints strikes just before the arc's
    head executes; half-integer positions interleave with the event
    positions of the canonical cycle listing.
    """
    return CYCLE_POS[arc.head] - 0.5


def _slot_sort_key(entry: tuple[Pair, Arc]) -> tuple:
    pair, arc = entry
    return (arc_firing_position(arc), arc in INPUT_ARCS, arc.label)


#: Decoherence slots in canonical firing order (earliest first), per pair.
DECOHERENCE_SLOTS: tuple[Arc, ...] = tuple(
    sorted(ALL_ARCS, key=lambda a: (arc_firing_position(a), a in INPUT_ARCS, a.label))
)


def parse_arc(text: str) -> Arc:
    """Parse an arc label like ``A2->B2`` (primes written ``'`` or ``p``)."""
    parts = text.replace(" ", "").split("->")
    if len(parts) != 2:
        raise ConfigurationError(f"malformed arc {text!r}; expected TAIL->HEAD")
    return Arc(parse_event(parts[0]), parse_event(parts[1]))


def parse_event(token: str) -> EventId:
    key = token.strip().lower().replace("'", "p")
    for event in EventId:
        if event.name.lower() == key:
            return event
    raise ConfigurationError(f"unknown event {token!r}")


def parse_pair(token: str) -> Pair:
    key = token.strip().lower().replace("'", "p")
    if key == "s":
        return Pair.S
    if key == "sp":
        return Pair.SP
    raise ConfigurationError(f"unknown pair {token!r} (expected S or Sp)")


@dataclass(frozen=True)
class ScheduleEntry:
    pair: Pair
    arc: Arc

    @property
    def label(self) -> str:
        return f"{self.pair.value}:{self.arc.label}"

    @property
    def firing_position(self) -> float:
        return arc_firing_position(self.arc)


@dataclass(frozen=True)
class DecoherenceSchedule:
    """Unintended-decoherence events placed on arcs of the execution order.

    At most one entry per pair: the first decoherence already destroys the
    superposition, so a second entry for the same pair is either an exact
    duplicate (dropped) or contradictory (rejected).
    """

    entries: tuple[ScheduleEntry, ...] = ()

    def __post_init__(self) -> None:
        seen: dict[Pair, Arc] = {}
        for entry in self.entries:
            if entry.arc not in ALL_ARCS:
                raise ConfigurationError(
                    f"decoherence arc {entry.arc.label} is not on the execution cycle"
                )
            prior = seen.get(entry.pair)
            if prior is not None and prior != entry.arc:
                raise ConfigurationError(
                    f"pair {entry.pair.value} already decoheres on {prior.label}; "
                    f"second entry on {entry.arc.label} rejected"
                )
            seen[entry.pair] = entry.arc

    @classmethod
    def of(cls, entries: Iterable[tuple[Pair, Arc]]) -> "DecoherenceSchedule":
        unique: list[ScheduleEntry] = []
        for pair, arc in entries:
            entry = ScheduleEntry(pair, arc)
            if entry not in unique:
                unique.append(entry)
        unique.sort(key=lambda e: (_slot_sort_key((e.pair, e.arc)), e.pair.value))
        return cls(tuple(unique))

    @classmethod
    def parse(cls, text: str) -> "DecoherenceSchedule":
        """Parse e.g. ``S:A2->B2, Sp:B1'->B2'`` (empty string -> empty schedule)."""
        text = text.strip()
        if not text:
            return cls()
        entries = []
        for chunk in text.split(","):
            if ":" not in chunk:
                raise ConfigurationError(f"malformed schedule entry {chunk!r}")
            pair_txt, arc_txt = chunk.split(":", 1)
            entries.append((parse_pair(pair_txt), parse_arc(arc_txt)))
        return cls.of(entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    @property
    def label(self) -> str:
        return ", ".join(e.label for e in self.entries) if self.entries else "(empty)"


@dataclass(frozen=True)
class Ideal:
    """No unintended decoherence."""


@dataclass(frozen=True)
class Scheduled:
    schedule: DecoherenceSchedule


@dataclass(frozen=True)
class Stochastic:
    """Independent per-slot decoherence probability; sampled by the MC layer."""

    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"decoherence probability {self.p} outside [0, 1]")


Mode = Union[Ideal, Scheduled, Stochastic]


@dataclass(frozen=True)
class ScenarioConfig:
    """Decision rules, first actions, and decoherence mode for one scenario."""

    rule_a: DecisionRule
    rule_b: DecisionRule
    first_action_a: EventValue
    first_action_b: EventValue
    mode: Mode = field(default_factory=Ideal)

    def __post_init__(self) -> None:
        for name, value in (("first_action_a", self.first_action_a),
                            ("first_action_b", self.first_action_b)):
            if value not in (YES, NO):
                raise ConfigurationError(f"{name} must be YES or NO, got {value}")

    @property
    def both_first_actions_yes(self) -> bool:
        return self.first_action_a is YES and self.first_action_b is YES

    def rule(self, frame: Frame) -> DecisionRule:
        return self.rule_a if frame is Frame.A else self.rule_b

    def describe(self) -> str:
        return (f"rules=({self.rule_a.value},{self.rule_b.value}) "
                f"first=({self.first_action_a.value},{self.first_action_b.value})")


class PairStatus(Enum):
    INTACT = "INTACT"
    DEMOLISHED = "DEMOLISHED"


@dataclass(frozen=True)
class PairState:
    """Status of one photon pair plus what demolished it, if anything."""

    status: PairStatus
    demolished_by: str | None = None

    def __post_init__(self) -> None:
        if (self.status is PairStatus.DEMOLISHED) != (self.demolished_by is not None):
            raise ProtocolError("demolition provenance must accompany DEMOLISHED")


INTACT_STATE = PairState(PairStatus.INTACT)


@dataclass(frozen=True)
class ProtocolInstance:
    """An immutable bundle of the eight events, their cycle, and local rules.

    Evaluation never mutates the instance; engines keep per-call scratch
    state, so instances are safe to share across threads.
    """

    config: ScenarioConfig
    schedule: DecoherenceSchedule

    @property
    def first_actions(self) -> dict[EventId, EventValue]:
        return {
            EventId.A1P: self.config.first_action_a,
            EventId.B1: self.config.first_action_b,
        }

    def controlling_decision(self, measurement: EventId) -> EventId:
        return CONTROLLER[measurement]

    @property
    def schedule_is_live(self) -> bool:
        """Whether scheduled decoherence can alter outcomes at all.

        Interleaved present episodes exist only when both observers open
        with entanglement-preserving actions; with any NO first action the
        event chain is forced from the inputs and a decoherence changes no
        verdict.
        """
        return bool(self.schedule) and self.config.both_first_actions_yes

    def local_rule(
        self,
        event: EventId,
        values: Mapping[EventId, EventValue],
        pair_intact: Mapping[Pair, bool],
    ) -> EventValue:
        """Value of `event` given already-determined values and pair states.

        Decisions: the first actions are the configured inputs; A1 and B1'
        apply the frame's rule to the frame's first-measurement result.
        Measurements: a NO-type measurement returns NO (and demolishes its
        pair); a YES-type measurement returns YES exactly when its pair is
        intact at execution.
        """
        cfg = self.config
        if event is EventId.A1P:
            return cfg.first_action_a
        if event is EventId.B1:
            return cfg.first_action_b
        if event is EventId.A1:
            return cfg.rule_a.apply(_required(values, EventId.A2P))
        if event is EventId.B1P:
            return cfg.rule_b.apply(_required(values, EventId.B2))
        # Measurements.
        mtype = _required(values, CONTROLLER[event])
        if mtype is NO:
            return NO
        return YES if pair_intact[MEASUREMENT_PAIR[event]] else NO


def _required(values: Mapping[EventId, EventValue], event: EventId) -> EventValue:
    value = values.get(event, UNKNOWN)
    if value is UNKNOWN:
        raise EvaluationOrderError(f"value of {event.label} read before evaluation")
    return value


def build_instance(config: ScenarioConfig) -> ProtocolInstance:
    """Assemble an instance: events, cycle, rule closure, both pairs intact."""
    if isinstance(config.mode, Scheduled):
        schedule = config.mode.schedule
    else:
        schedule = DecoherenceSchedule()
    return ProtocolInstance(config=config, schedule=schedule)


# --- frame/pair swap symmetry -------------------------------------------------
#
# Relabeling A<->B, S<->S', primed<->unprimed maps the protocol onto itself;
# both engines' verdicts must be invariant under it.

SWAP_EVENT: Mapping[EventId, EventId] = {
    EventId.A1P: EventId.B1, EventId.B1: EventId.A1P,
    EventId.A2P: EventId.B2, EventId.B2: EventId.A2P,
    EventId.A1: EventId.B1P, EventId.B1P: EventId.A1,
    EventId.A2: EventId.B2P, EventId.B2P: EventId.A2,
}

SWAP_PAIR: Mapping[Pair, Pair] = {Pair.S: Pair.SP, Pair.SP: Pair.S}


def swap_arc(arc: Arc) -> Arc:
    return Arc(SWAP_EVENT[arc.tail], SWAP_EVENT[arc.head])


def swap_config(config: ScenarioConfig) -> ScenarioConfig:
    mode: Mode = config.mode
    if isinstance(mode, Scheduled):
        mode = Scheduled(DecoherenceSchedule.of(
            (SWAP_PAIR[e.pair], swap_arc(e.arc)) for e in mode.schedule.entries
        ))
    return ScenarioConfig(
        rule_a=config.rule_b,
        rule_b=config.rule_a,
        first_action_a=config.first_action_b,
        first_action_b=config.first_action_a,
        mode=mode,
    )


def swap_assignment(values: Mapping[EventId, EventValue]) -> dict[EventId, EventValue]:
    return {SWAP_EVENT[e]: v for e, v in values.items()}


def all_rule_action_combinations() -> list[ScenarioConfig]:
    """The 16 ideal (rule_a, rule_b, first_a, first_b) combinations, fixed order."""
    combos = []
    for rule_a, rule_b, fa, fb in itertools.product(
        (DecisionRule.SAME, DecisionRule.OPPOSITE),
        (DecisionRule.SAME, DecisionRule.OPPOSITE),
        (YES, NO),
        (YES, NO),
    ):
        combos.append(ScenarioConfig(rule_a, rule_b, fa, fb))
    return combos
