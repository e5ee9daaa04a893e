"""Stochastic decoherence layer.

Each of the 8 arcs of the execution order is a decoherence opportunity
("slot") for each of the two pairs, 16 slots in all.  A stochastic run
samples every slot independently with probability ``p`` and keeps the
earliest struck arc per pair (the first decoherence already destroys the
superposition).  Trials derive independent counter-based RNG streams from
``(seed, trial_index)``; identical ``(seed, p, n_trials, config)`` replays
bit-identically.

RNG: numpy Philox (counter-based, 64-bit keys), recorded in run metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .ephemeral import enumerate_consistent
from .events import (
    DECOHERENCE_SLOTS,
    Arc,
    ConfigurationError,
    DecoherenceSchedule,
    Pair,
    ScenarioConfig,
    Scheduled,
    build_instance,
)

RNG_ALGORITHM = "numpy.random.Philox"

#: Decoherence opportunities per full circuit of the event cycle.
SLOTS_PER_CYCLE = len(DECOHERENCE_SLOTS) * len(Pair)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, trial], dtype=np.uint64)))


def sample_schedule(p: float, rng: np.random.Generator) -> DecoherenceSchedule:
    """Sample one decoherence schedule at per-slot probability `p`.

    Slots are drawn per pair in canonical firing order; keeping the first
    success is distribution-identical to sampling all slots independently
    and keeping the earliest.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"decoherence probability {p} outside [0, 1]")
    entries: list[tuple[Pair, Arc]] = []
    for pair in (Pair.S, Pair.SP):
        draws = rng.random(len(DECOHERENCE_SLOTS))
        hits = np.nonzero(draws < p)[0]
        if hits.size:
            entries.append((pair, DECOHERENCE_SLOTS[int(hits[0])]))
    return DecoherenceSchedule.of(entries)


@dataclass(frozen=True)
class LoopProbability:
    estimate: float
    ci_low: float
    ci_high: float
    p: float
    n_trials: int
    seed: int
    loops: int
    rng_algorithm: str = RNG_ALGORITHM


def _wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    # 95% Wilson score interval for a binomial proportion.
    if n == 0:
        return (0.0, 1.0)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _scheduled_config(config: ScenarioConfig, schedule: DecoherenceSchedule) -> ScenarioConfig:
    return ScenarioConfig(
        rule_a=config.rule_a,
        rule_b=config.rule_b,
        first_action_a=config.first_action_a,
        first_action_b=config.first_action_b,
        mode=Scheduled(schedule),
    )


def loop_probability(config: ScenarioConfig, p: float, n_trials: int, seed: int) -> LoopProbability:
    """Fraction of sampled schedules whose instance has no consistent history."""
    if not config.both_first_actions_yes:
        raise ConfigurationError(
            "loop probability is defined for scenarios with both first actions YES"
        )
    if n_trials < 1:
        raise ConfigurationError("n_trials must be positive")
    verdict_cache: dict[DecoherenceSchedule, bool] = {}
    loops = 0
    for trial in range(n_trials):
        schedule = sample_schedule(p, _trial_rng(seed, trial))
        looped = verdict_cache.get(schedule)
        if looped is None:
            instance = build_instance(_scheduled_config(config, schedule))
            looped = enumerate_consistent(instance).causal_loop
            verdict_cache[schedule] = looped
        loops += looped
    low, high = _wilson_interval(loops, n_trials)
    return LoopProbability(loops / n_trials, low, high, p, n_trials, seed, loops)


def iter_schedule_distribution(p: float) -> Iterator[tuple[DecoherenceSchedule, float]]:
    """Exact distribution of sampled schedules: 9x9 earliest-slot outcomes."""
    n_slots = len(DECOHERENCE_SLOTS)
    per_pair: list[tuple[Arc | None, float]] = []
    for i, arc in enumerate(DECOHERENCE_SLOTS):
        per_pair.append((arc, (1.0 - p) ** i * p))
    per_pair.append((None, (1.0 - p) ** n_slots))
    for arc_s, w_s in per_pair:
        for arc_sp, w_sp in per_pair:
            entries = []
            if arc_s is not None:
                entries.append((Pair.S, arc_s))
            if arc_sp is not None:
                entries.append((Pair.SP, arc_sp))
            yield DecoherenceSchedule.of(entries), w_s * w_sp


def exact_loop_probability(config: ScenarioConfig, p: float) -> float:
    """Exhaustive probability-weighted sum over the whole schedule space."""
    total = 0.0
    for schedule, weight in iter_schedule_distribution(p):
        if weight == 0.0:
            continue
        instance = build_instance(_scheduled_config(config, schedule))
        if enumerate_consistent(instance).causal_loop:
            total += weight
    return total


def repeated_cycle_survival(p: float, n_cycles: int, slots_per_cycle: int = SLOTS_PER_CYCLE) -> float:
    """Probability of at least one decoherence over `n_cycles` circuits.

    Closed form 1 - (1-p)^(n_cycles * slots_per_cycle); p = 0 claims nothing
    and returns 0.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"decoherence probability {p} outside [0, 1]")
    if n_cycles < 0 or slots_per_cycle < 0:
        raise ConfigurationError("cycle and slot counts must be nonnegative")
    if p == 0.0:
        return 0.0
    total_slots = n_cycles * slots_per_cycle
    return -math.expm1(total_slots * math.log1p(-p))


def survival_mc(p: float, n_cycles: int, n_trials: int, seed: int,
                slots_per_cycle: int = SLOTS_PER_CYCLE) -> float:
    """Monte Carlo companion of repeated_cycle_survival (same event space)."""
    if n_trials < 1:
        raise ConfigurationError("n_trials must be positive")
    rng = _trial_rng(seed, 0)
    total_slots = n_cycles * slots_per_cycle
    hits = rng.binomial(total_slots, p, size=n_trials)
    return float(np.mean(hits > 0))
