"""Declarative run configuration: an INI file with three sections.

Flags given on the command line override file values.  Parsing is strict:
unknown sections or keys are rejected (with the offending line), and a
serialize -> parse round trip is the identity.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from typing import Mapping

from .events import (
    NO,
    YES,
    ConfigurationError,
    DecisionRule,
    DecoherenceSchedule,
    EventValue,
    Ideal,
    Mode,
    ScenarioConfig,
    Scheduled,
    Stochastic,
)


class ConfigError(ConfigurationError):
    """Configuration file error, carrying a line number when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        location = ""
        if line is not None:
            location = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + location)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class OpticsSettings:
    wavelength: float = 700e-9
    separation: float = 1e-3
    screen_distance: float | None = None  # None: solve the destructive geometry
    aperture: float | None = None  # None: grid-optimize the width
    aux_phase: float = 0.0
    waist: float = 5e-6


@dataclass(frozen=True)
class RunSettings:
    seed: int = 1
    out_dir: str = "."
    n_trials: int = 1000
    p_grid: tuple[float, ...] = (0.0, 0.1, 0.5)
    alpha: float = 0.01
    n_photons: int = 10000
    profile_points: int = 2001
    calibration_trials: int = 200
    emit_trace: bool = False
    assert_no_loop: bool = False
    max_cycles: int = 16


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=lambda: ScenarioConfig(
        DecisionRule.SAME, DecisionRule.OPPOSITE, YES, YES))
    optics: OpticsSettings = field(default_factory=OpticsSettings)
    run: RunSettings = field(default_factory=RunSettings)


_SCENARIO_KEYS = ("rule_a", "rule_b", "first_action_a", "first_action_b",
                  "mode", "schedule", "p")
_OPTICS_KEYS = ("wavelength", "separation", "screen_distance", "aperture",
                "aux_phase", "waist")
_RUN_KEYS = ("seed", "out_dir", "n_trials", "p_grid", "alpha", "n_photons",
             "profile_points", "calibration_trials", "emit_trace",
             "assert_no_loop", "max_cycles")
_SECTIONS: Mapping[str, tuple[str, ...]] = {
    "scenario": _SCENARIO_KEYS,
    "optics": _OPTICS_KEYS,
    "run": _RUN_KEYS,
}


def _find_line(text: str, needle: str) -> int | None:
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(needle):
            return i
    return None


def _parse_rule(raw: str, text: str, key: str) -> DecisionRule:
    try:
        return DecisionRule(raw.strip().lower())
    except ValueError:
        raise ConfigError(f"{key} must be 'same' or 'opposite', got {raw!r}",
                          _find_line(text, key)) from None


def _parse_yes_no(raw: str, text: str, key: str) -> EventValue:
    value = raw.strip().lower()
    if value == "yes":
        return YES
    if value == "no":
        return NO
    raise ConfigError(f"{key} must be 'yes' or 'no', got {raw!r}", _find_line(text, key))


def _parse_bool(raw: str, text: str, key: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {raw!r}", _find_line(text, key))


def _parse_float(raw: str, text: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}", _find_line(text, key)) from None


def _parse_int(raw: str, text: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}", _find_line(text, key)) from None


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"config syntax error: {exc.message.splitlines()[0]}", line) from exc

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", _find_line(text, f"[{section}]"))
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", _find_line(text, key))

    def get(section: str, key: str, default: str) -> str:
        return parser.get(section, key, fallback=default).strip()

    rule_a = _parse_rule(get("scenario", "rule_a", "same"), text, "rule_a")
    rule_b = _parse_rule(get("scenario", "rule_b", "opposite"), text, "rule_b")
    first_a = _parse_yes_no(get("scenario", "first_action_a", "yes"), text, "first_action_a")
    first_b = _parse_yes_no(get("scenario", "first_action_b", "yes"), text, "first_action_b")
    mode_name = get("scenario", "mode", "ideal").lower()
    schedule_text = get("scenario", "schedule", "")
    p_text = get("scenario", "p", "")

    mode: Mode
    if mode_name == "ideal":
        if schedule_text:
            raise ConfigError("mode=ideal does not take a schedule", _find_line(text, "schedule"))
        mode = Ideal()
    elif mode_name == "scheduled":
        mode = Scheduled(DecoherenceSchedule.parse(schedule_text))
    elif mode_name == "stochastic":
        if not p_text:
            raise ConfigError("mode=stochastic requires p", _find_line(text, "mode"))
        mode = Stochastic(_parse_float(p_text, text, "p"))
    else:
        raise ConfigError(f"mode must be ideal, scheduled or stochastic, got {mode_name!r}",
                          _find_line(text, "mode"))

    scenario = ScenarioConfig(rule_a, rule_b, first_a, first_b, mode)

    def auto_float(key: str) -> float | None:
        raw = get("optics", key, "auto")
        if raw == "" or raw.lower() == "auto":
            return None
        return _parse_float(raw, text, key)

    optics = OpticsSettings(
        wavelength=_parse_float(get("optics", "wavelength", repr(OpticsSettings.wavelength)),
                                text, "wavelength"),
        separation=_parse_float(get("optics", "separation", repr(OpticsSettings.separation)),
                                text, "separation"),
        screen_distance=auto_float("screen_distance"),
        aperture=auto_float("aperture"),
        aux_phase=_parse_float(get("optics", "aux_phase", "0.0"), text, "aux_phase"),
        waist=_parse_float(get("optics", "waist", repr(OpticsSettings.waist)), text, "waist"),
    )

    grid_text = get("run", "p_grid", "0.0,0.1,0.5")
    try:
        p_grid = tuple(float(tok) for tok in grid_text.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"p_grid must be comma-separated numbers, got {grid_text!r}",
                          _find_line(text, "p_grid")) from None

    run = RunSettings(
        seed=_parse_int(get("run", "seed", "1"), text, "seed"),
        out_dir=get("run", "out_dir", "."),
        n_trials=_parse_int(get("run", "n_trials", "1000"), text, "n_trials"),
        p_grid=p_grid,
        alpha=_parse_float(get("run", "alpha", "0.01"), text, "alpha"),
        n_photons=_parse_int(get("run", "n_photons", "10000"), text, "n_photons"),
        profile_points=_parse_int(get("run", "profile_points", "2001"), text, "profile_points"),
        calibration_trials=_parse_int(get("run", "calibration_trials", "200"), text,
                                      "calibration_trials"),
        emit_trace=_parse_bool(get("run", "emit_trace", "false"), text, "emit_trace"),
        assert_no_loop=_parse_bool(get("run", "assert_no_loop", "false"), text, "assert_no_loop"),
        max_cycles=_parse_int(get("run", "max_cycles", "16"), text, "max_cycles"),
    )
    return RunConfig(scenario, optics, run)


def _fmt(value: float | None) -> str:
    return "auto" if value is None else repr(value)


def config_to_text(config: RunConfig) -> str:
    """Canonical INI rendering; parse_config(config_to_text(c)) == c."""
    sc = config.scenario
    if isinstance(sc.mode, Ideal):
        mode, schedule, p = "ideal", "", ""
    elif isinstance(sc.mode, Scheduled):
        mode = "scheduled"
        schedule = ", ".join(e.label for e in sc.mode.schedule.entries)
        p = ""
    else:
        mode, schedule, p = "stochastic", "", repr(sc.mode.p)
    out = io.StringIO()
    out.write("[scenario]\n")
    out.write(f"rule_a = {sc.rule_a.value}\n")
    out.write(f"rule_b = {sc.rule_b.value}\n")
    out.write(f"first_action_a = {sc.first_action_a.value.lower()}\n")
    out.write(f"first_action_b = {sc.first_action_b.value.lower()}\n")
    out.write(f"mode = {mode}\n")
    out.write(f"schedule = {schedule}\n")
    out.write(f"p = {p}\n\n")
    op = config.optics
    out.write("[optics]\n")
    out.write(f"wavelength = {repr(op.wavelength)}\n")
    out.write(f"separation = {repr(op.separation)}\n")
    out.write(f"screen_distance = {_fmt(op.screen_distance)}\n")
    out.write(f"aperture = {_fmt(op.aperture)}\n")
    out.write(f"aux_phase = {repr(op.aux_phase)}\n")
    out.write(f"waist = {repr(op.waist)}\n\n")
    rn = config.run
    out.write("[run]\n")
    out.write(f"seed = {rn.seed}\n")
    out.write(f"out_dir = {rn.out_dir}\n")
    out.write(f"n_trials = {rn.n_trials}\n")
    out.write(f"p_grid = {','.join(repr(v) for v in rn.p_grid)}\n")
    out.write(f"alpha = {repr(rn.alpha)}\n")
    out.write(f"n_photons = {rn.n_photons}\n")
    out.write(f"profile_points = {rn.profile_points}\n")
    out.write(f"calibration_trials = {rn.calibration_trials}\n")
    out.write(f"emit_trace = {'true' if rn.emit_trace else 'false'}\n")
    out.write(f"assert_no_loop = {'true' if rn.assert_no_loop else 'false'}\n")
    out.write(f"max_cycles = {rn.max_cycles}\n")
    return out.getvalue()


def config_to_dict(config: RunConfig) -> dict:
    """JSON-friendly embedding of the exact configuration."""
    sc = config.scenario
    if isinstance(sc.mode, Ideal):
        mode: dict = {"kind": "ideal"}
    elif isinstance(sc.mode, Scheduled):
        mode = {"kind": "scheduled",
                "schedule": [e.label for e in sc.mode.schedule.entries]}
    else:
        mode = {"kind": "stochastic", "p": sc.mode.p}
    return {
        "scenario": {
            "rule_a": sc.rule_a.value,
            "rule_b": sc.rule_b.value,
            "first_action_a": sc.first_action_a.value,
            "first_action_b": sc.first_action_b.value,
            "mode": mode,
        },
        "optics": {
            "wavelength": config.optics.wavelength,
            "separation": config.optics.separation,
            "screen_distance": config.optics.screen_distance,
            "aperture": config.optics.aperture,
            "aux_phase": config.optics.aux_phase,
            "waist": config.optics.waist,
        },
        "run": {
            "seed": config.run.seed,
            "n_trials": config.run.n_trials,
            "p_grid": list(config.run.p_grid),
            "alpha": config.run.alpha,
            "n_photons": config.run.n_photons,
            "profile_points": config.run.profile_points,
            "calibration_trials": config.run.calibration_trials,
            "max_cycles": config.run.max_cycles,
        },
    }
