"""Command-line runner: scenario | mc | optics | replay.

Exit codes: 0 success, 1 usage or configuration error, 2 assertion failure
(loop asserted absent, or replay mismatch), 3 revision nontermination.

Outputs are byte-identical for identical (config, seed); every report
embeds the exact configuration and seed that produced it.  The default
output directory comes from --out, then $CLCE_OUT_DIR, then the current
directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import decoherence, ephemeral, episodic, optics
from .config import (
    ConfigError,
    OpticsSettings,
    RunConfig,
    RunSettings,
    config_to_dict,
    config_to_text,
    parse_config,
)
from .episodic import NonterminationError
from .events import (
    EVENT_ORDER,
    MEASUREMENTS,
    ConfigurationError,
    DecisionRule,
    DecoherenceSchedule,
    EventValue,
    Ideal,
    ScenarioConfig,
    Scheduled,
    Stochastic,
    build_instance,
    parse_event,
)
from .traces import episodic_trace_lines, jsonl, photon_trace_lines, read_jsonl

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSERTION = 2
EXIT_NONTERMINATION = 3


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _json_text(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _out_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("CLCE_OUT_DIR")
    if env:
        return Path(env)
    return Path(config.run.out_dir)


def _load_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        config = parse_config(text)
    else:
        config = RunConfig()
    return _apply_overrides(args, config)


def _apply_overrides(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    scenario = config.scenario
    if getattr(args, "rules", None):
        parts = [p.strip().lower() for p in args.rules.split(",")]
        if len(parts) != 2:
            raise ConfigError("--rules takes two comma-separated values, e.g. same,opposite")
        scenario = dataclasses.replace(
            scenario, rule_a=DecisionRule(parts[0]), rule_b=DecisionRule(parts[1]))
    if getattr(args, "first", None):
        parts = [p.strip().upper() for p in args.first.split(",")]
        if len(parts) != 2 or any(p not in ("YES", "NO") for p in parts):
            raise ConfigError("--first takes two comma-separated values, e.g. yes,yes")
        scenario = dataclasses.replace(
            scenario,
            first_action_a=EventValue(parts[0]),
            first_action_b=EventValue(parts[1]),
        )
    if getattr(args, "schedule", None) is not None:
        schedule = DecoherenceSchedule.parse(args.schedule)
        scenario = dataclasses.replace(scenario, mode=Scheduled(schedule))
    if getattr(args, "p", None) is not None:
        scenario = dataclasses.replace(scenario, mode=Stochastic(args.p))

    optics_settings = config.optics
    for flag, key in (("wavelength", "wavelength"), ("separation", "separation"),
                      ("aux_phase", "aux_phase"), ("waist", "waist")):
        value = getattr(args, flag, None)
        if value is not None:
            optics_settings = dataclasses.replace(optics_settings, **{key: value})
    for flag in ("screen_distance", "aperture"):
        raw = getattr(args, flag, None)
        if raw is not None:
            value = None if raw.strip().lower() == "auto" else float(raw)
            optics_settings = dataclasses.replace(optics_settings, **{flag: value})

    run = config.run
    for flag in ("seed", "n_trials", "alpha", "n_photons", "profile_points",
                 "calibration_trials", "max_cycles"):
        value = getattr(args, flag, None)
        if value is not None:
            run = dataclasses.replace(run, **{flag: value})
    if getattr(args, "p_grid", None):
        try:
            grid = tuple(float(tok) for tok in args.p_grid.split(",") if tok.strip())
        except ValueError:
            raise ConfigError(f"--p-grid must be comma-separated numbers, got {args.p_grid!r}") from None
        run = dataclasses.replace(run, p_grid=grid)
    if getattr(args, "emit_trace", False):
        run = dataclasses.replace(run, emit_trace=True)
    if getattr(args, "assert_no_loop", False):
        run = dataclasses.replace(run, assert_no_loop=True)
    return RunConfig(scenario, optics_settings, run)


def _fmt_float(value: float) -> str:
    return repr(float(value))


# --- scenario ---------------------------------------------------------------


def _verdict_dict(verdict: ephemeral.ConsistencyVerdict) -> dict:
    out: dict = {
        "causal_loop": verdict.causal_loop,
        "assignments": [
            {e.label: v[e].value for e in EVENT_ORDER}
            for v in verdict.consistent_assignments
        ],
    }
    if verdict.witness is not None:
        out["witness"] = {
            "kind": verdict.witness.kind,
            "chain": list(verdict.witness.chain),
            "description": verdict.witness.description,
        }
    return out


def cmd_scenario(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    instance = build_instance(config.scenario)

    table = ephemeral.scenario_table()
    table_lines = ["rule_a,rule_b,first_action_a,first_action_b,causal_loop,n_assignments"]
    for row in table:
        table_lines.append(",".join([
            row.rule_a.value, row.rule_b.value,
            row.first_action_a.value, row.first_action_b.value,
            str(row.causal_loop).lower(), str(row.assignment_count),
        ]))
    _write(out / "scenario_table.csv", "\n".join(table_lines) + "\n")

    verdict = ephemeral.enumerate_consistent(instance)
    try:
        variants = episodic.run_all_variants(instance, max_cycles=config.run.max_cycles)
    except NonterminationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONTERMINATION

    variant_lines = ["target,assumed,variant_class,cycles,restarted,"
                     + ",".join(m.label for m in MEASUREMENTS) + ",A1,B1'"]
    for res in variants:
        final = res.final_assignment
        variant_lines.append(",".join([
            res.assumption.target.label,
            res.assumption.assumed.value,
            res.assumption.variant_class.value,
            str(res.cycles),
            str(res.restarted).lower(),
            *[final[m].value for m in MEASUREMENTS],
            final[ephemeral.EventId.A1].value,
            final[ephemeral.EventId.B1P].value,
        ]))
    _write(out / "episodic_variants.csv", "\n".join(variant_lines) + "\n")

    prediction = episodic.predict(config.scenario)
    report = {
        "config": config_to_dict(config),
        "ephemeral": _verdict_dict(verdict),
        "episodic": {
            "prediction": {
                "basis": prediction.basis,
                "measurements": {m.label: v.value for m, v in prediction.measurements.items()},
                "decisions": {d.label: v.value for d, v in prediction.decisions.items()},
            },
            "variants": [
                {
                    "target": r.assumption.target.label,
                    "assumed": r.assumption.assumed.value,
                    "cycles": r.cycles,
                    "restarted": r.restarted,
                    "final": {e.label: r.final_assignment[e].value for e in EVENT_ORDER},
                }
                for r in variants
            ],
        },
        "table": [
            {
                "rule_a": row.rule_a.value, "rule_b": row.rule_b.value,
                "first_action_a": row.first_action_a.value,
                "first_action_b": row.first_action_b.value,
                "causal_loop": row.causal_loop,
                "n_assignments": row.assignment_count,
            }
            for row in table
        ],
    }
    _write(out / "verdict.json", _json_text(report))

    trace_lines: list[str] = []
    header = {"config": config_to_dict(config), "max_cycles": config.run.max_cycles}
    for assumption in episodic.ALL_ASSUMPTIONS:
        trace = episodic.evaluate(instance, assumption, max_cycles=config.run.max_cycles)
        trace_lines.extend(episodic_trace_lines(header, trace))
    _write(out / "episodic_trace.jsonl", "".join(trace_lines))

    status = "causal loop" if verdict.causal_loop else \
        f"{len(verdict.consistent_assignments)} consistent assignment(s)"
    print(f"{config.scenario.describe()}: {status}")
    print(f"episodic prediction [{prediction.basis}]: "
          + " ".join(f"{m.label}={v.value}" for m, v in prediction.measurements.items()))
    print(f"reports written to {out}")
    if config.run.assert_no_loop and verdict.causal_loop:
        print("assertion failed: causal loop detected", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


# --- mc ---------------------------------------------------------------------


def cmd_mc(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if getattr(args, "n_trials", None) is None and args.config is None:
        raise ConfigError("mc requires --n-trials (or a config file setting n_trials)")
    if config.run.n_trials < 1:
        raise ConfigError("n_trials must be positive")
    if not config.run.p_grid:
        raise ConfigError("mc requires a nonempty --p-grid")
    out = _out_dir(args, config)

    lines = ["p,n_trials,loop_fraction,ci_low,ci_high,seed"]
    results = []
    for p in config.run.p_grid:
        est = decoherence.loop_probability(
            config.scenario, p, config.run.n_trials, config.run.seed)
        results.append(est)
        lines.append(",".join([
            _fmt_float(est.p), str(est.n_trials), _fmt_float(est.estimate),
            _fmt_float(est.ci_low), _fmt_float(est.ci_high), str(est.seed),
        ]))
    _write(out / "mc_sweep.csv", "\n".join(lines) + "\n")
    meta = {
        "config": config_to_dict(config),
        "rng_algorithm": decoherence.RNG_ALGORITHM,
        "slots_per_cycle": decoherence.SLOTS_PER_CYCLE,
    }
    _write(out / "mc_meta.json", _json_text(meta))
    for est in results:
        print(f"p={est.p}: loop fraction {est.estimate:.4f} "
              f"[{est.ci_low:.4f}, {est.ci_high:.4f}] ({est.n_trials} trials)")
    print(f"reports written to {out}")
    return EXIT_OK


# --- optics -------------------------------------------------------------------


def _resolve_geometry(config: RunConfig) -> tuple[optics.DetectorGeometry, bool]:
    op = config.optics
    screen = op.screen_distance
    if screen is None:
        screen = optics.destructive_geometry(op.wavelength, op.separation)
    aperture = op.aperture
    optimized = False
    if aperture is None:
        base = optics.DetectorGeometry(
            wavelength=op.wavelength, separation=op.separation,
            screen_distance=screen, aperture=op.separation / 2.0,
            aux_phase=op.aux_phase, waist=op.waist)
        scan = optics.optimize_aperture(base)
        aperture = scan.d_star
        optimized = True
    geometry = optics.DetectorGeometry(
        wavelength=op.wavelength, separation=op.separation,
        screen_distance=screen, aperture=aperture,
        aux_phase=op.aux_phase, waist=op.waist)
    return geometry, optimized


def cmd_optics(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    geometry, optimized = _resolve_geometry(config)

    entangled = optics.prepared_entangled_state()
    unentangled = optics.unknown_path_mixture(entangled)

    span = geometry.separation
    xs = np.linspace(-span, span, config.run.profile_points)
    ent_profile = optics.intensity_profile(entangled, geometry, xs)
    un_profile = optics.intensity_profile(unentangled, geometry, xs)
    profile_lines = ["x,intensity_entangled,intensity_unentangled"]
    for x, ie, iu in zip(xs, ent_profile, un_profile):
        profile_lines.append(f"{_fmt_float(x)},{_fmt_float(ie)},{_fmt_float(iu)}")
    _write(out / "profile.csv", "\n".join(profile_lines) + "\n")

    record_ent = optics.monte_carlo_counts(entangled, geometry, config.run.n_photons,
                                           config.run.seed)
    record_un = optics.monte_carlo_counts(unentangled, geometry, config.run.n_photons,
                                          config.run.seed + 1)
    counts_lines = ["model,detector_1,detector_2,total,seed"]
    for name, rec in (("entangled", record_ent), ("unentangled", record_un)):
        counts_lines.append(f"{name},{rec.detector_1},{rec.detector_2},{rec.total},{rec.seed}")
    _write(out / "counts.csv", "\n".join(counts_lines) + "\n")

    decision_ent = optics.decide_entanglement(record_ent, geometry, config.run.alpha)
    decision_un = optics.decide_entanglement(record_un, geometry, config.run.alpha)
    calibration = optics.calibrate_decision(
        geometry, config.run.n_photons, config.run.calibration_trials, config.run.seed)

    q_ent, q_un = optics.hypothesis_rates(geometry)
    summary = {
        "config": config_to_dict(config),
        "geometry": {
            "wavelength": geometry.wavelength,
            "separation": geometry.separation,
            "screen_distance": geometry.screen_distance,
            "aperture": geometry.aperture,
            "aperture_optimized": optimized,
            "aux_phase": geometry.aux_phase,
            "waist": geometry.waist,
            "screen_waist": geometry.screen_waist,
            "fringe_period": geometry.fringe_period,
            "degenerate_aperture": geometry.aperture == 0.0,
        },
        "rates": {"entangled": q_ent, "unentangled": q_un},
        "decisions": {
            "entangled_run": {"verdict": decision_ent.verdict.value,
                              "p_value": decision_ent.p_value,
                              "significant": decision_ent.significant},
            "unentangled_run": {"verdict": decision_un.verdict.value,
                                "p_value": decision_un.p_value,
                                "significant": decision_un.significant},
        },
        "calibration": {
            "n_trials": calibration.n_trials,
            "n_photons": calibration.n_photons,
            "type_i_rate": calibration.type_i_rate,
            "type_ii_rate": calibration.type_ii_rate,
            "combined_error": calibration.combined_error,
        },
    }
    _write(out / "optics_summary.json", _json_text(summary))

    if config.run.emit_trace:
        p1, p2 = optics.detection_probability(entangled, geometry)
        rng = np.random.Generator(np.random.Philox(
            key=np.array([config.run.seed], dtype=np.uint64)))
        u = rng.random(config.run.n_photons)
        detectors = np.where(u < p1, 1, np.where(u < p1 + p2, 2, 0))
        header = {"config": config_to_dict(config), "model": "entangled",
                  "n_photons": config.run.n_photons, "seed": config.run.seed}
        lines = photon_trace_lines(
            header, detectors.tolist(),
            (int(np.count_nonzero(detectors == 1)),
             int(np.count_nonzero(detectors == 2)),
             config.run.n_photons))
        _write(out / "photons.jsonl", "".join(lines))

    print(f"geometry: L={geometry.screen_distance!r} d={geometry.aperture!r}"
          f"{' (optimized)' if optimized else ''}")
    print(f"capture rates: entangled={q_ent:.3e} unentangled={q_un:.3e}")
    print(f"calibration error: {calibration.combined_error:.4f} "
          f"({calibration.n_trials} trials x {calibration.n_photons} photons)")
    print(f"reports written to {out}")
    return EXIT_OK


# --- replay -------------------------------------------------------------------


def _rebuild_scenario(config_dict: dict) -> ScenarioConfig:
    sc = config_dict["scenario"]
    mode_info = sc["mode"]
    if mode_info["kind"] == "ideal":
        mode: object = Ideal()
    elif mode_info["kind"] == "scheduled":
        mode = Scheduled(DecoherenceSchedule.parse(", ".join(mode_info["schedule"])))
    else:
        mode = Stochastic(mode_info["p"])
    return ScenarioConfig(
        rule_a=DecisionRule(sc["rule_a"]),
        rule_b=DecisionRule(sc["rule_b"]),
        first_action_a=EventValue(sc["first_action_a"]),
        first_action_b=EventValue(sc["first_action_b"]),
        mode=mode,  # type: ignore[arg-type]
    )


def cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.trace)
    text = path.read_text(encoding="utf-8")
    records = list(read_jsonl(text))
    if not records or records[0].get("kind") != "header":
        raise ConfigError(f"{path} is not a trace file (missing header record)")

    regenerated: list[str] = []
    index = 0
    while index < len(records):
        header = records[index]
        if header.get("kind") != "header":
            raise ConfigError(f"{path}: expected header record at line {index + 1}")
        span = index + 1
        while span < len(records) and records[span].get("kind") != "header":
            span += 1
        if header["trace"] == "episodic":
            scenario = _rebuild_scenario(header["config"])
            instance = build_instance(scenario)
            assumption = episodic.TestAssumption(
                parse_event(header["assumption"]["target"]),
                EventValue(header["assumption"]["assumed"]),
            )
            trace = episodic.evaluate(
                instance, assumption,
                entry=parse_event(header["entry"]),
                max_cycles=header.get("max_cycles", 16),
            )
            regenerated.extend(episodic_trace_lines(
                {"config": header["config"], "max_cycles": header.get("max_cycles", 16)},
                trace))
        elif header["trace"] == "photons":
            cfg = header["config"]
            op = cfg["optics"]
            geometry = optics.DetectorGeometry(
                wavelength=op["wavelength"], separation=op["separation"],
                screen_distance=op["screen_distance"], aperture=op["aperture"],
                aux_phase=op["aux_phase"], waist=op["waist"])
            entangled = optics.prepared_entangled_state()
            state = entangled if header["model"] == "entangled" \
                else optics.unknown_path_mixture(entangled)
            p1, p2 = optics.detection_probability(state, geometry)
            rng = np.random.Generator(np.random.Philox(
                key=np.array([header["seed"]], dtype=np.uint64)))
            u = rng.random(header["n_photons"])
            detectors = np.where(u < p1, 1, np.where(u < p1 + p2, 2, 0))
            regenerated.extend(photon_trace_lines(
                {"config": cfg, "model": header["model"],
                 "n_photons": header["n_photons"], "seed": header["seed"]},
                detectors.tolist(),
                (int(np.count_nonzero(detectors == 1)),
                 int(np.count_nonzero(detectors == 2)),
                 header["n_photons"])))
        else:
            raise ConfigError(f"unknown trace kind {header['trace']!r}")
        index = span

    replayed = "".join(regenerated)
    if replayed == text:
        print(f"replay of {path}: identical")
        return EXIT_OK
    print(f"replay of {path}: MISMATCH", file=sys.stderr)
    original_lines = text.splitlines()
    new_lines = replayed.splitlines()
    for i, (a, b) in enumerate(zip(original_lines, new_lines), start=1):
        if a != b:
            print(f"  first difference at line {i}:", file=sys.stderr)
            print(f"    file:   {a}", file=sys.stderr)
            print(f"    replay: {b}", file=sys.stderr)
            break
    else:
        print(f"  line counts differ: {len(original_lines)} vs {len(new_lines)}",
              file=sys.stderr)
    return EXIT_ASSERTION


# --- parser -------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--out", help="output directory (default $CLCE_OUT_DIR or cwd)")
    parser.add_argument("--seed", type=int, help="master seed")


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rules", help="decision rules, e.g. same,opposite")
    parser.add_argument("--first", help="first actions, e.g. yes,yes")
    parser.add_argument("--schedule", help="decoherence schedule, e.g. \"S:A2->B2\"")
    parser.add_argument("--p", type=float, help="stochastic per-slot decoherence probability")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clce",
        description="Causal Loop Creation Experiment laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_scenario = sub.add_parser("scenario", help="consistency tables and revision variants")
    _add_common(p_scenario)
    _add_scenario_flags(p_scenario)
    p_scenario.add_argument("--assert-no-loop", action="store_true",
                            help="exit 2 if a causal loop is detected")
    p_scenario.add_argument("--emit-trace", action="store_true")
    p_scenario.add_argument("--max-cycles", dest="max_cycles", type=int)
    p_scenario.set_defaults(func=cmd_scenario)

    p_mc = sub.add_parser("mc", help="loop probability under stochastic decoherence")
    _add_common(p_mc)
    _add_scenario_flags(p_mc)
    p_mc.add_argument("--p-grid", dest="p_grid", help="comma-separated probabilities")
    p_mc.add_argument("--n-trials", dest="n_trials", type=int)
    p_mc.set_defaults(func=cmd_mc)

    p_optics = sub.add_parser("optics", help="entanglement-detector simulation")
    _add_common(p_optics)
    p_optics.add_argument("--wavelength", type=float)
    p_optics.add_argument("--separation", type=float)
    p_optics.add_argument("--screen-distance", dest="screen_distance",
                          help="meters, or 'auto' for the destructive geometry")
    p_optics.add_argument("--aperture", help="meters, or 'auto' to optimize")
    p_optics.add_argument("--aux-phase", dest="aux_phase", type=float)
    p_optics.add_argument("--waist", type=float)
    p_optics.add_argument("--n-photons", dest="n_photons", type=int)
    p_optics.add_argument("--alpha", type=float)
    p_optics.add_argument("--calibration-trials", dest="calibration_trials", type=int)
    p_optics.add_argument("--profile-points", dest="profile_points", type=int)
    p_optics.add_argument("--emit-trace", action="store_true")
    p_optics.set_defaults(func=cmd_optics)

    p_replay = sub.add_parser("replay", help="re-run a trace and verify byte identity")
    p_replay.add_argument("--trace", required=True, help="trace .jsonl file")
    p_replay.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonterminationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONTERMINATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
