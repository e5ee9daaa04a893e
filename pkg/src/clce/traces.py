"""JSON-lines trace formats.

Every trace file starts with a header record embedding the exact
configuration and seed that produced it, followed by one record per
evaluation step or photon.  Records are compact JSON with sorted keys, so
identical runs serialize byte-identically and `clce replay` can diff them.

Schemas (one JSON object per line):

episodic trace
    {"kind": "header", "trace": "episodic", "config": {...}, "entry": ...,
     "assumption": {"target": ..., "assumed": ...}, "max_cycles": ...}
    {"kind": "step", "segment": 0, "lap": 1, "event": "A2'",
     "value": "YES", "pair_s": "INTACT", "pair_sp": "DEMOLISHED"}
    {"kind": "restart", "segment": 0, "lap": 2, "reason": "..."}
    {"kind": "final", "assignment": {...}, "cycles": 3, "restarted": false,
     "pair_states": {...}}

photon trace
    {"kind": "header", "trace": "photons", "config": {...}, "model": ...,
     "n_photons": ..., "seed": ...}
    {"kind": "photon", "index": 0, "detector": 0 | 1 | 2}
    {"kind": "final", "detector_1": ..., "detector_2": ..., "total": ...}
"""

from __future__ import annotations

import json
from typing import Iterable, Iterator

from .episodic import RevisionTrace
from .events import EVENT_ORDER


def jsonl(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"


def read_jsonl(text: str) -> Iterator[dict]:
    for line in text.splitlines():
        line = line.strip()
        if line:
            yield json.loads(line)


def assignment_dict(values) -> dict[str, str]:
    return {e.label: values[e].value for e in EVENT_ORDER if e in values}


def episodic_trace_lines(header: dict, trace: RevisionTrace) -> list[str]:
    lines = [jsonl({
        "kind": "header",
        "trace": "episodic",
        "assumption": {"target": trace.assumption.target.label,
                       "assumed": trace.assumption.assumed.value},
        "entry": trace.entry.label,
        **header,
    })]
    markers_by_segment: dict[int, list] = {}
    for marker in trace.restarts:
        markers_by_segment.setdefault(marker.segment, []).append(marker)
    steps = list(trace.steps)
    for i, step in enumerate(steps):
        lines.append(jsonl({
            "kind": "step",
            "segment": step.segment,
            "lap": step.lap,
            "event": step.event.label,
            "value": step.value.value,
            "pair_s": step.pair_s.value,
            "pair_sp": step.pair_sp.value,
        }))
        segment_ends = i + 1 == len(steps) or steps[i + 1].segment != step.segment
        if segment_ends:
            for marker in markers_by_segment.get(step.segment, []):
                lines.append(jsonl({
                    "kind": "restart",
                    "segment": marker.segment,
                    "lap": marker.lap,
                    "reason": marker.reason,
                }))
    lines.append(jsonl({
        "kind": "final",
        "assignment": assignment_dict(trace.final_assignment),
        "cycles": trace.cycles,
        "restarted": trace.restarted,
        "pair_states": {
            pair.value: {"status": state.status.value,
                         "demolished_by": state.demolished_by}
            for pair, state in trace.final_pair_states.items()
        },
    }))
    return lines


def photon_trace_lines(header: dict, detectors: Iterable[int],
                       counts: tuple[int, int, int]) -> list[str]:
    lines = [jsonl({"kind": "header", "trace": "photons", **header})]
    for i, det in enumerate(detectors):
        lines.append(jsonl({"kind": "photon", "index": i, "detector": int(det)}))
    c1, c2, total = counts
    lines.append(jsonl({"kind": "final", "detector_1": c1, "detector_2": c2, "total": total}))
    return lines
