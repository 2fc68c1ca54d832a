"""Bundled experiment definitions and scenario transformations.

The package ships one synthetic five-intersection corridor plus the three
time-of-day demand profiles, the field baseline timing plans, and two
recorded offset schedules for replay. This module composes those
fixtures into runnable scenarios, applies exogenous perturbations
(demand surge, lane disruption), builds interval sweeps, and exposes
fixed-schedule "policies" interchangeable with a learned one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .network import DemandEntry, DemandProfile, Scenario, scenario_from_dict
from .signals import ScheduleCoverageError, parse_hhmm

# period -> (start of day, full duration in seconds)
PERIODS = {
    "am": ("05:00", 18000),
    "noon": ("10:00", 14400),
    "pm": ("14:00", 25200),
}
SWEEP_INTERVALS_MIN = (5, 10, 15, 30, 45)


def load_fixture(name: str) -> dict:
    ref = resources.files("corridor_rl") / "fixtures" / name
    return json.loads(ref.read_text())


def corridor_document() -> dict:
    return load_fixture("huntington-synthetic.json")


def bundled_scenario(
    period: str,
    duration: Optional[int] = None,
    interval: int = 900,
    warm_up: int = 900,
    name: Optional[str] = None,
) -> Scenario:
    """The synthetic corridor under one time-of-day period.

    ``duration`` may truncate the period (e.g. a 4 h training window);
    demand entries are clipped to the scenario window.
    """
    if period not in PERIODS:
        raise ValueError(f"unknown period {period!r}, expected one of {list(PERIODS)}")
    start_text, full = PERIODS[period]
    if duration is None:
        duration = full
    start = parse_hhmm(start_text)
    if duration <= 0 or duration > full:
        raise ValueError(f"duration {duration} outside (0, {full}] for {period}")
    doc = corridor_document()
    demand = load_fixture(f"demand_{period}.json")
    doc["demand"] = {
        "label": demand["label"],
        "entries": _clip_entries(demand["entries"], start, start + duration),
    }
    doc["schedules"] = {"baseline": load_fixture("baseline_schedules.json")[period]}
    doc["active_schedule"] = "baseline"
    doc["start"] = start_text
    doc["duration_s"] = duration
    doc["warm_up_s"] = warm_up
    doc["interval_s"] = interval
    doc["name"] = name or f"huntington-{period}"
    return scenario_from_dict(doc)


def _clip_entries(entries: Sequence[dict], start: int, end: int) -> List[dict]:
    clipped = []
    for e in entries:
        lo = max(parse_hhmm(e["start"]), start)
        hi = min(parse_hhmm(e["end"]), end)
        if lo < hi:
            clipped.append({"route": e["route"], "start": lo, "end": hi,
                            "rate": e["rate"]})
    return clipped


# ------------------------------------------------------------ perturbations
@dataclass(frozen=True)
class Perturbation:
    kind: str  # demand_surge | lane_disruption
    window: Tuple[int, int]  # (start, end) seconds since midnight
    factor: float = 1.0  # surge multiplier
    lanes: int = 1  # blocked lanes per disrupted link
    routes: Tuple[str, ...] = ()  # empty = all routes (surge)
    links: Tuple[str, ...] = ()  # disruption targets

    def __post_init__(self):
        if self.kind not in ("demand_surge", "lane_disruption"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.window[1] <= self.window[0]:
            raise ValueError("perturbation window ends before it starts")
        if self.kind == "demand_surge" and self.factor <= 0:
            raise ValueError("surge factor must be > 0")
        if self.kind == "lane_disruption" and self.lanes < 1:
            raise ValueError("must block at least one lane")


def load_perturbations() -> Dict[str, Perturbation]:
    out = {}
    for name, doc in load_fixture("perturbations.json").items():
        window = (parse_hhmm(doc["start"]), parse_hhmm(doc["end"]))
        if doc["kind"] == "demand_surge":
            routes = () if doc.get("routes", "all") == "all" else tuple(doc["routes"])
            out[name] = Perturbation("demand_surge", window,
                                     factor=float(doc["factor"]), routes=routes)
        else:
            out[name] = Perturbation("lane_disruption", window,
                                     lanes=int(doc.get("lanes", 1)),
                                     links=tuple(doc["links"]))
    return out


def apply_perturbation(scenario: Scenario, pert: Perturbation) -> Scenario:
    """A new scenario with the perturbation folded in.

    Surges rescale arrival rates inside the window (entries are split at
    the window edges so rates outside are untouched); disruptions add
    lane-block windows on the targeted links.
    """
    lo, hi = pert.window
    if lo < scenario.start or hi > scenario.end:
        raise ValueError(
            f"perturbation window [{lo},{hi}) outside scenario "
            f"[{scenario.start},{scenario.end})"
        )
    if pert.kind == "lane_disruption":
        for link_id in pert.links:
            if link_id not in scenario.network.links:
                raise ValueError(f"unknown link {link_id!r}")
        extra = tuple((link_id, lo, hi, pert.lanes) for link_id in pert.links)
        return replace(scenario, lane_blocks=scenario.lane_blocks + extra,
                       name=f"{scenario.name}+{pert.kind}")
    for route_id in pert.routes:
        if route_id not in scenario.network.routes:
            raise ValueError(f"unknown route {route_id!r}")
    targeted = set(pert.routes) if pert.routes else set(scenario.demand.route_order)
    entries: List[DemandEntry] = []
    for e in scenario.demand.entries:
        if e.route_id not in targeted or e.end <= lo or e.start >= hi:
            entries.append(e)
            continue
        if e.start < lo:
            entries.append(DemandEntry(e.route_id, e.start, lo, e.rate))
        entries.append(DemandEntry(e.route_id, max(e.start, lo), min(e.end, hi),
                                   e.rate * pert.factor))
        if e.end > hi:
            entries.append(DemandEntry(e.route_id, hi, e.end, e.rate))
    demand = DemandProfile(scenario.demand.label, tuple(entries),
                           scenario.demand.route_order)
    return replace(scenario, demand=demand, name=f"{scenario.name}+{pert.kind}")


# ------------------------------------------------------------- sweeps
def interval_sweep(base: Scenario,
                   intervals_min: Sequence[int] = SWEEP_INTERVALS_MIN
                   ) -> List[Scenario]:
    """Variants of ``base`` re-timed to each action interval.

    Detector aggregation follows the action interval automatically (the
    measurement window is the interval). Intervals that do not divide the
    scenario duration are rejected.
    """
    out = []
    for minutes in intervals_min:
        seconds = int(minutes) * 60
        if seconds <= 0 or base.duration % seconds != 0:
            raise ValueError(
                f"interval {minutes} min does not divide the "
                f"{base.duration // 60} min scenario"
            )
        out.append(base if seconds == base.interval else
                   replace(base, interval=seconds,
                           name=f"{base.name}@{minutes}min"))
    return out


def day_document(duration: int = 43200,
                 interval: int = 900,
                 warm_up: int = 900) -> dict:
    """Scenario document for the corridor across consecutive periods.

    Stitches the time-of-day demand profiles and the field timing plan at
    the period handoffs. The boundary timing blocks agree on both sides
    of each handoff, so the splice itself commands no plan change.
    Default length is 12 h starting 05:00.
    """
    start = parse_hhmm("05:00")
    max_duration = parse_hhmm("21:00") - start
    if duration <= 0 or duration > max_duration:
        raise ValueError(f"duration {duration} outside (0, {max_duration}]")
    end = start + duration
    # each period owns one slice of the day, for demand and timing alike
    spans = (("am", start, parse_hhmm("10:00")),
             ("noon", parse_hhmm("10:00"), parse_hhmm("14:00")),
             ("pm", parse_hhmm("14:00"), start + max_duration))
    plans = load_fixture("baseline_schedules.json")
    entries: List[dict] = []
    blocks: List[dict] = []
    for period, lo, hi in spans:
        hi = min(hi, end)
        if lo >= hi:
            continue
        demand = load_fixture(f"demand_{period}.json")
        entries.extend(_clip_entries(demand["entries"], lo, hi))
        blocks.extend(_clip_blocks(plans[period], lo, hi))
    doc = corridor_document()
    doc["demand"] = {"label": f"stitched {duration // 3600} h day",
                     "entries": entries}
    doc["schedules"] = {"baseline": blocks}
    doc["active_schedule"] = "baseline"
    doc["start"] = "05:00"
    doc["duration_s"] = duration
    doc["warm_up_s"] = warm_up
    doc["interval_s"] = interval
    doc["name"] = f"huntington-day{duration // 3600}h"
    return doc


def day_scenario(duration: int = 43200,
                 interval: int = 900,
                 warm_up: int = 900) -> Scenario:
    """Runnable form of :func:`day_document`."""
    return scenario_from_dict(day_document(duration, interval, warm_up))


def _clip_blocks(rows: Sequence[dict], start: int, end: int) -> List[dict]:
    clipped = []
    for r in rows:
        lo = max(parse_hhmm(r["start"]), start)
        hi = min(parse_hhmm(r["end"]), end)
        if lo < hi:
            clipped.append({"start": lo, "end": hi, "cycle": r["cycle"],
                            "offsets": r["offsets"]})
    return clipped


# ------------------------------------------------------------- policies
PolicyFn = Callable[[int, object], Tuple[int, ...]]
# signature: (boundary time s, latest observation) -> raw offsets per target


def baseline_policy(schedule) -> PolicyFn:
    """Emits the scheduled offsets for whichever block covers the time."""

    def policy(t: int, _obs=None) -> Tuple[int, ...]:
        for block in schedule:
            if block.start <= t < block.end:
                return block.offsets
        raise ScheduleCoverageError(f"no schedule block covers t={t} s")

    return policy


def replay_policy(rows: Sequence[dict]) -> PolicyFn:
    """Replays a recorded offset table: list of {start, end, offsets}."""
    table = [(parse_hhmm(r["start"]), parse_hhmm(r["end"]),
              tuple(int(v) for v in r["offsets"])) for r in rows]

    def policy(t: int, _obs=None) -> Tuple[int, ...]:
        for start, end, offsets in table:
            if start <= t < end:
                return offsets
        raise ScheduleCoverageError(f"no replay row covers t={t} s")

    return policy


def replay_rows(name: str, period: str) -> List[dict]:
    """Offset rows from a bundled replay fixture ('synchro' or 'deeprl')."""
    fixture = {"synchro": "replay_synchro.json",
               "deeprl": "replay_deeprl.json"}.get(name)
    if fixture is None:
        raise ValueError(f"unknown replay schedule {name!r}")
    doc = load_fixture(fixture)
    if period not in doc:
        raise ValueError(f"replay {name!r} has no period {period!r}")
    return doc[period]


# ------------------------------------------------------------- toy networks
def single_intersection(
    rate_veh_h: float,
    duration: int = 7200,
    cycle: int = 60,
    green_share: float = 0.5,
    approach_length: float = 500.0,
    lanes: int = 2,
    interval: int = 900,
    warm_up: int = 900,
) -> Scenario:
    """One signalized intersection fed by a single approach.

    Used to validate the queue/travel-time relation on a stationary,
    undersaturated run.
    """
    doc = {
        "schema_version": 1,
        "name": "single-intersection",
        "start": 0,
        "duration_s": duration,
        "warm_up_s": warm_up,
        "interval_s": interval,
        "network": {
            "free_flow_speed": 13.9,
            "saturation_flow": 0.5,
            "nodes": [
                {"id": "bIn", "kind": "boundary"},
                {"id": "s1", "kind": "signalized", "role": "target"},
                {"id": "bOut", "kind": "boundary"},
            ],
            "links": [
                {"id": "in", "from": "bIn", "to": "s1",
                 "length": approach_length, "lanes": lanes, "entry_side": "W"},
                {"id": "out", "from": "s1", "to": "bOut",
                 "length": 200.0, "lanes": lanes, "entry_side": "W"},
            ],
            "routes": [{"id": "R", "links": ["in", "out"]}],
        },
        "signals": {
            "targets": ["s1"],
            "observed": [],
            "nodes": {
                "s1": {
                    "splits": [green_share, 1.0 - green_share],
                    "phase_approaches": [["E", "W"], ["N", "S"]],
                }
            },
        },
        "detectors": [
            {"link": "in", "kind": "stopbar", "position": 0.0},
            {"link": "in", "kind": "advance", "position": 60.0},
        ],
        "demand": {
            "label": "custom",
            "entries": [{"route": "R", "start": 0, "end": duration,
                         "rate": rate_veh_h}],
        },
        "schedules": {
            "baseline": [{"start": 0, "end": duration, "cycle": cycle,
                          "offsets": [0]}],
        },
        "active_schedule": "baseline",
    }
    return scenario_from_dict(doc)


def green_wave(
    rate_veh_h: float = 500.0,
    duration: int = 3600,
    cycle: int = 60,
    link_length: float = 555.0,
    interval: int = 180,
    warm_up: int = 180,
    offsets: Tuple[int, int] = (0, 0),
) -> Scenario:
    """Two-signal one-way corridor for progression (green-wave) studies.

    The inter-stop-bar travel time is link_length / 13.9 s; a platoon
    released by the first signal meets the second signal's green when the
    relative offset matches that travel time (mod cycle).
    """
    doc = {
        "schema_version": 1,
        "name": "green-wave",
        "start": 0,
        "duration_s": duration,
        "warm_up_s": warm_up,
        "interval_s": interval,
        "network": {
            "free_flow_speed": 13.9,
            "saturation_flow": 0.5,
            "nodes": [
                {"id": "bIn", "kind": "boundary"},
                {"id": "g1", "kind": "signalized", "role": "target"},
                {"id": "g2", "kind": "signalized", "role": "target"},
                {"id": "bOut", "kind": "boundary"},
            ],
            "links": [
                {"id": "in_g1", "from": "bIn", "to": "g1",
                 "length": 400.0, "lanes": 1, "entry_side": "W"},
                {"id": "g1_g2", "from": "g1", "to": "g2",
                 "length": link_length, "lanes": 1, "entry_side": "W"},
                {"id": "g2_out", "from": "g2", "to": "bOut",
                 "length": 200.0, "lanes": 1, "entry_side": "W"},
            ],
            "routes": [{"id": "EW", "links": ["in_g1", "g1_g2", "g2_out"]}],
        },
        "signals": {
            "targets": ["g1", "g2"],
            "observed": [],
            "nodes": {
                "g1": {"splits": [0.5, 0.5],
                       "phase_approaches": [["E", "W"], ["N", "S"]]},
                "g2": {"splits": [0.5, 0.5],
                       "phase_approaches": [["E", "W"], ["N", "S"]]},
            },
        },
        "detectors": [
            {"link": "in_g1", "kind": "stopbar", "position": 0.0},
            {"link": "in_g1", "kind": "advance", "position": 60.0},
            {"link": "g1_g2", "kind": "stopbar", "position": 0.0},
            {"link": "g1_g2", "kind": "advance", "position": 60.0},
        ],
        "demand": {
            "label": "custom",
            "entries": [{"route": "EW", "start": 0, "end": duration,
                         "rate": rate_veh_h}],
        },
        "schedules": {
            "baseline": [{"start": 0, "end": duration, "cycle": cycle,
                          "offsets": list(offsets)}],
        },
        "active_schedule": "baseline",
    }
    return scenario_from_dict(doc)
