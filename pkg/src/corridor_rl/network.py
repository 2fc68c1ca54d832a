"""Corridor topology, routes, demand, and scenario-document loading.

A scenario is a single JSON document with sections "network", "demand",
"signals", "detectors", "schedules" plus top-level run settings. Loading
validates every cross-reference and invariant and reports failures with a
path into the document (e.g. ``network.links[3].length``).

Units: lengths in meters, speeds in m/s, rates in vehicles/hour in the
document (converted to veh/s internally), times as "HH:MM" strings in the
document and seconds since midnight internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .signals import (
    Movement,
    PhasePlan,
    ScheduleBlock,
    make_schedule,
    parse_hhmm,
    scale_splits,
)

APPROACHES = ("N", "E", "S", "W")
DETECTOR_KINDS = ("advance", "stopbar")
SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Scenario document failed validation; ``path`` points into the doc."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Link:
    id: str
    from_node: str
    to_node: str
    length: float  # m
    lanes: int
    free_flow_speed: float  # m/s
    saturation_flow: float  # veh/s/lane
    entry_side: Optional[str] = None  # approach of to_node this link feeds

    @property
    def travel_time(self) -> float:
        return self.length / self.free_flow_speed


@dataclass(frozen=True)
class Node:
    id: str
    kind: str  # signalized | boundary
    role: str  # target | observed | plain


@dataclass(frozen=True)
class Route:
    id: str
    links: Tuple[Link, ...]

    @property
    def free_flow_time(self) -> float:
        return sum(l.travel_time for l in self.links)

    @property
    def distance(self) -> float:
        return sum(l.length for l in self.links)


@dataclass(frozen=True)
class DetectorSpec:
    link_id: str
    kind: str  # advance | stopbar
    position: float  # m upstream of the stop bar
    lanes_covered: int


@dataclass(frozen=True)
class SignalConfig:
    """Per-node phasing: fractional splits and the approaches each phase serves."""

    splits: Tuple[float, ...]
    phase_approaches: Tuple[FrozenSet[str], ...]


@dataclass(frozen=True)
class DemandEntry:
    route_id: str
    start: int  # s since midnight
    end: int
    rate: float  # veh/h


@dataclass(frozen=True)
class DemandProfile:
    label: str
    entries: Tuple[DemandEntry, ...]
    route_order: Tuple[str, ...]

    def rate_table(self) -> Tuple[np.ndarray, np.ndarray]:
        """Piecewise-constant demand: (breakpoints, rates veh/s).

        ``breakpoints`` has W+1 entries; window w covers
        [breakpoints[w], breakpoints[w+1]) with per-route rates[w].
        """
        cuts = sorted({e.start for e in self.entries} | {e.end for e in self.entries})
        if len(cuts) < 2:
            return np.array([0.0, 1.0]), np.zeros((1, len(self.route_order)))
        breaks = np.array(cuts, dtype=np.int64)
        rates = np.zeros((len(cuts) - 1, len(self.route_order)))
        index = {r: i for i, r in enumerate(self.route_order)}
        for e in self.entries:
            lo = cuts.index(e.start)
            hi = cuts.index(e.end)
            rates[lo:hi, index[e.route_id]] += e.rate / 3600.0
        return breaks, rates

    def rates_at(self, t: int) -> np.ndarray:
        """Per-route arrival rates (veh/s in route_order) at second ``t``."""
        out = np.zeros(len(self.route_order))
        index = {r: i for i, r in enumerate(self.route_order)}
        for e in self.entries:
            if e.start <= t < e.end:
                out[index[e.route_id]] += e.rate / 3600.0
        return out


def arrivals_for_step(
    profile: DemandProfile, t: int, rng: np.random.Generator
) -> List[Tuple[str, int]]:
    """Poisson arrivals for one 1 s step: [(route id, count)], count > 0.

    Draws one vectorized Poisson row over the profile's fixed route order,
    so the arrival sequence is a pure function of (profile, seed).
    """
    counts = rng.poisson(profile.rates_at(t))
    return [
        (route, int(n))
        for route, n in zip(profile.route_order, counts)
        if n > 0
    ]


class Network:
    """Validated, immutable-after-load corridor description."""

    def __init__(
        self,
        nodes: Mapping[str, Node],
        links: Mapping[str, Link],
        routes: Mapping[str, Route],
        targets: Sequence[str],
        observed: Sequence[str],
        signal_configs: Mapping[str, SignalConfig],
        detectors: Sequence[DetectorSpec],
    ):
        self.nodes = dict(nodes)
        self.links = dict(links)
        self.routes = dict(routes)
        self.targets = tuple(targets)
        self.observed = tuple(observed)
        self.signal_configs = dict(signal_configs)
        self.detectors = tuple(detectors)
        self.monitored = self.targets + self.observed
        # incoming link per (node, approach)
        self.incoming: Dict[str, Dict[str, str]] = {n: {} for n in self.nodes}
        for link in self.links.values():
            if link.entry_side is not None:
                sides = self.incoming[link.to_node]
                if link.entry_side in sides:
                    raise ScenarioError(
                        f"network.links[{link.id}]",
                        f"node {link.to_node} already has an incoming link on "
                        f"approach {link.entry_side} ({sides[link.entry_side]})",
                    )
                sides[link.entry_side] = link.id
        self._movements = self._derive_movements()

    def _derive_movements(self) -> Dict[str, Tuple[FrozenSet[Movement], ...]]:
        """Movement sets per signalized node, grouped into its phases.

        A movement exists wherever some route passes through the node; it
        belongs to the phase whose approach set contains the incoming
        link's entry side.
        """
        raw: Dict[str, set] = {n: set() for n in self.signal_configs}
        for route in self.routes.values():
            for a, b in zip(route.links, route.links[1:]):
                if a.to_node in raw:
                    raw[a.to_node].add((a.id, b.id))
        out = {}
        for node_id, cfg in self.signal_configs.items():
            phases = []
            for approaches in cfg.phase_approaches:
                moves = frozenset(
                    m for m in raw[node_id]
                    if self.links[m[0]].entry_side in approaches
                )
                phases.append(moves)
            assigned = frozenset().union(*phases) if phases else frozenset()
            missing = raw[node_id] - assigned
            if missing:
                raise ScenarioError(
                    f"signals.nodes[{node_id}]",
                    f"movements {sorted(missing)} not covered by any phase",
                )
            out[node_id] = tuple(phases)
        return out

    def movements(self, node_id: str) -> Tuple[FrozenSet[Movement], ...]:
        return self._movements[node_id]

    def phase_plan(self, node_id: str, cycle_length: int) -> PhasePlan:
        cfg = self.signal_configs[node_id]
        return PhasePlan(
            cycle_length,
            scale_splits(cfg.splits, cycle_length),
            self._movements[node_id],
        )

    def monitored_incoming(self) -> List[str]:
        """Incoming links of target and observed nodes (reward scope)."""
        seen: List[str] = []
        for node in self.monitored:
            for side in APPROACHES:
                link = self.incoming[node].get(side)
                if link is not None and link not in seen:
                    seen.append(link)
        return seen


@dataclass(frozen=True)
class Scenario:
    """A fully-resolved scenario document."""

    name: str
    network: Network
    demand: DemandProfile
    schedules: Dict[str, Tuple[ScheduleBlock, ...]]
    active_schedule: str
    start: int  # s since midnight
    duration: int  # s
    warm_up: int = 900
    interval: int = 900
    lane_blocks: Tuple[Tuple[str, int, int, int], ...] = ()  # (link, start, end, lanes)
    reward_queue_mode: str = "mean"  # mean | endpoint

    @property
    def end(self) -> int:
        return self.start + self.duration

    def schedule(self) -> Tuple[ScheduleBlock, ...]:
        return self.schedules[self.active_schedule]


def _get(doc: Mapping, key: str, path: str, kind=None):
    if key not in doc:
        raise ScenarioError(path, f"missing required field {key!r}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError(f"{path}.{key}", f"expected {kind.__name__}")
    return value


def _time_field(value, path: str) -> int:
    try:
        return parse_hhmm(value) if isinstance(value, str) else int(value)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from None


def load_scenario(source) -> Scenario:
    """Load and validate a scenario document (path, JSON text, or dict)."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        try:
            doc = json.loads(Path(source).read_text())
        except OSError as exc:
            raise ScenarioError(str(source), f"cannot read scenario: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ScenarioError(str(source), f"invalid JSON: {exc}") from None
    elif isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ScenarioError("<text>", f"invalid JSON: {exc}") from None
    else:
        doc = source
    return scenario_from_dict(doc)


def scenario_from_dict(doc: Mapping) -> Scenario:
    version = _get(doc, "schema_version", "$", int)
    if version != SCHEMA_VERSION:
        raise ScenarioError("$.schema_version", f"unsupported version {version}")
    name = doc.get("name", "scenario")
    net = _network_from_dict(_get(doc, "network", "$", dict),
                             _get(doc, "signals", "$", dict),
                             doc.get("detectors", []))
    demand = _demand_from_dict(_get(doc, "demand", "$", dict), net)
    schedules_doc = _get(doc, "schedules", "$", dict)
    schedules = {}
    for sched_name, rows in schedules_doc.items():
        try:
            schedules[sched_name] = make_schedule(rows)
        except (ValueError, KeyError, TypeError) as exc:
            raise ScenarioError(f"schedules.{sched_name}", str(exc)) from None
        for i, block in enumerate(schedules[sched_name]):
            if len(block.offsets) != len(net.targets):
                raise ScenarioError(
                    f"schedules.{sched_name}[{i}]",
                    f"{len(block.offsets)} offsets for {len(net.targets)} targets",
                )
    active = doc.get("active_schedule", next(iter(schedules), None))
    if active not in schedules:
        raise ScenarioError("$.active_schedule", f"unknown schedule {active!r}")
    start = _time_field(_get(doc, "start", "$"), "$.start")
    duration = int(_get(doc, "duration_s", "$"))
    if duration <= 0:
        raise ScenarioError("$.duration_s", "must be positive")
    warm_up = int(doc.get("warm_up_s", 900))
    interval = int(doc.get("interval_s", 900))
    if warm_up < 0:
        raise ScenarioError("$.warm_up_s", "must be >= 0")
    if interval <= 0 or duration % interval != 0:
        raise ScenarioError(
            "$.interval_s", f"{interval} must divide duration {duration}"
        )
    for e in demand.entries:
        if e.start < start or e.end > start + duration:
            raise ScenarioError(
                "demand.entries",
                f"route {e.route_id} window [{e.start},{e.end}) outside "
                f"scenario window [{start},{start + duration})",
            )
    blocks = []
    for i, b in enumerate(doc.get("lane_blocks", [])):
        link_id = _get(b, "link", f"$.lane_blocks[{i}]")
        if link_id not in net.links:
            raise ScenarioError(f"$.lane_blocks[{i}].link", f"unknown link {link_id!r}")
        n = int(b.get("lanes", 1))
        if n < 1:
            raise ScenarioError(f"$.lane_blocks[{i}].lanes", "must be >= 1")
        blocks.append((link_id,
                       _time_field(_get(b, "start", f"$.lane_blocks[{i}]"),
                                   f"$.lane_blocks[{i}].start"),
                       _time_field(_get(b, "end", f"$.lane_blocks[{i}]"),
                                   f"$.lane_blocks[{i}].end"),
                       n))
    mode = doc.get("reward_queue_mode", "mean")
    if mode not in ("mean", "endpoint"):
        raise ScenarioError("$.reward_queue_mode", f"unknown mode {mode!r}")
    return Scenario(
        name=name, network=net, demand=demand, schedules=schedules,
        active_schedule=active, start=start, duration=duration,
        warm_up=warm_up, interval=interval, lane_blocks=tuple(blocks),
        reward_queue_mode=mode,
    )


def _network_from_dict(net_doc: Mapping, sig_doc: Mapping,
                       det_doc: Sequence) -> Network:
    default_speed = float(net_doc.get("free_flow_speed", 13.9))
    default_sat = float(net_doc.get("saturation_flow", 0.5))

    nodes: Dict[str, Node] = {}
    for i, nd in enumerate(_get(net_doc, "nodes", "network", list)):
        path = f"network.nodes[{i}]"
        node = Node(_get(nd, "id", path), nd.get("kind", "signalized"),
                    nd.get("role", "plain"))
        if node.kind not in ("signalized", "boundary"):
            raise ScenarioError(path, f"unknown kind {node.kind!r}")
        if node.role not in ("target", "observed", "plain"):
            raise ScenarioError(path, f"unknown role {node.role!r}")
        if node.role in ("target", "observed") and node.kind != "signalized":
            raise ScenarioError(path, f"{node.role} node {node.id} must be signalized")
        if node.id in nodes:
            raise ScenarioError(path, f"duplicate node id {node.id!r}")
        nodes[node.id] = node

    links: Dict[str, Link] = {}
    link_list = _get(net_doc, "links", "network", list)
    if not link_list:
        raise ScenarioError("network.links", "no links")
    for i, ld in enumerate(link_list):
        path = f"network.links[{i}]"
        link = Link(
            id=_get(ld, "id", path),
            from_node=_get(ld, "from", path),
            to_node=_get(ld, "to", path),
            length=float(_get(ld, "length", path)),
            lanes=int(ld.get("lanes", 1)),
            free_flow_speed=float(ld.get("free_flow_speed", default_speed)),
            saturation_flow=float(ld.get("saturation_flow", default_sat)),
            entry_side=ld.get("entry_side"),
        )
        if link.id in links:
            raise ScenarioError(path, f"duplicate link id {link.id!r}")
        for endpoint in (link.from_node, link.to_node):
            if endpoint not in nodes:
                raise ScenarioError(path, f"unknown node {endpoint!r}")
        if link.length <= 0:
            raise ScenarioError(f"{path}.length", "must be > 0")
        if link.lanes < 1:
            raise ScenarioError(f"{path}.lanes", "must be >= 1")
        if link.free_flow_speed <= 0:
            raise ScenarioError(f"{path}.free_flow_speed", "must be > 0")
        if link.saturation_flow <= 0:
            raise ScenarioError(f"{path}.saturation_flow", "must be > 0")
        if link.travel_time < 1.0:
            raise ScenarioError(
                f"{path}.length",
                f"free-flow traversal {link.travel_time:.2f} s is below the 1 s step",
            )
        if link.entry_side is not None and link.entry_side not in APPROACHES:
            raise ScenarioError(f"{path}.entry_side",
                                f"must be one of {APPROACHES}")
        links[link.id] = link

    routes: Dict[str, Route] = {}
    for i, rd in enumerate(_get(net_doc, "routes", "network", list)):
        path = f"network.routes[{i}]"
        rid = _get(rd, "id", path)
        ids = _get(rd, "links", path, list)
        if not ids:
            raise ScenarioError(path, "route has no links")
        chain = []
        for lid in ids:
            if lid not in links:
                raise ScenarioError(path, f"route references missing link {lid!r}")
            chain.append(links[lid])
        for a, b in zip(chain, chain[1:]):
            if a.to_node != b.from_node:
                raise ScenarioError(
                    path, f"links {a.id} and {b.id} do not share a node"
                )
        routes[rid] = Route(rid, tuple(chain))

    targets = [n.id for n in nodes.values() if n.role == "target"]
    observed = [n.id for n in nodes.values() if n.role == "observed"]
    order = sig_doc.get("targets")
    if order is not None:
        if sorted(order) != sorted(targets):
            raise ScenarioError("signals.targets",
                                "does not match nodes with role=target")
        targets = list(order)
    order = sig_doc.get("observed")
    if order is not None:
        if sorted(order) != sorted(observed):
            raise ScenarioError("signals.observed",
                                "does not match nodes with role=observed")
        observed = list(order)

    configs: Dict[str, SignalConfig] = {}
    for node_id, cfg in _get(sig_doc, "nodes", "signals", dict).items():
        path = f"signals.nodes[{node_id}]"
        if node_id not in nodes:
            raise ScenarioError(path, "unknown node")
        if nodes[node_id].kind != "signalized":
            raise ScenarioError(path, "not a signalized node")
        splits = tuple(float(s) for s in _get(cfg, "splits", path, list))
        phases = _get(cfg, "phase_approaches", path, list)
        if len(splits) != len(phases):
            raise ScenarioError(path, "splits and phase_approaches lengths differ")
        approach_sets = []
        for j, group in enumerate(phases):
            bad = [a for a in group if a not in APPROACHES]
            if bad:
                raise ScenarioError(f"{path}.phase_approaches[{j}]",
                                    f"unknown approaches {bad}")
            approach_sets.append(frozenset(group))
        configs[node_id] = SignalConfig(splits, tuple(approach_sets))
    for node in nodes.values():
        if node.kind == "signalized" and node.id not in configs:
            raise ScenarioError(f"signals.nodes[{node.id}]",
                                "signalized node has no phasing")

    detectors: List[DetectorSpec] = []
    for i, dd in enumerate(det_doc):
        path = f"detectors[{i}]"
        link_id = _get(dd, "link", path)
        if link_id not in links:
            raise ScenarioError(path, f"unknown link {link_id!r}")
        kind = _get(dd, "kind", path)
        if kind not in DETECTOR_KINDS:
            raise ScenarioError(path, f"unknown kind {kind!r}")
        position = float(dd.get("position", 0.0 if kind == "stopbar" else 60.0))
        if kind == "stopbar" and position != 0.0:
            raise ScenarioError(f"{path}.position", "stopbar detectors sit at 0 m")
        if kind == "advance" and position <= 0.0:
            raise ScenarioError(f"{path}.position", "advance detectors sit upstream")
        if position >= links[link_id].length:
            raise ScenarioError(f"{path}.position",
                                f"beyond link length {links[link_id].length}")
        lanes_covered = int(dd.get("lanes_covered", links[link_id].lanes))
        if not (1 <= lanes_covered <= links[link_id].lanes):
            raise ScenarioError(f"{path}.lanes_covered", "outside link lanes")
        detectors.append(DetectorSpec(link_id, kind, position, lanes_covered))

    return Network(nodes, links, routes, targets, observed, configs, detectors)


def _demand_from_dict(doc: Mapping, net: Network) -> DemandProfile:
    label = doc.get("label", "custom")
    entries = []
    for i, ed in enumerate(_get(doc, "entries", "demand", list)):
        path = f"demand.entries[{i}]"
        route_id = _get(ed, "route", path)
        if route_id not in net.routes:
            raise ScenarioError(path, f"unknown route {route_id!r}")
        start = _time_field(_get(ed, "start", path), f"{path}.start")
        end = _time_field(_get(ed, "end", path), f"{path}.end")
        if end <= start:
            raise ScenarioError(path, "window ends before it starts")
        rate = float(_get(ed, "rate", path))
        if rate < 0:
            raise ScenarioError(f"{path}.rate", "must be >= 0")
        entries.append(DemandEntry(route_id, start, end, rate))
    return DemandProfile(label, tuple(entries), tuple(net.routes))
