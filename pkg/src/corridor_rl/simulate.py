"""Deterministic 1 Hz mesoscopic corridor simulator.

Vehicles traverse links at free-flow speed and stack in a point queue at
the downstream signal. Queues discharge under green at saturation flow
(fractional service accumulator), subject to downstream storage
(spillback) and lane blockages. Loop detectors are emulated from the
same state: stop-bar detectors see queue presence and discharges,
advance detectors see free-flow crossings and queue spillback over their
position.

Update order within each simulated second (fixed; determinism depends
on it):
  1. timing-plan block changes and queued plan swaps (at cycle starts)
  2. in-transit vehicles reaching the stop bar join queues / exit
  3. new arrivals injected (entry buffers drain while storage allows)
  4. green queues serve into downstream links
  5. detector and per-interval statistics update

All quantities are pure functions of (scenario, seed, action sequence);
two identical runs produce bitwise-identical outputs.
"""

from __future__ import annotations

from collections import deque
from typing import Dict, FrozenSet, List, NamedTuple, Sequence, Tuple

import numpy as np

from .network import APPROACHES, DetectorSpec, Network, Scenario
from .signals import Controller, effective_offset, plan_for_time, plan_transition

CAR_LENGTH_M = 5.0  # average car length c
PACK_M = CAR_LENGTH_M + 2.0  # queued spacing: car length + standstill gap
ZONE_M = 8.0  # detector sensing zone


class CompletedTrip(NamedTuple):
    route_id: str
    entry: int
    exit: int
    free_flow_time: float
    distance: float  # m


class DetectorReading(NamedTuple):
    spec: DetectorSpec
    flow: float  # vehicles per window
    occupancy: float  # fraction of window occupied


class IntervalWindow(NamedTuple):
    """Aggregates for one closed measurement window."""

    seconds: int
    readings: Dict[Tuple[str, str], Tuple[float, float]]  # (link, kind) -> (flow, occ)
    queue_mean: Dict[str, float]  # monitored link -> mean queue count
    queue_end: Dict[str, int]  # monitored link -> queue count at close
    completed: List[CompletedTrip]
    injected: int
    exited: int


class _Vehicle:
    __slots__ = ("r_idx", "route_links", "idx", "entry")

    def __init__(self, r_idx: int, route_links: Tuple[str, ...], entry: int):
        self.r_idx = r_idx
        self.route_links = route_links
        self.idx = 0
        self.entry = entry


class _LinkRun:
    """Mutable per-link simulation state."""

    __slots__ = ("link", "in_transit", "queue", "acc", "blocked", "storage",
                 "tt", "last_green", "discharged")

    def __init__(self, link):
        self.link = link
        self.in_transit = deque()  # (arrive_at, vehicle), arrival-sorted
        self.queue = deque()  # vehicles, FIFO
        self.acc = 0.0
        self.blocked = 0
        self.storage = self._storage_for(link.lanes)
        self.tt = link.travel_time
        self.last_green = -2
        self.discharged = 0

    def _storage_for(self, lanes: int) -> int:
        return int(self.link.length * lanes / PACK_M)

    def set_blocked(self, blocked: int) -> None:
        self.blocked = blocked
        self.storage = self._storage_for(max(0, self.link.lanes - blocked))

    def has_space(self) -> bool:
        return len(self.in_transit) + len(self.queue) < self.storage

    @property
    def occupancy_count(self) -> int:
        return len(self.in_transit) + len(self.queue)


class _DetectorRun:
    __slots__ = ("spec", "scale", "dwell", "pending", "flow", "occ")

    def __init__(self, spec: DetectorSpec, link):
        self.spec = spec
        self.scale = spec.lanes_covered / link.lanes
        self.dwell = (ZONE_M + CAR_LENGTH_M) / link.free_flow_speed
        self.pending = deque()  # upcoming crossing times (advance only)
        self.flow = 0.0
        self.occ = 0.0


class World:
    """One live simulation of a scenario."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.net = scenario.network
        self.rng = np.random.default_rng(seed)
        self.t = scenario.start

        self.links_rt: Dict[str, _LinkRun] = {
            lid: _LinkRun(link) for lid, link in self.net.links.items()
        }
        self._link_list = list(self.links_rt.values())
        self._monitored = [self.links_rt[l] for l in self.net.monitored_incoming()]

        # route plumbing
        self._route_ids = scenario.demand.route_order
        self._route_links = [
            tuple(l.id for l in self.net.routes[r].links) for r in self._route_ids
        ]
        self._route_free = [self.net.routes[r].free_flow_time for r in self._route_ids]
        self._route_dist = [self.net.routes[r].distance for r in self._route_ids]
        self._first_links = [self.links_rt[ls[0]] for ls in self._route_links]
        self._buffers: List[deque] = [deque() for _ in self._route_ids]

        # demand lookup (piecewise constant)
        self._demand_breaks, self._demand_rates = scenario.demand.rate_table()
        self._demand_idx = 0

        # lane blockage events, merged and time-sorted
        events: List[Tuple[int, str, int]] = []
        for link_id, start, end, n in scenario.lane_blocks:
            events.append((start, link_id, n))
            events.append((end, link_id, -n))
        self._block_events = sorted(events)
        self._block_ptr = 0

        # detectors
        self._detectors: List[_DetectorRun] = [
            _DetectorRun(spec, self.net.links[spec.link_id])
            for spec in self.net.detectors
        ]
        self._advance = [(d, self.links_rt[d.spec.link_id]) for d in self._detectors
                         if d.spec.kind == "advance"]
        self._stopbar = [(d, self.links_rt[d.spec.link_id]) for d in self._detectors
                         if d.spec.kind == "stopbar"]
        self._dets_on_entry: Dict[str, List[_DetectorRun]] = {}
        for det in self._detectors:
            if det.spec.kind == "advance":
                self._dets_on_entry.setdefault(det.spec.link_id, []).append(det)

        # controllers, driven by the active schedule
        self.schedule = scenario.schedule()
        block = plan_for_time(self.schedule, self.t)
        self._plan_cache: Dict[Tuple[str, int], object] = {}
        self._service_maps: Dict[Tuple[str, int], Tuple[Dict, ...]] = {}
        self.raw_offsets: Dict[str, int] = {}
        self.controllers: Dict[str, Controller] = {}
        for i, node in enumerate(self.net.targets):
            self.raw_offsets[node] = block.offsets[i]
            self.controllers[node] = Controller(
                self._plan_for(node, block.cycle_length),
                block.offsets[i], self.t)
        for node in self.net.observed:
            self.raw_offsets[node] = 0
            self.controllers[node] = Controller(
                self._plan_for(node, block.cycle_length), 0, self.t)
        self._block_starts = [b.start for b in self.schedule if b.start > self.t]
        self._next_block = 0
        self._pending_cycle: Dict[str, int] = {}

        # conservation + interval accumulators
        self.injected = 0
        self.exited = 0
        self._win_seconds = 0
        self._win_completed: List[CompletedTrip] = []
        self._win_injected = 0
        self._win_exited = 0
        self._queue_sums = [0] * len(self._monitored)

    # ------------------------------------------------------------- plans
    def _plan_for(self, node: str, cycle: int):
        key = (node, cycle)
        plan = self._plan_cache.get(key)
        if plan is None:
            plan = self.net.phase_plan(node, cycle)
            self._plan_cache[key] = plan
            by_phase = []
            for moves in plan.movements:
                grouped: Dict[str, set] = {}
                for a, b in moves:
                    grouped.setdefault(a, set()).add(b)
                by_phase.append({a: frozenset(bs) for a, bs in grouped.items()})
            self._service_maps[key] = tuple(by_phase)
        return plan

    def command_offsets(self, raw_offsets: Sequence[int]) -> List[int]:
        """Apply one action: commanded raw offsets for the target nodes.

        Returns the signed adjustment applied at each target.
        """
        if len(raw_offsets) != len(self.net.targets):
            raise ValueError(
                f"expected {len(self.net.targets)} offsets, got {len(raw_offsets)}"
            )
        adjustments = []
        for node, raw in zip(self.net.targets, raw_offsets):
            raw = int(raw)
            if not 0 <= raw < 120:
                raise ValueError(f"offset {raw} outside [0, 120)")
            self.raw_offsets[node] = raw
            ctl = self.controllers[node]
            if node in self._pending_cycle:
                # plan swap still queued; new offset folds in at swap time
                adjustments.append(0)
                continue
            target = effective_offset(raw, ctl.plan.cycle_length)
            adj = plan_transition(ctl.offset, target, ctl.plan.cycle_length)
            ctl.adjust(adj)
            adjustments.append(adj)
        return adjustments

    # ------------------------------------------------------------ stepping
    def run(self, seconds: int) -> None:
        for _ in range(seconds):
            self._step_second()

    def _step_second(self) -> None:
        t = self.t
        if t >= self.scenario.end:
            raise RuntimeError(f"stepping past scenario end at t={t}")

        # 1) timing-plan maintenance
        if (self._next_block < len(self._block_starts)
                and t == self._block_starts[self._next_block]):
            self._next_block += 1
            cycle = plan_for_time(self.schedule, t).cycle_length
            for node, ctl in self.controllers.items():
                if ctl.plan.cycle_length != cycle:
                    self._pending_cycle[node] = cycle
        if self._pending_cycle:
            for node in list(self._pending_cycle):
                ctl = self.controllers[node]
                if ctl.at_cycle_start():
                    cycle = self._pending_cycle.pop(node)
                    ctl.replan(self._plan_for(node, cycle),
                               self.raw_offsets[node], t)
        while (self._block_ptr < len(self._block_events)
               and self._block_events[self._block_ptr][0] == t):
            _, link_id, delta = self._block_events[self._block_ptr]
            lr = self.links_rt[link_id]
            lr.set_blocked(lr.blocked + delta)
            self._block_ptr += 1

        # 2) in-transit vehicles reach the stop bar
        for lr in self._link_list:
            transit = lr.in_transit
            while transit and transit[0][0] <= t:
                _, veh = transit.popleft()
                self._arrive(lr, veh, t)

        # 3) arrivals
        breaks = self._demand_breaks
        while (self._demand_idx + 1 < len(breaks)
               and t >= breaks[self._demand_idx + 1]):
            self._demand_idx += 1
        if breaks[self._demand_idx] <= t < breaks[self._demand_idx + 1]:
            counts = self.rng.poisson(self._demand_rates[self._demand_idx])
            for r_idx in np.flatnonzero(counts):
                buf = self._buffers[r_idx]
                for _ in range(int(counts[r_idx])):
                    self.injected += 1
                    self._win_injected += 1
                    buf.append(_Vehicle(r_idx, self._route_links[r_idx], t))
        for r_idx, buf in enumerate(self._buffers):
            first = self._first_links[r_idx]
            while buf and first.has_space():
                self._enter_link(first, buf.popleft(), t)

        # 4) service under green
        for node, ctl in self.controllers.items():
            smap = self._service_maps[(node, ctl.plan.cycle_length)]
            for in_id, green_outs in smap[ctl.phase_index].items():
                self._serve(self.links_rt[in_id], green_outs, t)
            ctl.advance()

        # 5) detectors and window statistics
        for det, lr in self._advance:
            pend = det.pending
            crossings = 0
            while pend and pend[0] <= t:
                pend.popleft()
                crossings += 1
            if crossings:
                det.flow += crossings * det.scale
            eff = max(1, lr.link.lanes - lr.blocked)
            if len(lr.queue) * PACK_M / eff >= det.spec.position:
                det.occ += 1.0
            elif crossings:
                det.occ += min(1.0, crossings * det.dwell)
        for det, lr in self._stopbar:
            if lr.discharged:
                det.flow += lr.discharged * det.scale
            if lr.queue or lr.discharged:
                det.occ += 1.0
        queue_sums = self._queue_sums
        for i, lr in enumerate(self._monitored):
            queue_sums[i] += len(lr.queue)
        for lr in self._link_list:
            lr.discharged = 0

        self._win_seconds += 1
        self.t = t + 1

    def _arrive(self, lr: _LinkRun, veh: _Vehicle, t: int) -> None:
        if veh.idx == len(veh.route_links) - 1:
            self._exit(veh, t)
        elif self.net.nodes[lr.link.to_node].kind == "signalized":
            lr.queue.append(veh)
        else:
            veh.idx += 1
            self._enter_link(self.links_rt[veh.route_links[veh.idx]], veh, t)

    def _enter_link(self, lr: _LinkRun, veh: _Vehicle, t: int) -> None:
        lr.in_transit.append((t + lr.tt, veh))
        dets = self._dets_on_entry.get(lr.link.id)
        if dets:
            for det in dets:
                det.pending.append(
                    t + (lr.link.length - det.spec.position) / lr.link.free_flow_speed
                )

    def _exit(self, veh: _Vehicle, t: int) -> None:
        self.exited += 1
        self._win_exited += 1
        self._win_completed.append(CompletedTrip(
            self._route_ids[veh.r_idx], veh.entry, t,
            self._route_free[veh.r_idx], self._route_dist[veh.r_idx],
        ))

    def _serve(self, lr: _LinkRun, green_outs: FrozenSet[str], t: int) -> None:
        queue = lr.queue
        if lr.last_green != t - 1:
            lr.acc = 0.0  # fresh green starts discharge from rest
        lr.last_green = t
        if not queue:
            lr.acc = 0.0
            return
        eff_lanes = lr.link.lanes - lr.blocked
        if eff_lanes <= 0:
            lr.acc = 0.0
            return
        lr.acc += lr.link.saturation_flow * eff_lanes
        while lr.acc >= 1.0 and queue:
            veh = queue[0]
            out_id = veh.route_links[veh.idx + 1]
            if out_id not in green_outs:
                break
            out = self.links_rt[out_id]
            if not out.has_space():
                break
            queue.popleft()
            veh.idx += 1
            self._enter_link(out, veh, t)
            lr.acc -= 1.0
            lr.discharged += 1
        if lr.acc > 1.0:
            lr.acc = 1.0  # blocked head: bank at most one vehicle of service

    # ------------------------------------------------------------ windows
    def close_interval(self) -> IntervalWindow:
        """Freeze and reset the current measurement window."""
        seconds = self._win_seconds
        if seconds == 0:
            raise RuntimeError("empty measurement window")
        readings: Dict[Tuple[str, str], Tuple[float, float]] = {}
        counts: Dict[Tuple[str, str], int] = {}
        for det in self._detectors:
            key = (det.spec.link_id, det.spec.kind)
            flow, occ = readings.get(key, (0.0, 0.0))
            readings[key] = (flow + det.flow, occ + det.occ / seconds)
            counts[key] = counts.get(key, 0) + 1
            det.flow = 0.0
            det.occ = 0.0
        for key, n in counts.items():
            if n > 1:  # same-kind detectors on one link: mean occupancy
                flow, occ = readings[key]
                readings[key] = (flow, occ / n)
        window = IntervalWindow(
            seconds=seconds,
            readings=readings,
            queue_mean={lr.link.id: s / seconds
                        for lr, s in zip(self._monitored, self._queue_sums)},
            queue_end={lr.link.id: len(lr.queue) for lr in self._monitored},
            completed=self._win_completed,
            injected=self._win_injected,
            exited=self._win_exited,
        )
        self._win_seconds = 0
        self._win_completed = []
        self._win_injected = 0
        self._win_exited = 0
        self._queue_sums = [0] * len(self._monitored)
        return window

    def conservation(self) -> Tuple[int, int, int]:
        """(injected, exited, on-network); injected == exited + on-network."""
        on_network = sum(len(b) for b in self._buffers)
        for lr in self._link_list:
            on_network += lr.occupancy_count
        return self.injected, self.exited, on_network


# ---------------------------------------------------------------- readings
def read_detectors(world: World) -> List[DetectorReading]:
    """Per-detector readings for the currently open window (no reset)."""
    seconds = max(1, world._win_seconds)
    return [
        DetectorReading(det.spec, det.flow, det.occ / seconds)
        for det in world._detectors
    ]


# -------------------------------------------------------------- observation
def observation_size(net: Network) -> int:
    return (len(net.targets) + len(net.observed)) * len(APPROACHES) * 2 * 2


def observe(net: Network, window: IntervalWindow) -> np.ndarray:
    """Fixed-layout observation vector for one closed window.

    Layout: node (targets then observed) x approach (N,E,S,W) x detector
    kind (advance, stopbar) x measure (flow, occupancy). Slots without a
    link or a detector are exactly 0. Flows are normalized by the link's
    saturation count over the window; occupancy is already a fraction.
    """
    out = np.zeros(observation_size(net))
    pos = 0
    for node in net.monitored:
        sides = net.incoming[node]
        for side in APPROACHES:
            link_id = sides.get(side)
            for kind in ("advance", "stopbar"):
                if link_id is not None:
                    reading = window.readings.get((link_id, kind))
                    if reading is not None:
                        link = net.links[link_id]
                        cap = link.saturation_flow * link.lanes * window.seconds
                        out[pos] = reading[0] / cap
                        out[pos + 1] = reading[1]
                pos += 2
    return out


# ------------------------------------------------------------------- reward
def reward(net: Network, window: IntervalWindow, mode: str = "mean",
           car_length: float = CAR_LENGTH_M) -> float:
    """Negative sum of queue lengths scaled by car_length/link_length over
    the incoming links of target and observed nodes."""
    if mode == "mean":
        queues = window.queue_mean
    elif mode == "endpoint":
        queues = window.queue_end
    else:
        raise ValueError(f"unknown queue mode {mode!r}")
    total = 0.0
    for link_id, q in queues.items():
        total += q * car_length / net.links[link_id].length
    return -total


# ------------------------------------------------------------------ metrics
def average_delay(trips: Sequence[CompletedTrip]) -> float:
    """Total time above free flow per km of completed travel (s/km)."""
    if not trips:
        raise ValueError("no completed trips")
    delay = sum((tr.exit - tr.entry) - tr.free_flow_time for tr in trips)
    km = sum(tr.distance for tr in trips) / 1000.0
    return delay / km


def queue_travel_time_check(
    trips: Sequence[CompletedTrip],
    queue_mean: float,
    throughput: int,
    window_s: float,
    free_flow_time: float,
) -> Tuple[float, float]:
    """Measured mean travel time vs the queue-based prediction
    window x mean_queue / throughput + free-flow time (a Little's-law
    style identity). Zero-demand degenerates to free flow on both sides."""
    lhs = (
        sum(tr.exit - tr.entry for tr in trips) / len(trips)
        if trips else free_flow_time
    )
    rhs = (
        window_s * queue_mean / throughput + free_flow_time
        if throughput > 0 else free_flow_time
    )
    return lhs, rhs
