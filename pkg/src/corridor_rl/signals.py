"""Ring-phase signal controllers with cycle/offset semantics.

An offset shifts an intersection's whole phase schedule relative to a
global clock, within a cycle shared by the coordinated intersections.
Offset changes are realized by stretching or shrinking the phase that is
currently running; phase order and planned durations are never altered
outside the transition window.

Conventions:
  * times are integer seconds (1 Hz control grid)
  * a controller at offset ``o`` running plan ``p`` is *aligned* when its
    (phase_index, phase_elapsed) equals the position implied by
    ``(t - o) mod p.cycle_length``
  * reductions advance the cyclic phase position immediately, so the
    controller is aligned to the new offset the moment they are applied;
    extensions stretch the running phase and re-align when it ends.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import FrozenSet, Iterable, Sequence, Tuple

Movement = Tuple[str, str]  # (incoming link id, outgoing link id)


class ScheduleCoverageError(ValueError):
    """Raised when a time-of-day lookup falls outside every schedule block."""


@dataclass(frozen=True)
class PhasePlan:
    """A fixed cycle split into ordered phases with movement permissions."""

    cycle_length: int
    durations: Tuple[int, ...]
    movements: Tuple[FrozenSet[Movement], ...]
    valid_from: int = 0
    valid_to: int = 24 * 3600

    def __post_init__(self) -> None:
        if len(self.durations) < 2:
            raise ValueError("a phase plan needs at least 2 phases")
        if len(self.durations) != len(self.movements):
            raise ValueError("durations and movements must have equal length")
        if any(d < 1 for d in self.durations):
            raise ValueError("every phase duration must be >= 1 s")
        if sum(self.durations) != self.cycle_length:
            raise ValueError(
                f"phase durations sum to {sum(self.durations)}, "
                f"expected cycle length {self.cycle_length}"
            )

    @property
    def num_phases(self) -> int:
        return len(self.durations)

    def cumulative_starts(self) -> Tuple[int, ...]:
        starts = []
        acc = 0
        for d in self.durations:
            starts.append(acc)
            acc += d
        return tuple(starts)

    def position_at(self, cycle_second: int) -> Tuple[int, int]:
        """Map a second within the cycle to (phase_index, phase_elapsed)."""
        pos = cycle_second % self.cycle_length
        for idx, start in enumerate(self.cumulative_starts()):
            if pos < start + self.durations[idx]:
                return idx, pos - start
        raise AssertionError("unreachable: position outside cycle")


@dataclass(frozen=True)
class ControllerState:
    """Phase clock of one intersection.

    ``pending_adjust`` is the not-yet-elapsed part of an offset transition:
    positive while the current phase is running extended, zero otherwise
    (reductions complete instantly by advancing the phase position).
    """

    plan: PhasePlan
    offset: int
    phase_index: int
    phase_elapsed: int
    pending_adjust: int = 0

    @property
    def in_transition(self) -> bool:
        return self.pending_adjust != 0


def effective_offset(raw: int, cycle_length: int) -> int:
    """Fold a raw commanded offset into [0, cycle_length).

    The action space is fixed at [0, 120) while deployed cycles may be
    shorter, so commanded values can exceed the running cycle.
    """
    return raw % cycle_length


def plan_transition(current_offset: int, new_offset: int, cycle_length: int) -> int:
    """Signed phase adjustment that moves ``current_offset`` to ``new_offset``.

    The raw difference is wrapped by a full cycle whenever it exceeds half
    a cycle, so the result lies in (-cycle/2, cycle/2] and is congruent to
    ``new - current`` modulo the cycle.
    """
    diff = (new_offset - current_offset) % cycle_length
    if 2 * diff > cycle_length:
        diff -= cycle_length
    return diff


def aligned_position(plan: PhasePlan, offset: int, t: int) -> Tuple[int, int]:
    """(phase_index, phase_elapsed) an aligned controller shows at time t."""
    return plan.position_at((t - offset) % plan.cycle_length)


def controller_at(plan: PhasePlan, offset: int, t: int) -> ControllerState:
    """A controller snapped into alignment for time ``t``."""
    offset = effective_offset(offset, plan.cycle_length)
    idx, elapsed = aligned_position(plan, offset, t)
    return ControllerState(plan, offset, idx, elapsed)


def is_aligned(state: ControllerState, t: int) -> bool:
    idx, elapsed = aligned_position(state.plan, state.offset, t)
    return (idx, elapsed) == (state.phase_index, state.phase_elapsed)


def apply_adjustment(state: ControllerState, adjustment: int) -> ControllerState:
    """Realize a signed offset adjustment on the running controller.

    A positive adjustment extends the current phase by that amount and is
    absorbed when the phase ends. A negative adjustment ends the current
    phase early; if the remaining phase time is shorter than the required
    reduction the phase ends immediately and the residual cascades into
    the following phase(s).
    """
    plan = state.plan
    if abs(adjustment) * 2 > plan.cycle_length:
        raise ValueError(
            f"adjustment {adjustment} exceeds half the cycle {plan.cycle_length}"
        )
    if adjustment == 0:
        return state
    offset = (state.offset + adjustment) % plan.cycle_length
    if adjustment > 0:
        return replace(
            state, offset=offset, pending_adjust=state.pending_adjust + adjustment
        )
    idx = state.phase_index
    elapsed = state.phase_elapsed
    pending = state.pending_adjust
    shortfall = -adjustment
    while shortfall > 0:
        effective = plan.durations[idx] + pending
        remaining = effective - elapsed
        if shortfall < remaining:
            elapsed += shortfall
            shortfall = 0
        else:
            # current phase ends now (skipped if untouched); carry on
            shortfall -= remaining
            idx = (idx + 1) % plan.num_phases
            elapsed = 0
            pending = 0
    return replace(
        state, offset=offset, phase_index=idx, phase_elapsed=elapsed,
        pending_adjust=pending,
    )


def tick(state: ControllerState, dt: int = 1) -> Tuple[ControllerState, FrozenSet[Movement]]:
    """Consume one second: return the advanced state and the movement set
    that had right-of-way during the consumed second."""
    if dt != 1:
        raise ValueError("controllers run on a 1 s grid")
    plan = state.plan
    movements = plan.movements[state.phase_index]
    elapsed = state.phase_elapsed + 1
    idx = state.phase_index
    pending = state.pending_adjust
    if elapsed >= plan.durations[idx] + pending:
        idx = (idx + 1) % plan.num_phases
        elapsed = 0
        pending = 0
    return replace(
        state, phase_index=idx, phase_elapsed=elapsed, pending_adjust=pending
    ), movements


class Controller:
    """Mutable twin of :class:`ControllerState` for simulation hot loops.

    Same semantics as the pure functions above, without per-second object
    churn. ``advance()`` returns the index of the phase that held
    right-of-way during the consumed second.
    """

    __slots__ = ("plan", "offset", "phase_index", "phase_elapsed", "pending_adjust",
                 "_durations", "_num_phases")

    def __init__(self, plan: PhasePlan, offset: int, t: int = 0):
        self.replan(plan, offset, t)

    def replan(self, plan: PhasePlan, offset: int, t: int) -> None:
        self.plan = plan
        self.offset = effective_offset(offset, plan.cycle_length)
        self.phase_index, self.phase_elapsed = aligned_position(plan, self.offset, t)
        self.pending_adjust = 0
        self._durations = plan.durations
        self._num_phases = len(plan.durations)

    def state(self) -> ControllerState:
        return ControllerState(self.plan, self.offset, self.phase_index,
                               self.phase_elapsed, self.pending_adjust)

    def set_state(self, state: ControllerState) -> None:
        self.plan = state.plan
        self.offset = state.offset
        self.phase_index = state.phase_index
        self.phase_elapsed = state.phase_elapsed
        self.pending_adjust = state.pending_adjust
        self._durations = state.plan.durations
        self._num_phases = len(state.plan.durations)

    def command_offset(self, raw_offset: int) -> int:
        """Transition to a commanded offset; returns the applied adjustment."""
        target = effective_offset(raw_offset, self.plan.cycle_length)
        adjustment = plan_transition(self.offset, target, self.plan.cycle_length)
        self.adjust(adjustment)
        return adjustment

    def adjust(self, adjustment: int) -> None:
        self.set_state(apply_adjustment(self.state(), adjustment))

    def advance(self) -> int:
        """Advance one second; return the phase index active during it."""
        active = self.phase_index
        elapsed = self.phase_elapsed + 1
        if elapsed >= self._durations[self.phase_index] + self.pending_adjust:
            self.phase_index = (self.phase_index + 1) % self._num_phases
            self.phase_elapsed = 0
            self.pending_adjust = 0
        else:
            self.phase_elapsed = elapsed
        return active

    def at_cycle_start(self) -> bool:
        return self.phase_index == 0 and self.phase_elapsed == 0


@dataclass(frozen=True)
class ScheduleBlock:
    """One row of a time-of-day coordination schedule."""

    start: int
    end: int
    cycle_length: int
    offsets: Tuple[int, ...]


def parse_hhmm(text: str) -> int:
    """'HH:MM' -> seconds since midnight."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"bad time of day {text!r}, expected HH:MM")
    hours, minutes = int(parts[0]), int(parts[1])
    if not (0 <= hours <= 24 and 0 <= minutes < 60):
        raise ValueError(f"bad time of day {text!r}")
    return hours * 3600 + minutes * 60


def make_schedule(rows: Iterable[dict]) -> Tuple[ScheduleBlock, ...]:
    """Build schedule blocks from {'start','end','cycle','offsets'} rows."""
    blocks = []
    for row in rows:
        start = parse_hhmm(row["start"]) if isinstance(row["start"], str) else int(row["start"])
        end = parse_hhmm(row["end"]) if isinstance(row["end"], str) else int(row["end"])
        if end <= start:
            raise ValueError(f"schedule block ends ({end}) before it starts ({start})")
        blocks.append(ScheduleBlock(start, end, int(row["cycle"]),
                                    tuple(int(v) for v in row["offsets"])))
    return tuple(sorted(blocks, key=lambda b: b.start))


def plan_for_time(schedule: Sequence[ScheduleBlock], t: int) -> ScheduleBlock:
    """Block whose [start, end) window contains ``t``."""
    for block in schedule:
        if block.start <= t < block.end:
            return block
    raise ScheduleCoverageError(f"no schedule block covers t={t} s")


def scale_splits(splits: Sequence[float], cycle_length: int) -> Tuple[int, ...]:
    """Integer phase durations for fractional splits, summing exactly to the
    cycle with every phase at least 1 s (largest-remainder rounding)."""
    total = sum(splits)
    if total <= 0:
        raise ValueError("splits must sum to a positive value")
    exact = [s / total * cycle_length for s in splits]
    durations = [max(1, int(x)) for x in exact]
    deficit = cycle_length - sum(durations)
    order = sorted(range(len(exact)), key=lambda i: exact[i] - int(exact[i]),
                   reverse=True)
    i = 0
    while deficit > 0:
        durations[order[i % len(order)]] += 1
        deficit -= 1
        i += 1
    while deficit < 0:
        # give back from the largest phases, never below 1 s
        j = max(range(len(durations)), key=lambda k: durations[k])
        if durations[j] <= 1:
            raise ValueError("cycle too short for the requested splits")
        durations[j] -= 1
        deficit += 1
    return tuple(durations)
