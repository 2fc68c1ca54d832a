"""Decision-interval environment over the corridor simulator.

The agent acts once per interval: it commands raw offsets for the target
intersections, the world advances one interval, and the closed
measurement window yields the observation, reward, and delay metrics.
The warm-up portion of a scenario runs under the scheduled plan with no
agent involvement; the first action lands on the first interval boundary
at or after the warm-up.
"""

from __future__ import annotations

import math
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .network import Scenario
from .scenarios import PolicyFn
from .simulate import IntervalWindow, World, average_delay, observation_size, observe, reward


class IntervalRecord(NamedTuple):
    """One reported interval of a run (warm-up intervals included)."""

    t_start: int  # seconds since midnight at interval open
    reward: float
    delay: float  # s/km over trips completed in the interval; nan if none
    total_queue: float  # mean vehicles queued on monitored links
    completed: int
    injected: int
    exited: int


def _interval_record(scenario: Scenario, t_start: int,
                     window: IntervalWindow) -> IntervalRecord:
    try:
        delay = average_delay(window.completed)
    except ValueError:
        delay = float("nan")
    return IntervalRecord(
        t_start=t_start,
        reward=reward(scenario.network, window, scenario.reward_queue_mode),
        delay=delay,
        total_queue=sum(window.queue_mean.values()),
        completed=len(window.completed),
        injected=window.injected,
        exited=window.exited,
    )


class CorridorEnv:
    """Gym-style wrapper: reset() -> obs; step(offsets) -> transition."""

    def __init__(self, scenario: Scenario, seed: int = 0):
        self.scenario = scenario
        self.net = scenario.network
        self._seed = seed
        self.obs_dim = observation_size(self.net)
        self.n_targets = len(self.net.targets)
        self.intervals = scenario.duration // scenario.interval
        self.first_action = math.ceil(scenario.warm_up / scenario.interval)
        self.steps_per_episode = self.intervals - self.first_action
        self.world: Optional[World] = None
        self._m = 0

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self._seed = seed
        self.world = World(self.scenario, self._seed)
        self._m = self.first_action
        obs = np.zeros(self.obs_dim)
        for _ in range(self.first_action):
            self.world.run(self.scenario.interval)
            obs = observe(self.net, self.world.close_interval())
        return obs

    def step(self, offsets) -> Tuple[np.ndarray, float, bool, dict]:
        if self.world is None:
            raise RuntimeError("call reset() before step()")
        if self._m >= self.intervals:
            raise RuntimeError("episode is over; call reset()")
        t_boundary = self.scenario.start + self._m * self.scenario.interval
        self.world.command_offsets(offsets)
        self.world.run(self.scenario.interval)
        window = self.world.close_interval()
        record = _interval_record(self.scenario, t_boundary, window)
        obs = observe(self.net, window)
        self._m += 1
        done = self._m >= self.intervals
        return obs, record.reward, done, {"record": record, "window": window}


def run_episode(scenario: Scenario, seed: int,
                policy: Optional[PolicyFn]) -> List[IntervalRecord]:
    """Run one full scenario under a policy (None = scheduled plan only).

    Every interval of the scenario is reported, including the warm-up
    interval(s) before the first action.
    """
    world = World(scenario, seed)
    intervals = scenario.duration // scenario.interval
    first_action = math.ceil(scenario.warm_up / scenario.interval)
    obs = np.zeros(observation_size(scenario.network))
    records = []
    for m in range(intervals):
        t_boundary = scenario.start + m * scenario.interval
        if policy is not None and m >= first_action:
            world.command_offsets(policy(t_boundary, obs))
        world.run(scenario.interval)
        window = world.close_interval()
        obs = observe(scenario.network, window)
        records.append(_interval_record(scenario, t_boundary, window))
    return records


def mean_action_reward(records: List[IntervalRecord],
                       scenario: Scenario) -> float:
    """Mean reward over the acted intervals (the learning objective)."""
    first_action = math.ceil(scenario.warm_up / scenario.interval)
    acted = records[first_action:]
    if not acted:
        raise ValueError("scenario has no acted intervals")
    return float(np.mean([r.reward for r in acted]))
