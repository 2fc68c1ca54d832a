"""Exhaustive offset-grid search, the oracle for small coordination tasks."""

from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .env import mean_action_reward, run_episode
from .network import Scenario


def offset_grid(cycle: int, step: int) -> List[int]:
    if step <= 0 or cycle % step != 0:
        raise ValueError(f"step {step} s does not divide the cycle {cycle} s")
    return list(range(0, cycle, step))


def fixed_offset_policy(offsets: Sequence[int]):
    frozen = tuple(int(o) for o in offsets)
    return lambda t, obs: frozen


def search(scenario: Scenario, seeds: Sequence[int], step: int = 5,
           max_points: int = 20000,
           pinned: Optional[Dict[int, int]] = None):
    """Simulate every offset combination on a grid.

    Returns (best_offsets, best_score, surface) where surface lists
    (offsets, mean reward across seeds) for every grid point. `pinned`
    fixes chosen target indices to a single value, which removes the
    rotational degeneracy when only relative offsets matter.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    cycles = {b.cycle_length for b in scenario.schedule()}
    if len(cycles) != 1:
        raise ValueError("offset grid needs a single cycle length")
    cycle = cycles.pop()
    grid = offset_grid(cycle, step)
    axes: List[List[int]] = []
    for i in range(len(scenario.network.targets)):
        if pinned and i in pinned:
            axes.append([int(pinned[i]) % cycle])
        else:
            axes.append(grid)
    total = int(np.prod([len(a) for a in axes]))
    if total > max_points:
        raise ValueError(f"search space {total} exceeds the cap {max_points}")

    surface: List[Tuple[Tuple[int, ...], float]] = []
    for offsets in product(*axes):
        policy = fixed_offset_policy(offsets)
        score = float(np.mean([
            mean_action_reward(run_episode(scenario, seed, policy), scenario)
            for seed in seeds]))
        surface.append((offsets, score))
    best_offsets, best_score = max(surface, key=lambda kv: kv[1])
    return best_offsets, best_score, surface
