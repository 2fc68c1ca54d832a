"""Evaluation runs, tidy CSV emission, and cross-seed summaries.

One evaluation = a set of seeds run under one policy on one scenario.
Per-interval rows go to a long-format CSV; summaries aggregate across
seeds with quartile bands per interval plus scenario-level means. The
seed-level delay is total time above free flow over total distance,
pooled over every trip completed after the warm-up.
"""

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .env import IntervalRecord, _interval_record
from .network import Scenario
from .scenarios import baseline_policy, replay_policy, replay_rows
from .simulate import World, average_delay, observation_size, observe

INTERVAL_FIELDS = ("time_s", "scenario", "seed", "policy",
                   "avg_delay_s_per_km", "reward", "total_queue")
SUMMARY_FIELDS = ("time_s", "scenario", "policy", "seeds", "delay_q1",
                  "delay_median", "delay_q3", "delay_mean", "reward_mean",
                  "queue_mean")
SWEEP_FIELDS = ("interval_min", "scenario", "baseline_delay_s_per_km",
                "policy_delay_s_per_km", "pct_difference", "seeds")


def percent_difference(baseline: float, policy: float) -> float:
    """Positive means the policy beat the baseline."""
    return (baseline - policy) / baseline * 100.0


def sign_test_pvalue(wins: int, n: int) -> float:
    """One-sided exact binomial tail: P(X >= wins) under fair coin."""
    if not 0 <= wins <= n:
        raise ValueError("wins must lie in [0, n]")
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0 ** n


@dataclass
class SeedResult:
    seed: int
    records: List[IntervalRecord]
    delay: float  # s/km pooled over post-warm-up completions; nan if none
    mean_reward: float  # mean step reward over acted intervals


def resolve_policy(source: str, scenario: Scenario):
    """Policy factory from a CLI-style source string.

    Accepts "baseline", "replay:NAME" (recorded offset tables), or a
    checkpoint path. Returns a (t, obs) -> offsets callable.
    """
    if source == "baseline":
        return baseline_policy(scenario.schedule())
    if source.startswith("replay:"):
        base = scenario.name.split("+")[0].split("@")[0]
        period = base.rsplit("-", 1)[-1]
        return replay_policy(replay_rows(source.split(":", 1)[1], period))
    from .ppo import greedy_policy, load_checkpoint

    net, _ = load_checkpoint(source)
    expect = observation_size(scenario.network)
    if net.obs_dim != expect:
        raise ValueError(f"checkpoint expects obs_dim {net.obs_dim}, "
                         f"scenario provides {expect}")
    if net.n_heads != len(scenario.network.targets):
        raise ValueError("checkpoint head count does not match the corridor")
    return greedy_policy(net)


def evaluate_seed(scenario: Scenario, seed: int, source: str) -> SeedResult:
    policy = resolve_policy(source, scenario)
    world = World(scenario, seed)
    intervals = scenario.duration // scenario.interval
    first_action = math.ceil(scenario.warm_up / scenario.interval)
    obs = np.zeros(observation_size(scenario.network))
    records: List[IntervalRecord] = []
    trips = []
    for m in range(intervals):
        t_boundary = scenario.start + m * scenario.interval
        if m >= first_action:
            world.command_offsets(policy(t_boundary, obs))
        world.run(scenario.interval)
        window = world.close_interval()
        obs = observe(scenario.network, window)
        records.append(_interval_record(scenario, t_boundary, window))
        if m >= first_action:
            trips.extend(window.completed)
    try:
        delay = average_delay(trips)
    except ValueError:
        delay = float("nan")
    rewards = [r.reward for r in records[first_action:]]
    return SeedResult(seed=seed, records=records, delay=delay,
                      mean_reward=float(np.mean(rewards)))


def _eval_task(args: Tuple[Scenario, int, str]) -> SeedResult:
    return evaluate_seed(*args)


def evaluate_policy(scenario: Scenario, seeds: Sequence[int], source: str,
                    workers: int = 1) -> List[SeedResult]:
    """Seed-parallel evaluation; results come back in seed-list order."""
    if not seeds:
        raise ValueError("need at least one seed")
    tasks = [(scenario, int(s), source) for s in seeds]
    if workers <= 1 or len(tasks) == 1:
        return [_eval_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_eval_task, tasks))


# ----------------------------------------------------------------- tables
def interval_rows(scenario: Scenario, policy_name: str,
                  results: Sequence[SeedResult]) -> List[Dict[str, object]]:
    rows = []
    for res in results:
        for rec in res.records:
            rows.append({"time_s": rec.t_start, "scenario": scenario.name,
                         "seed": res.seed, "policy": policy_name,
                         "avg_delay_s_per_km": rec.delay,
                         "reward": rec.reward,
                         "total_queue": rec.total_queue})
    return rows


def summary_rows(scenario: Scenario, policy_name: str,
                 results: Sequence[SeedResult]) -> List[Dict[str, object]]:
    """Quartile bands per interval across seeds (delay may hold nans)."""
    rows = []
    n_int = scenario.duration // scenario.interval
    for m in range(n_int):
        t = scenario.start + m * scenario.interval
        delays = np.array([res.records[m].delay for res in results])
        rewards = np.array([res.records[m].reward for res in results])
        queues = np.array([res.records[m].total_queue for res in results])
        with np.errstate(all="ignore"):
            q1, med, q3 = np.nanpercentile(delays, [25, 50, 75]) \
                if not np.isnan(delays).all() else (float("nan"),) * 3
            mean = float(np.nanmean(delays)) \
                if not np.isnan(delays).all() else float("nan")
        rows.append({"time_s": t, "scenario": scenario.name,
                     "policy": policy_name, "seeds": len(results),
                     "delay_q1": float(q1), "delay_median": float(med),
                     "delay_q3": float(q3), "delay_mean": mean,
                     "reward_mean": float(rewards.mean()),
                     "queue_mean": float(queues.mean())})
    return rows


def scenario_summary(scenario: Scenario, policy_name: str,
                     results: Sequence[SeedResult]) -> Dict[str, object]:
    delays = np.array([r.delay for r in results])
    rewards = np.array([r.mean_reward for r in results])
    q1, med, q3 = np.nanpercentile(delays, [25, 50, 75])
    return {"scenario": scenario.name, "policy": policy_name,
            "seeds": len(results),
            "delay_mean": float(np.nanmean(delays)),
            "delay_q1": float(q1), "delay_median": float(med),
            "delay_q3": float(q3),
            "reward_mean": float(rewards.mean()),
            "per_seed": [{"seed": r.seed, "delay": r.delay,
                          "mean_reward": r.mean_reward} for r in results]}


def write_csv(path: str, fields: Sequence[str],
              rows: Sequence[Dict[str, object]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields))
        writer.writeheader()
        writer.writerows(rows)


def write_json(path: str, doc: Dict[str, object]) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
