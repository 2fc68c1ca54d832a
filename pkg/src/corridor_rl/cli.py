"""Command-line interface: train, eval, brute-force, sweep, replay.

Exit codes: 0 success, 2 configuration error (bad flags, unreadable
scenario, unresolvable policy), 3 runtime abort (non-finite loss,
simulation failure). CORRIDOR_RL_THREADS caps --workers.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import bruteforce, metrics
from .network import Scenario, ScenarioError, load_scenario
from .ppo import (TrainConfig, load_checkpoint, save_checkpoint, train,
                  training_scenarios, write_training_log)
from .scenarios import (PERIODS, apply_perturbation, bundled_scenario,
                        green_wave, interval_sweep, load_perturbations,
                        single_intersection)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SWEEP_BASE_DURATION = 10800  # 3 h: divisible by every supported interval


def parse_seeds(text: str) -> List[int]:
    """Seed list syntax: "7", "1,2,3", or an inclusive range "0-19"."""
    seeds: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            if int(hi) < int(lo):
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("seed list is empty")
    return seeds


def cap_workers(requested: int) -> int:
    cap = os.environ.get("CORRIDOR_RL_THREADS")
    workers = max(1, requested)
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


def resolve_scenario(label: str, interval_min: Optional[int] = None,
                     duration: Optional[int] = None,
                     perturb: Optional[str] = None) -> Scenario:
    """A bundled period label, a toy name, or a scenario JSON path."""
    interval = interval_min * 60 if interval_min else None
    if label in PERIODS:
        sc = bundled_scenario(label, duration=duration,
                              interval=interval or 900)
    elif label == "green-wave":
        sc = green_wave()
    elif label == "single":
        sc = single_intersection(rate_veh_h=900.0)
    else:
        sc = load_scenario(label)
        if interval or duration:
            sc = replace(sc, interval=interval or sc.interval,
                         duration=duration or sc.duration)
            if sc.duration % sc.interval != 0:
                raise ValueError(
                    f"interval {sc.interval} s does not divide the "
                    f"duration {sc.duration} s")
    if perturb:
        table = load_perturbations()
        if perturb not in table:
            raise ValueError(f"unknown perturbation {perturb!r}; "
                             f"have {sorted(table)}")
        sc = apply_perturbation(sc, table[perturb])
    return sc


def _write_eval_outputs(out: Path, scenario: Scenario, policy_name: str,
                        results) -> None:
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_csv(out / "metrics.csv", metrics.INTERVAL_FIELDS,
                      metrics.interval_rows(scenario, policy_name, results))
    metrics.write_csv(out / "summary.csv", metrics.SUMMARY_FIELDS,
                      metrics.summary_rows(scenario, policy_name, results))
    metrics.write_json(out / "summary.json",
                       metrics.scenario_summary(scenario, policy_name, results))


def _training_set(config: TrainConfig) -> List[Scenario]:
    if all(p in PERIODS for p in config.periods):
        return training_scenarios(config)
    return [resolve_scenario(p) for p in config.periods]


def cmd_train(args: argparse.Namespace) -> int:
    out = Path(args.out)
    net = None
    start_episode = 0
    if args.policy:
        net, doc = load_checkpoint(args.policy)
        saved = dict(doc["config"])
        saved["periods"] = tuple(saved["periods"])
        saved["hidden"] = tuple(saved["hidden"])
        config = replace(TrainConfig(**saved), episodes=args.episodes)
        start_episode = int(doc["episodes"])
    elif args.scenario in ("green-wave", "single"):
        # toy tasks: single short runs, action bins sized to the cycle,
        # sharper credit (rewards are near-immediate) and a hotter optimizer
        # than the corridor defaults
        config = TrainConfig(periods=(args.scenario,), episodes=args.episodes,
                             seed=args.seed[0], n_choices=60,
                             runs_per_episode=1, lr=3e-3, ent_coef=3e-3,
                             gamma=0.6, lam=0.5, minibatch=60)
    else:
        periods = tuple(args.scenario.split(",")) if args.scenario \
            else ("am", "noon", "pm")
        for p in periods:
            if p not in PERIODS:
                raise ValueError(f"unknown period {p!r} for training")
        config = TrainConfig(periods=periods, episodes=args.episodes,
                             seed=args.seed[0])
    scenarios = _training_set(config)
    if args.interval and args.interval != 15:
        scenarios = [replace(sc, interval=args.interval * 60)
                     for sc in scenarios]
        for sc in scenarios:
            if sc.duration % sc.interval != 0:
                raise ValueError("interval does not divide the duration")
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.json"
    log_path = out / "training_log.csv"

    held = {"net": net, "episode": start_episode}

    def on_episode(row):
        held["episode"] = int(row["episode"])
        if held["episode"] % 25 == 0 and held["net"] is not None:
            save_checkpoint(str(ckpt_path), held["net"], config,
                            np.random.default_rng(config.seed + held["episode"]),
                            held["episode"])

    try:
        result = train(config, scenarios=scenarios, net=net,
                       start_episode=start_episode, on_episode=on_episode)
        held["net"] = result.net
    except RuntimeError as exc:
        dump = out / "abort_state.json"
        state = {"error": str(exc), "episode": held["episode"]}
        if held["net"] is not None:
            state["params"] = held["net"].to_jsonable()
        dump.write_text(json.dumps(state))
        print(f"aborted: {exc} (state dump: {dump})", file=sys.stderr)
        return EXIT_RUNTIME
    save_checkpoint(str(ckpt_path), result.net, config, result.rng,
                    result.episodes)
    write_training_log(str(log_path), result.log)
    if result.log:
        print(f"trained {result.episodes} episodes; checkpoint {ckpt_path}; "
              f"last mean_reward {result.log[-1]['mean_reward']:.4f}")
    else:
        print(f"nothing to train: checkpoint already at {result.episodes} "
              f"episodes (target {config.episodes})")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    scenario = resolve_scenario(args.scenario, args.interval,
                                args.duration, args.perturb)
    seeds = args.seed
    workers = cap_workers(args.workers)
    metrics.resolve_policy(args.policy, scenario)  # fail fast
    results = metrics.evaluate_policy(scenario, seeds, args.policy, workers)
    out = Path(args.out)
    _write_eval_outputs(out, scenario, args.policy, results)
    summary = metrics.scenario_summary(scenario, args.policy, results)
    print(f"{scenario.name} policy={args.policy} seeds={len(seeds)} "
          f"delay={summary['delay_mean']:.2f} s/km "
          f"reward={summary['reward_mean']:.4f}")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    args.policy = f"replay:{args.name}"
    return cmd_eval(args)


def cmd_brute_force(args: argparse.Namespace) -> int:
    scenario = resolve_scenario(args.scenario, args.interval, args.duration)
    pinned = {}
    for spec in args.pin or []:
        idx, _, val = spec.partition("=")
        pinned[int(idx)] = int(val)
    best, score, surface = bruteforce.search(
        scenario, args.seed, step=args.step, max_points=args.max_points,
        pinned=pinned or None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = len(scenario.network.targets)
    fields = [f"offset_{i}" for i in range(n)] + ["mean_reward"]
    rows = [{**{f"offset_{i}": o[i] for i in range(n)}, "mean_reward": r}
            for o, r in surface]
    metrics.write_csv(out / "surface.csv", fields, rows)
    metrics.write_json(out / "best.json",
                       {"offsets": list(best), "mean_reward": score,
                        "step": args.step, "seeds": list(args.seed),
                        "points": len(surface)})
    print(f"argmax offsets {best} mean_reward {score:.4f} "
          f"({len(surface)} grid points)")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    label = args.scenario or "noon"
    duration = args.duration or SWEEP_BASE_DURATION
    base = resolve_scenario(label, None, duration)
    minutes = [int(m) for m in args.intervals.split(",")]
    variants = interval_sweep(base, minutes)
    seeds = args.seed
    workers = cap_workers(args.workers)
    rows = []
    for mins, variant in zip(minutes, variants):
        base_results = metrics.evaluate_policy(variant, seeds, "baseline",
                                               workers)
        source = args.policy.replace("{interval}", str(mins))
        if source == "baseline":
            pol_results = base_results
        else:
            metrics.resolve_policy(source, variant)  # missing file fails here
            pol_results = metrics.evaluate_policy(variant, seeds, source,
                                                  workers)
        b = float(np.nanmean([r.delay for r in base_results]))
        p = float(np.nanmean([r.delay for r in pol_results]))
        rows.append({"interval_min": mins, "scenario": variant.name,
                     "baseline_delay_s_per_km": b,
                     "policy_delay_s_per_km": p,
                     "pct_difference": metrics.percent_difference(b, p),
                     "seeds": len(seeds)})
        print(f"{mins:>2} min: baseline {b:.2f} policy {p:.2f} "
              f"diff {rows[-1]['pct_difference']:+.2f}%")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_csv(out / "sweep.csv", metrics.SWEEP_FIELDS, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corridor-rl",
        description="Arterial signal-offset coordination: learned control, "
                    "fixed plans, and search oracles on a queueing simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds_default):
        p.add_argument("--scenario", default=None,
                       help="bundled period (am|noon|pm), toy "
                            "(green-wave|single), or scenario JSON path")
        p.add_argument("--seed", type=parse_seeds, default=parse_seeds(seeds_default),
                       metavar="LIST|RANGE", help="e.g. 7 or 1,2,3 or 0-19")
        p.add_argument("--interval", type=int, default=None, metavar="MIN",
                       help="action/aggregation interval in minutes")
        p.add_argument("--duration", type=int, default=None, metavar="S",
                       help="scenario duration override in seconds")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default="runs", metavar="DIR")

    p_train = sub.add_parser("train", help="optimize a policy, write "
                                           "checkpoint plus training log")
    common(p_train, "0")
    p_train.add_argument("--episodes", type=int, default=800)
    p_train.add_argument("--policy", default=None, metavar="CHECKPOINT",
                         help="resume from this checkpoint")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="run seeds under a policy, emit "
                                         "interval metrics and summaries")
    common(p_eval, "0-69")
    p_eval.add_argument("--policy", default="baseline",
                        help="checkpoint path, 'baseline', or 'replay:NAME'")
    p_eval.add_argument("--perturb", default=None,
                        help="bundled perturbation name to apply")
    p_eval.set_defaults(fn=cmd_eval)

    p_replay = sub.add_parser("replay", help="evaluate a bundled offset "
                                             "table (deeprl|synchro)")
    p_replay.add_argument("name", choices=("deeprl", "synchro"))
    common(p_replay, "0-69")
    p_replay.add_argument("--perturb", default=None)
    p_replay.set_defaults(fn=cmd_replay)

    p_bf = sub.add_parser("brute-force", help="enumerate an offset grid, "
                                              "report argmax and surface")
    common(p_bf, "0,1,2")
    p_bf.add_argument("--step", type=int, default=5, metavar="S")
    p_bf.add_argument("--max-points", type=int, default=20000)
    p_bf.add_argument("--pin", action="append", metavar="IDX=OFFSET",
                      help="fix one target's offset (repeatable)")
    p_bf.set_defaults(fn=cmd_brute_force)

    p_sweep = sub.add_parser("sweep", help="compare policy vs baseline "
                                           "delay across action intervals")
    common(p_sweep, "0-9")
    p_sweep.add_argument("--intervals", default="5,10,15,30,45",
                         metavar="MIN,MIN,...")
    p_sweep.add_argument("--policy", default="baseline",
                         help="checkpoint path ({interval} substituted), "
                              "'baseline', or 'replay:NAME'")
    p_sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags already
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ScenarioError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
