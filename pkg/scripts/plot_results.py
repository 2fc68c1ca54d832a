#!/usr/bin/env python3
"""Plot training logs, interval summaries, and sweep tables.

Reads the CSV files the CLI writes and renders one figure per input:

  python3 scripts/plot_results.py --training runs/corridor/training_log.csv
  python3 scripts/plot_results.py --summary results/noon/summary.csv \
      --summary results/surge/summary.csv
  python3 scripts/plot_results.py --sweep results/sweep/sweep.csv

Without --out the figure pops up interactively; with --out it is saved.
Multiple --summary inputs overlay their median-delay bands, which is the
usual way to compare a policy against the baseline run by run.
"""

import argparse
import csv
import sys
from pathlib import Path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_training(ax, path):
    rows = read_rows(path)
    episodes = [int(r["episode"]) for r in rows]
    rewards = [float(r["mean_reward"]) for r in rows]
    ax.plot(episodes, rewards, lw=0.8, alpha=0.4, color="tab:blue")
    k = max(1, len(rewards) // 40)
    smooth = [sum(rewards[max(0, i - k):i + 1]) / len(rewards[max(0, i - k):i + 1])
              for i in range(len(rewards))]
    ax.plot(episodes, smooth, lw=1.8, color="tab:blue",
            label=Path(path).parent.name)
    ax.set_xlabel("episode")
    ax.set_ylabel("mean reward per action interval")
    ax.legend()


def plot_summary(ax, paths):
    for path in paths:
        rows = read_rows(path)
        hours = [int(r["time_s"]) / 3600.0 for r in rows]
        med = [float(r["delay_median"]) for r in rows]
        q1 = [float(r["delay_q1"]) for r in rows]
        q3 = [float(r["delay_q3"]) for r in rows]
        label = f"{rows[0]['scenario']} / {rows[0]['policy']}" if rows else path
        line, = ax.plot(hours, med, lw=1.6, label=label)
        ax.fill_between(hours, q1, q3, alpha=0.2, color=line.get_color())
    ax.set_xlabel("time of day (h)")
    ax.set_ylabel("average delay (s/km), median and quartiles")
    ax.legend()


def plot_sweep(ax, path):
    rows = read_rows(path)
    mins = [str(r["interval_min"]) for r in rows]
    pct = [float(r["pct_difference"]) for r in rows]
    colors = ["tab:green" if v > 0 else "tab:red" for v in pct]
    ax.bar(mins, pct, color=colors)
    ax.axhline(0.0, color="black", lw=0.8)
    ax.set_xlabel("action interval (min)")
    ax.set_ylabel("% delay difference (positive = policy better)")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--training", help="training_log.csv path")
    parser.add_argument("--summary", action="append", default=[],
                        help="summary.csv path (repeatable, overlaid)")
    parser.add_argument("--sweep", help="sweep.csv path")
    parser.add_argument("--out", help="save the figure instead of showing it")
    args = parser.parse_args(argv)
    chosen = [bool(args.training), bool(args.summary), bool(args.sweep)]
    if sum(chosen) != 1:
        parser.error("pass exactly one of --training, --summary, --sweep")

    import matplotlib
    if args.out:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.5, 4.5))
    if args.training:
        plot_training(ax, args.training)
    elif args.summary:
        plot_summary(ax, args.summary)
    else:
        plot_sweep(ax, args.sweep)
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
        print(f"wrote {args.out}")
    else:
        plt.show()
    return 0


if __name__ == "__main__":
    sys.exit(main())
