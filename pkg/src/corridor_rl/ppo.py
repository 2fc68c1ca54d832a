"""Clipped-surrogate policy optimization over interval-level rollouts.

A rollout step is one control interval: observe the closed window, pick
offsets, simulate the next window, collect the queue reward. Episodes
bundle a few independent runs so one update sees more than one demand
draw. Advantages come from generalized advantage estimation computed per
run before batching; runs end at the scenario horizon, so tails bootstrap
with value zero.
"""

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .env import CorridorEnv
from .nets import Adam, Array, PolicyValueNet, entropy_grad
from .scenarios import PERIODS, bundled_scenario
from .simulate import observation_size

CHECKPOINT_VERSION = 1


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    total = 0.0
    for r in reversed(rewards):
        total = r + gamma * total
    return total


def gae(rewards: Sequence[float], values: Sequence[float], gamma: float,
        lam: float) -> Tuple[Array, Array]:
    """Advantages and value targets for one run.

    `values` carries one more entry than `rewards`; the extra tail value
    bootstraps truncated runs (zero when the run ended at the horizon).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ValueError("need one value per state plus a tail value")
    deltas = rewards + gamma * values[1:] - values[:-1]
    adv = np.empty_like(deltas)
    acc = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv, adv + values[:-1]


def clipped_objective(ratio, adv, eps: float):
    """Pessimistic surrogate: min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def ppo_loss_and_grads(net: PolicyValueNet, batch: Dict[str, Array],
                       clip_eps: float = 0.2, vf_coef: float = 0.5,
                       ent_coef: float = 0.01):
    """Loss, parameter gradients (matching net.params() order), and stats."""
    obs = batch["obs"]
    actions = batch["actions"]
    logp_old = batch["logp"]
    adv = batch["adv"]
    ret = batch["ret"]
    n = obs.shape[0]

    ev = net.evaluate(obs, actions)
    ratio = np.exp(ev["logp"] - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    policy_loss = -float(np.minimum(surr1, surr2).mean())
    v_err = ev["values"] - ret
    value_loss = float((v_err ** 2).mean())
    ent_mean = float(ev["entropy"].mean())
    loss = policy_loss + vf_coef * value_loss - ent_coef * ent_mean

    # d loss / d logp: zero where the clipped branch is strictly smaller
    through = surr1 <= surr2
    dlogp = np.where(through, ratio * adv, 0.0) * (-1.0 / n)
    dz = dlogp[:, None, None] * (-ev["probs"])
    b_idx = np.arange(n)[:, None]
    h_idx = np.arange(net.n_heads)[None, :]
    dz[b_idx, h_idx, actions] += dlogp[:, None]
    dz += (-ent_coef / n) * entropy_grad(ev["logp_all"])
    dw_pi, db_pi = net.pi.backward(ev["pi_cache"], dz.reshape(n, -1))
    dv = (vf_coef * 2.0 / n) * v_err
    dw_v, db_v = net.vf.backward(ev["vf_cache"], dv[:, None])

    grads = dw_pi + db_pi + dw_v + db_v
    stats = {"loss": loss, "policy_loss": policy_loss,
             "value_loss": value_loss, "entropy": ent_mean,
             "clip_fraction": float((np.abs(ratio - 1.0) > clip_eps).mean())}
    return loss, grads, stats


@dataclass
class Segment:
    """One run's worth of transitions plus the tail bootstrap value."""

    obs: Array
    actions: Array
    rewards: Array
    logp: Array
    values: Array
    tail_value: float = 0.0

    def __len__(self) -> int:
        return self.obs.shape[0]


def collect_run(net: PolicyValueNet, scenario, seed: int,
                rng: np.random.Generator) -> Segment:
    env = CorridorEnv(scenario, seed=seed)
    obs = env.reset()
    obs_l, act_l, rew_l, logp_l, val_l = [], [], [], [], []
    done = False
    while not done:
        actions, logp, value = net.act(obs, rng)
        nxt, r, done, _ = env.step(actions)
        obs_l.append(obs)
        act_l.append(actions)
        rew_l.append(r)
        logp_l.append(logp)
        val_l.append(value)
        obs = nxt
    return Segment(np.asarray(obs_l), np.asarray(act_l, dtype=np.int64),
                   np.asarray(rew_l), np.asarray(logp_l), np.asarray(val_l))


@dataclass
class TrainConfig:
    periods: Tuple[str, ...] = ("am", "noon", "pm")
    episodes: int = 800
    runs_per_episode: int = 3
    run_duration: int = 14400
    batch_steps: int = 300
    minibatch: int = 15
    epochs: int = 10
    gamma: float = 0.99
    lam: float = 0.97
    clip_eps: float = 0.2
    lr: float = 5e-4
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    hidden: Tuple[int, ...] = (64, 64, 64)
    n_choices: int = 120
    seed: int = 0


def training_scenarios(config: TrainConfig) -> List:
    """One scenario per period, truncated to a common run length."""
    out = []
    for period in config.periods:
        full = PERIODS[period][1]
        out.append(bundled_scenario(period, duration=min(config.run_duration, full)))
    return out


@dataclass
class TrainResult:
    net: PolicyValueNet
    log: List[Dict[str, float]]
    rng: np.random.Generator
    episodes: int


def train(config: TrainConfig, scenarios: Optional[Sequence] = None,
          net: Optional[PolicyValueNet] = None, start_episode: int = 0,
          on_episode: Optional[Callable[[Dict[str, float]], None]] = None) -> TrainResult:
    """Run updates until the episode budget is spent.

    `scenarios` overrides the bundled period set (used by the toy tasks);
    each run draws one uniformly. The log gets one row per episode with
    the stats of the update its transitions fed. Resuming passes the
    saved net plus `start_episode`; the budget stays `config.episodes`
    total, so the log continues where it stopped.
    """
    if scenarios is None:
        scenarios = training_scenarios(config)
    scenarios = list(scenarios)
    obs_dim = observation_size(scenarios[0].network)
    n_heads = len(scenarios[0].network.targets)
    if net is None:
        net = PolicyValueNet(obs_dim, n_heads, config.n_choices,
                             config.hidden, seed=config.seed)
    opt = Adam(net.params(), lr=config.lr)
    rng = np.random.default_rng(config.seed + start_episode)
    log: List[Dict[str, float]] = []
    episode = start_episode

    while episode < config.episodes:
        segments: List[Segment] = []
        ep_rewards: List[float] = []
        steps = 0
        while steps < config.batch_steps and episode < config.episodes:
            ep_steps: List[Segment] = []
            for _ in range(config.runs_per_episode):
                sc = scenarios[rng.integers(len(scenarios))]
                seg = collect_run(net, sc, int(rng.integers(2 ** 31 - 1)), rng)
                ep_steps.append(seg)
            segments.extend(ep_steps)
            ep_rewards.append(float(np.mean(np.concatenate(
                [s.rewards for s in ep_steps]))))
            steps += sum(len(s) for s in ep_steps)
            episode += 1

        # advantages per run, then flatten and truncate to the batch size
        adv_l, ret_l = [], []
        for seg in segments:
            a, r = gae(seg.rewards, np.append(seg.values, seg.tail_value),
                       config.gamma, config.lam)
            adv_l.append(a)
            ret_l.append(r)
        batch = {"obs": np.concatenate([s.obs for s in segments]),
                 "actions": np.concatenate([s.actions for s in segments]),
                 "logp": np.concatenate([s.logp for s in segments]),
                 "adv": np.concatenate(adv_l),
                 "ret": np.concatenate(ret_l)}
        keep = min(config.batch_steps, len(batch["obs"]))
        batch = {k: v[:keep] for k, v in batch.items()}
        mu, sd = batch["adv"].mean(), batch["adv"].std()
        batch["adv"] = (batch["adv"] - mu) / (sd + 1e-8)

        stats: Dict[str, float] = {}
        for _ in range(config.epochs):
            order = rng.permutation(keep)
            for lo in range(0, keep, config.minibatch):
                idx = order[lo:lo + config.minibatch]
                mb = {k: v[idx] for k, v in batch.items()}
                loss, grads, stats = ppo_loss_and_grads(
                    net, mb, config.clip_eps, config.vf_coef, config.ent_coef)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at episode {episode}: {stats}")
                opt.step(net.params(), grads)

        first_ep = episode - len(ep_rewards)
        for i, mr in enumerate(ep_rewards):
            row = {"episode": first_ep + i + 1, "mean_reward": mr,
                   "loss": stats["loss"], "policy_loss": stats["policy_loss"],
                   "value_loss": stats["value_loss"],
                   "entropy": stats["entropy"]}
            log.append(row)
            if on_episode is not None:
                on_episode(row)

    return TrainResult(net=net, log=log, rng=rng, episodes=episode)


# ---------------------------------------------------------- checkpointing
def save_checkpoint(path: str, net: PolicyValueNet, config: TrainConfig,
                    rng: np.random.Generator, episodes: int) -> None:
    doc = {"version": CHECKPOINT_VERSION,
           "config": {**config.__dict__,
                      "periods": list(config.periods),
                      "hidden": list(config.hidden)},
           "params": net.to_jsonable(),
           "rng_state": rng.bit_generator.state,
           "episodes": episodes}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path: str) -> Tuple[PolicyValueNet, Dict[str, object]]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    return PolicyValueNet.from_jsonable(doc["params"]), doc


def greedy_policy(net: PolicyValueNet) -> Callable:
    """Deterministic per-head argmax policy for evaluation."""
    def policy(t: int, obs) -> Tuple[int, ...]:
        return net.greedy(np.asarray(obs, dtype=float))
    return policy


def write_training_log(path: str, rows: Sequence[Dict[str, float]]) -> None:
    import csv

    fields = ["episode", "mean_reward", "loss", "policy_loss",
              "value_loss", "entropy"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
