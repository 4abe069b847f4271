"""PPO training loop over the engine's episode protocol.

Rollouts sample actions from the policy's probability map; updates use the
clipped surrogate with a value baseline, an entropy bonus, and an auxiliary
binary cross-entropy that pushes the feasibility head toward the validity
mask. Checkpoints and a CSV learning curve are written every iteration so an
aborted run (including an engine disconnect) can resume.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .client import EngineClient
from .features import Features, featurize
from .network import NetConfig, PolicyNetwork

CSV_HEADER = "seed,source,mode,C,N_t,dNt,steps,unstable_events"


def desk_config(seed: int, dense_reward: bool = True) -> dict:
    """Small-container episode used for commodity-hardware training."""
    return {"source": "rand", "mode": "single", "n_boxes": 10,
            "container": [10, 10, 10], "dist": [0.2, 0.5],
            "dense_reward": dense_reward, "seed": int(seed)}


@dataclass
class TrainConfig:
    addr: str = "127.0.0.1:9000"
    iters: int = 50
    episodes_per_iter: int = 8
    lr: float = 3e-4
    gamma: float = 1.0
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    feas_coef: float = 0.1
    max_grad_norm: float = 0.5
    seed: int = 0
    out_dir: str = "runs/ppo"
    net: NetConfig = field(default_factory=NetConfig)
    episode_config: dict | None = None  # defaults to desk_config per episode

    def make_episode(self, seed: int) -> dict:
        if self.episode_config is None:
            return desk_config(seed)
        cfg = dict(self.episode_config)
        cfg["seed"] = int(seed)
        return cfg


@dataclass
class Trajectory:
    features: list[Features]
    actions: list[tuple[int, int]]
    logps: list[float]
    values: list[float]
    rewards: list[float]
    metrics: dict

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


def choose_action(net: PolicyNetwork, feats: Features, sample: bool,
                  generator: torch.Generator | None = None):
    probs, _, _, value = net(feats)
    flat = probs.reshape(-1)
    if sample:
        idx = int(torch.multinomial(flat, 1, generator=generator))
    else:
        idx = int(torch.argmax(flat))
    j, k = divmod(idx, feats.m)
    logp = float(torch.log(flat[idx]))
    return (j, k), logp, float(value)


def collect_episode(client: EngineClient, net: PolicyNetwork, config: dict,
                    sample: bool = True,
                    generator: torch.Generator | None = None) -> Trajectory:
    obs = client.reset(config)
    traj = Trajectory([], [], [], [], [], {})
    with torch.no_grad():
        while obs is not None:
            feats = featurize(obs)
            (j, k), logp, value = choose_action(net, feats, sample, generator)
            result, obs = client.step(j, k)
            traj.features.append(feats)
            traj.actions.append((j, k))
            traj.logps.append(logp)
            traj.values.append(value)
            traj.rewards.append(float(result["reward"]))
            if result["done"]:
                traj.metrics = result["metrics"]
    return traj


def gae_advantages(rewards: list[float], values: list[float], gamma: float,
                   lam: float) -> tuple[np.ndarray, np.ndarray]:
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    returns = adv + np.asarray(values)
    return adv, returns


def ppo_update(net: PolicyNetwork, optimizer, trajectories: list[Trajectory],
               cfg: TrainConfig) -> dict:
    steps = []
    for traj in trajectories:
        adv, ret = gae_advantages(traj.rewards, traj.values, cfg.gamma,
                                  cfg.gae_lambda)
        for t, feats in enumerate(traj.features):
            steps.append((feats, traj.actions[t], traj.logps[t],
                          float(adv[t]), float(ret[t])))
    adv_all = np.array([s[3] for s in steps])
    mean, std = adv_all.mean(), adv_all.std() + 1e-8

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "feas_loss": 0.0, "grad_norm": 0.0}
    count = 0
    for _ in range(cfg.epochs):
        optimizer.zero_grad()
        total = torch.zeros(())
        entropy_sum = torch.zeros(())
        for feats, (j, k), logp_old, adv, ret in steps:
            probs, feas, _, value = net(feats)
            logp = torch.log(probs[j, k])
            ratio = torch.exp(logp - logp_old)
            a = (adv - mean) / std
            surrogate = torch.minimum(
                ratio * a, torch.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip) * a)
            valid = probs[feats.mask]
            entropy = -(valid * torch.log(valid + 1e-12)).sum()
            value_loss = (value - ret) ** 2
            feas_loss = nn.functional.binary_cross_entropy(
                feas, feats.mask.to(feas.dtype))
            loss = (-surrogate + cfg.value_coef * value_loss
                    - cfg.entropy_coef * entropy + cfg.feas_coef * feas_loss)
            total = total + loss
            entropy_sum = entropy_sum + entropy
            stats["policy_loss"] += float(-surrogate.detach())
            stats["value_loss"] += float(value_loss.detach())
            stats["feas_loss"] += float(feas_loss.detach())
            count += 1
        (total / len(steps)).backward()
        norm = nn.utils.clip_grad_norm_(net.parameters(), cfg.max_grad_norm)
        stats["grad_norm"] += float(norm)
        optimizer.step()
        stats["entropy"] += float(entropy_sum.detach()) / len(steps)
    for key in ("policy_loss", "value_loss", "feas_loss"):
        stats[key] /= count
    stats["entropy"] /= cfg.epochs
    stats["grad_norm"] /= cfg.epochs
    return stats


def save_checkpoint(path: Path, net: PolicyNetwork, optimizer, iteration: int,
                    cfg: TrainConfig):
    torch.save({"model": net.state_dict(),
                "optimizer": optimizer.state_dict(),
                "iteration": iteration,
                "net_config": dataclasses.asdict(cfg.net)}, path)


def load_policy(path) -> PolicyNetwork:
    state = torch.load(path, map_location="cpu", weights_only=False)
    net = PolicyNetwork(NetConfig(**state["net_config"]))
    net.load_state_dict(state["model"])
    net.eval()
    return net


def train(cfg: TrainConfig, net: PolicyNetwork | None = None) -> list[dict]:
    """Run PPO; returns the learning-curve rows that were also written to CSV.

    On an engine disconnect the current checkpoint is left on disk and the
    error propagates after a clean save."""
    torch.manual_seed(cfg.seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = net if net is not None else PolicyNetwork(cfg.net)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    generator = torch.Generator().manual_seed(cfg.seed)

    ckpt = out / "checkpoint.pt"
    start_iter = 0
    if ckpt.exists():
        state = torch.load(ckpt, map_location="cpu", weights_only=False)
        net.load_state_dict(state["model"])
        optimizer.load_state_dict(state["optimizer"])
        start_iter = state["iteration"] + 1

    curve_path = out / "curve.csv"
    rows: list[dict] = []
    client = EngineClient(cfg.addr)
    episode_seed = cfg.seed * 1_000_000 + start_iter * cfg.episodes_per_iter
    try:
        for iteration in range(start_iter, cfg.iters):
            trajectories = []
            try:
                for _ in range(cfg.episodes_per_iter):
                    config = cfg.make_episode(episode_seed)
                    episode_seed += 1
                    trajectories.append(
                        collect_episode(client, net, config, generator=generator))
            except (ConnectionError, OSError):
                save_checkpoint(ckpt, net, optimizer, iteration - 1, cfg)
                raise
            stats = ppo_update(net, optimizer, trajectories, cfg)
            row = {"iteration": iteration,
                   "mean_reward": float(np.mean([t.total_reward
                                                 for t in trajectories])),
                   "mean_C": float(np.mean([t.metrics["C"]
                                            for t in trajectories])),
                   **stats}
            rows.append(row)
            write_header = not curve_path.exists()
            with curve_path.open("a", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(row))
                if write_header:
                    writer.writeheader()
                writer.writerow(row)
            save_checkpoint(ckpt, net, optimizer, iteration, cfg)
    finally:
        client.close()
    return rows


def evaluate(addr: str, net: PolicyNetwork, base_config: dict, episodes: int,
             seed0: int = 0, out_csv=None) -> list[dict]:
    """Greedy (argmax) rollouts; returns one metrics row per episode and
    optionally writes them in the engine's episodes.csv schema."""
    client = EngineClient(addr)
    rows = []
    try:
        for i in range(episodes):
            config = dict(base_config)
            config["seed"] = seed0 + i
            traj = collect_episode(client, net, config, sample=False)
            m = traj.metrics
            rows.append({"seed": seed0 + i,
                         "source": config.get("source", "rand"),
                         "mode": config.get("mode", "single"),
                         "C": m["C"], "N_t": m["N_t"], "dNt": m["dN_t"],
                         "steps": len(traj.actions),
                         "unstable_events": m["unstable_events"]})
    finally:
        client.close()
    if out_csv is not None:
        path = Path(out_csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_HEADER.split(","))
            writer.writeheader()
            writer.writerows(rows)
    return rows
