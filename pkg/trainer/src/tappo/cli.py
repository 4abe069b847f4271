"""Command-line entry points: train | eval."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .client import spawn_engine
from .network import NetConfig
from .ppo import TrainConfig, desk_config, evaluate, load_policy, train


def _engine(args):
    """Returns (proc or None, addr)."""
    if args.spawn:
        return spawn_engine()
    if args.addr is None:
        raise SystemExit("either --addr or --spawn is required")
    return None, args.addr


def cmd_train(args) -> int:
    proc, addr = _engine(args)
    try:
        episode_config = (json.loads(args.episode_config)
                          if args.episode_config else None)
        cfg = TrainConfig(addr=addr, iters=args.iters,
                          episodes_per_iter=args.episodes_per_iter,
                          lr=args.lr, seed=args.seed, out_dir=args.out,
                          net=NetConfig(d_model=args.d_model),
                          episode_config=episode_config)
        rows = train(cfg)
        if rows:
            print(f"trained {len(rows)} iterations, "
                  f"final mean reward {rows[-1]['mean_reward']:.4f}")
    finally:
        if proc is not None:
            proc.terminate()
    return 0


def cmd_eval(args) -> int:
    proc, addr = _engine(args)
    try:
        net = load_policy(args.checkpoint)
        base = (json.loads(args.episode_config) if args.episode_config
                else desk_config(0, dense_reward=False))
        rows = evaluate(addr, net, base, args.episodes, seed0=args.seed,
                        out_csv=args.out)
        print(f"episodes {len(rows)} mean C "
              f"{float(np.mean([r['C'] for r in rows])):.4f}")
    finally:
        if proc is not None:
            proc.terminate()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tappo")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run PPO against an engine endpoint")
    p.add_argument("--addr", default=None, help="host:port of a serving engine")
    p.add_argument("--spawn", action="store_true",
                   help="launch an engine server subprocess")
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--episodes-per-iter", type=int, default=8)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/ppo")
    p.add_argument("--episode-config", default=None,
                   help="episode config overrides as a JSON object")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--addr", default=None)
    p.add_argument("--spawn", action="store_true")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="episodes.csv path")
    p.add_argument("--episode-config", default=None)
    p.set_defaults(func=cmd_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
