"""Command-line entry points: gen | run | table | serve | export | replay."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import benchmark
from .env import EpisodeConfig, EpisodeRecord, replay_record
from .errors import ProtocolError, ReplayError
from .geometry import ContainerSpec
from .runner import (format_table, records_to_rows, rows_to_csv, run_batch,
                     run_table, summarize)

EXIT_USAGE = 2
EXIT_ENDPOINT = 3
EXIT_RECORD = 4

DEFAULT_SEED = 12345


def _parse_triple(text: str) -> tuple[int, int, int]:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected W,D,H")
    return tuple(parts)


def _parse_pair(text: str) -> tuple[float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LO,HI")
    return tuple(parts)


def _add_episode_flags(p: argparse.ArgumentParser):
    p.add_argument("--source", default="rand", choices=["fix", "rand", "ppsg"])
    p.add_argument("--mode", default="single",
                   choices=["single", "multi_all", "multi_last"])
    p.add_argument("--ns", type=int, default=20, help="number of source boxes")
    p.add_argument("--nf", type=int, default=5, help="FIX catalogue size")
    p.add_argument("--u", type=int, default=1, help="quantization unit")
    p.add_argument("--dist", type=_parse_pair, default=benchmark.DEFAULT_DIST,
                   help="uniform dims bounds as container-edge fractions")
    p.add_argument("--container", type=_parse_triple, default=(100, 100, 100))
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--p-occl", type=float, default=0.0)
    p.add_argument("--conveyor", type=int, default=None)
    p.add_argument("--no-constrained-ems", action="store_true")


def _config_from_args(args, boxes=None) -> EpisodeConfig:
    return EpisodeConfig(
        source=args.source, mode=args.mode, n_boxes=args.ns, n_fix=args.nf,
        dist=args.dist, container=args.container, u=args.u,
        p_occl=args.p_occl, conveyor=args.conveyor,
        constrained_ems=not args.no_constrained_ems, seed=args.seed,
        boxes=boxes)


def cmd_gen(args) -> int:
    spec = ContainerSpec(*args.container)
    data = benchmark.generate_dataset(
        args.source, args.ns, args.seed, spec, n_fix=args.nf,
        dist=args.dist, u=args.u)
    text = benchmark.dataset_to_json(
        data["source"], data["seed"], spec, data["boxes"], data["solution"],
        u=args.u)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def cmd_run(args) -> int:
    boxes = None
    if args.dataset:
        ds = benchmark.dataset_from_json(Path(args.dataset).read_text())
        boxes = [list(b.as_tuple()) for b in ds["boxes"]]
        args.source = ds["source"]
        args.ns = len(boxes)
        args.container = (ds["container"].width, ds["container"].depth,
                          ds["container"].height)
    config = _config_from_args(args, boxes=boxes)
    try:
        records = run_batch(config, args.policy, args.episodes, args.seed)
    except (ProtocolError, ConnectionError, OSError) as exc:
        print(f"policy endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    summary = summarize(records)
    print(f"episodes={summary['episodes']} mean C={summary['C']:.4f} "
          f"N_t={summary['N_t']:.2f} dNt={summary['dNt']:.2f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(records):
            (out / f"episode_{i:05d}.json").write_text(r.to_json())
        (out / "episodes.csv").write_text(rows_to_csv(records_to_rows(records)))
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
        from .report import save_compactness_histogram
        save_compactness_histogram(records, out / "compactness.png",
                                   f"{config.source}/{config.mode} {args.policy}")
    return 0


def cmd_table(args) -> int:
    config = _config_from_args(args)
    try:
        cells = run_table(args.sources.split(","), args.modes.split(","),
                          args.policy, args.episodes, config, seed0=args.seed)
    except (ProtocolError, ConnectionError, OSError) as exc:
        print(f"policy endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    print(format_table(cells))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for cell in cells:
            rows.extend(records_to_rows(cell.pop("records")))
        (out / "episodes.csv").write_text(rows_to_csv(rows))
        (out / "table.txt").write_text(format_table(cells) + "\n")
        (out / "table.json").write_text(json.dumps(cells, indent=2))
        from .report import save_summary_figure
        save_summary_figure(cells, out / "table.png")
    return 0


def cmd_serve(args) -> int:
    from . import protocol
    if args.stdio:
        protocol.serve_env_stdio()
        return 0
    server = protocol.serve_env(args.host, args.port)
    print(f"serving episode protocol on {args.host}:{args.port}")
    try:
        import threading
        threading.Event().wait()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def _load_record(path: str) -> EpisodeRecord:
    return EpisodeRecord.from_json(Path(path).read_text())


def cmd_replay(args) -> int:
    try:
        metrics, _ = replay_record(_load_record(args.record))
    except ReplayError as exc:
        print(f"replay diverged: {exc}", file=sys.stderr)
        return EXIT_RECORD
    print(f"replay ok: C={metrics['C']:.4f} N_t={metrics['N_t']}")
    return 0


def cmd_export(args) -> int:
    from .export import placements_to_json, placements_to_obj
    try:
        _, env = replay_record(_load_record(args.record))
    except ReplayError as exc:
        print(f"replay diverged: {exc}", file=sys.stderr)
        return EXIT_RECORD
    session = env.session
    if args.format == "obj":
        placements = [p for c in session.containers for p in c.placements]
        text = placements_to_obj(placements)
    else:
        text = placements_to_json(session)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tapcore")
    parser.add_argument("--log", default=None, help="log level override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a benchmark dataset")
    _add_episode_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run packing episodes")
    _add_episode_flags(p)
    p.add_argument("--dataset", default=None, help="dataset JSON file")
    p.add_argument("--policy", default="greedy")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("table", help="run the benchmark table")
    _add_episode_flags(p)
    p.add_argument("--sources", default="fix,rand,ppsg")
    p.add_argument("--modes", default="single,multi_all,multi_last")
    p.add_argument("--policy", default="greedy")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("serve", help="host the episode protocol")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9000)
    p.add_argument("--stdio", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-execute a recorded episode")
    p.add_argument("--record", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("export", help="export a recorded packing")
    p.add_argument("--record", required=True)
    p.add_argument("--format", default="obj", choices=["obj", "json"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log:
        logging.getLogger("tapcore").setLevel(args.log.upper())
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
