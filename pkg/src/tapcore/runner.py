"""Batch episode execution and the benchmark table runner."""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import replace

import numpy as np

from .env import EpisodeConfig, EpisodeRecord, run_episode
from .policies import make_policy

log = logging.getLogger("tapcore")
log.setLevel(os.environ.get("TAPCORE_LOG", "WARNING").upper())

CSV_COLUMNS = ["seed", "source", "mode", "C", "N_t", "dNt", "steps", "unstable_events"]


def run_batch(base_config: EpisodeConfig, policy_spec: str, episodes: int,
              seed0: int | None = None) -> list[EpisodeRecord]:
    """Run ``episodes`` episodes with per-episode seeds seed0, seed0+1, ..."""
    if seed0 is None:
        seed0 = base_config.seed
    records = []
    for i in range(episodes):
        config = replace(base_config, seed=seed0 + i)
        policy = make_policy(policy_spec, seed=seed0 + i)
        records.append(run_episode(config, policy))
        log.debug("episode %d: C=%.3f", i, records[-1].metrics["C"])
    return records


def records_to_rows(records: list[EpisodeRecord]) -> list[dict]:
    rows = []
    for r in records:
        rows.append({
            "seed": r.config["seed"],
            "source": r.config["source"],
            "mode": r.config["mode"],
            "C": r.metrics["C"],
            "N_t": r.metrics["N_t"],
            "dNt": r.metrics["dN_t"],
            "steps": len(r.steps),
            "unstable_events": r.metrics["unstable_events"],
        })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def summarize(records: list[EpisodeRecord]) -> dict:
    return {
        "episodes": len(records),
        "C": float(np.mean([r.metrics["C"] for r in records])),
        "N_t": float(np.mean([r.metrics["N_t"] for r in records])),
        "dNt": float(np.mean([r.metrics["dN_t"] for r in records])),
        "unstable_events": float(np.mean([r.metrics["unstable_events"]
                                          for r in records])),
    }


def run_table(sources: list[str], modes: list[str], policy_spec: str,
              episodes: int, base_config: EpisodeConfig | None = None,
              seed0: int = 0) -> list[dict]:
    """One summary row per (source, mode) cell."""
    if base_config is None:
        base_config = EpisodeConfig()
    cells = []
    for source in sources:
        for mode in modes:
            n_boxes = 10 if source == "ppsg" else base_config.n_boxes
            cfg = replace(base_config, source=source, mode=mode, n_boxes=n_boxes)
            records = run_batch(cfg, policy_spec, episodes, seed0)
            cell = {"source": source, "mode": mode, "policy": policy_spec,
                    **summarize(records)}
            cell["records"] = records
            cells.append(cell)
            log.info("cell %s/%s: C=%.3f N_t=%.2f dNt=%.2f",
                     source, mode, cell["C"], cell["N_t"], cell["dNt"])
    return cells


def format_table(cells: list[dict]) -> str:
    header = f"{'source':<8}{'mode':<12}{'policy':<10}{'C':>8}{'N_t':>8}{'dNt':>8}"
    lines = [header, "-" * len(header)]
    for c in cells:
        lines.append(f"{c['source']:<8}{c['mode']:<12}{c['policy']:<10}"
                     f"{c['C']:>8.3f}{c['N_t']:>8.2f}{c['dNt']:>8.2f}")
    return "\n".join(lines)
