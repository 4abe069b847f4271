"""Decision policies: greedy EMS baseline, random-valid, external bridge.

Policies work purely from the observation, so a policy hosted behind the wire
protocol reproduces the in-process trajectories exactly.
"""

from __future__ import annotations

import numpy as np

from .env import Observation
from .errors import InvalidActionError


def _drop_from_grids(heightmaps: dict, ems_entries, k: int,
                     dims: tuple[int, int, int]) -> int:
    ci, e = ems_entries[k]
    grid = heightmaps[ci]
    x, y, _ = e.corner
    return int(grid[x:x + dims[0], y:y + dims[1]].max())


class GreedyEmsPolicy:
    """Pick the valid pair that maximizes the target container's compactness
    after placement; ties break on lower rest height, then smaller EMS index,
    then smaller box-state index."""

    name = "greedy"

    def choose(self, obs: Observation) -> tuple[int, int] | None:
        valid = np.argwhere(obs.validity == 1)
        if len(valid) == 0:
            return None
        fills = {c["index"]: c["packed_volume"] for c in obs.containers}
        vols = np.array([b.dims[0] * b.dims[1] * b.dims[2] for b in obs.box_states])
        cont = np.array([fills[ci] for ci, _ in obs.ems])
        scores = vols[valid[:, 0]] + cont[valid[:, 1]]
        tied = valid[scores == scores.max()]
        best = None
        for j, k in tied:
            z = obs.drop_height(int(k), obs.box_states[j].dims)
            key = (z, int(k), int(j))
            if best is None or key < best[0]:
                best = (key, (int(j), int(k)))
        return best[1]

    def revise(self, obs: Observation, j: int, row: np.ndarray, ctx) -> int | None:
        valid = np.nonzero(row)[0]
        if len(valid) == 0:
            return None
        dims = ctx["dims"].as_tuple() if hasattr(ctx["dims"], "as_tuple") else tuple(ctx["dims"])
        ems_entries = ctx["ems"]
        heightmaps = ctx["heightmaps"]
        return int(min(valid, key=lambda k: (
            _drop_from_grids(heightmaps, ems_entries, int(k), dims), int(k))))


class RandomValidPolicy:
    """Uniform choice over valid pairs, deterministic per seed."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def choose(self, obs: Observation) -> tuple[int, int] | None:
        valid = np.argwhere(obs.validity == 1)
        if len(valid) == 0:
            return None
        j, k = valid[int(self.rng.integers(len(valid)))]
        return int(j), int(k)

    def revise(self, obs: Observation, j: int, row: np.ndarray, ctx) -> int | None:
        valid = np.nonzero(row)[0]
        if len(valid) == 0:
            return None
        return int(valid[int(self.rng.integers(len(valid)))])


class ExternalPolicy:
    """Bridge to a remote policy speaking the episode protocol.

    The engine still enforces the validity mask: an invalid reply aborts the
    episode with a diagnostic instead of being silently fixed."""

    name = "external"

    def __init__(self, client):
        self.client = client

    def choose(self, obs: Observation) -> tuple[int, int] | None:
        if not obs.validity.any():
            return None
        j, k = self.client.request_action(obs)
        if not (0 <= j < obs.validity.shape[0] and 0 <= k < obs.validity.shape[1]) \
                or obs.validity[j, k] != 1:
            raise InvalidActionError(
                f"external policy chose invalid pair ({j}, {k})")
        return j, k

    def revise(self, obs: Observation, j: int, row: np.ndarray, ctx) -> int | None:
        valid = np.nonzero(row)[0]
        if len(valid) == 0:
            return None
        k = self.client.request_revise(j, ctx, row)
        if not (0 <= k < len(row)) or row[k] != 1:
            raise InvalidActionError(f"external policy revise chose invalid EMS {k}")
        return int(k)

    def finish(self, reward: float, metrics: dict):
        self.client.send_result(reward, metrics)


def make_policy(spec: str, seed: int = 0):
    """Policy factory for CLI flags: greedy | random | external:<host:port>."""
    if spec == "greedy":
        return GreedyEmsPolicy()
    if spec == "random":
        return RandomValidPolicy(seed)
    if spec.startswith("external:"):
        from .protocol import PolicyClient
        return ExternalPolicy(PolicyClient(spec.split(":", 1)[1]))
    raise ValueError(f"unknown policy {spec!r}")
