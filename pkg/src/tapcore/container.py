"""Container state, placement with gravity and stability, sessions, metrics.

A placement drops to the highest surface under its footprint inside the chosen
EMS; the stability rule mimics "the box falls off": failing it terminates the
current container, consumes the box, and discards its volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import ems as ems_mod
from .ems import Ems
from .errors import ContractViolation, SessionError
from .geometry import ContainerSpec, HeightMap

DEFAULT_SIGMA = 0.3

CORNER_DBL = "dbl"
CORNER_FOUR = "four"


class Mode(str, Enum):
    SINGLE = "single"
    MULTI_ALL = "multi_all"
    MULTI_LAST = "multi_last"


@dataclass
class Placement:
    box_id: int
    state: int
    dims: tuple[int, int, int]
    corner: tuple[int, int, int]
    container: int
    stable: bool = True
    volume: int = 0  # counted volume; equals dims volume unless quantized

    def __post_init__(self):
        if self.volume == 0:
            self.volume = self.dims[0] * self.dims[1] * self.dims[2]


class ContainerState:
    def __init__(self, spec: ContainerSpec):
        self.spec = spec
        self.hm = HeightMap(spec)
        self.placements: list[Placement] = []
        self.packed_volume = 0
        self.terminated = False

    @property
    def compactness(self) -> float:
        return self.packed_volume / self.spec.volume


def stability_check(hm_before: HeightMap, x0: int, y0: int, w: int, d: int,
                    z_rest: int, sigma: float = DEFAULT_SIGMA) -> bool:
    """Support cells are footprint cells already at the rest height; stable iff
    their area ratio reaches sigma and the footprint centroid falls inside
    their bounding rectangle expanded by half a cell."""
    patch = hm_before.grid[x0:x0 + w, y0:y0 + d]
    support = patch == z_rest
    ratio = support.sum() / (w * d)
    if ratio < sigma:
        return False
    xs, ys = np.nonzero(support)
    cx, cy = w / 2.0, d / 2.0  # centroid in footprint-local cells
    return bool(xs.min() - 0.5 <= cx <= xs.max() + 1.5
                and ys.min() - 0.5 <= cy <= ys.max() + 1.5)


class PackingSession:
    """One packing episode's mutable container state."""

    def __init__(self, spec: ContainerSpec, mode: Mode = Mode.SINGLE,
                 sigma: float = DEFAULT_SIGMA, unstable_penalty: bool = False,
                 constrained_ems: bool = True, corner_rule: str = CORNER_DBL):
        self.spec = spec
        self.mode = Mode(mode)
        self.sigma = sigma
        self.unstable_penalty = unstable_penalty
        self.constrained_ems = constrained_ems
        self.corner_rule = corner_rule
        self.containers: list[ContainerState] = [ContainerState(spec)]
        self.unstable_events = 0

    def exposed_containers(self) -> list[int]:
        if self.mode is Mode.SINGLE:
            return [] if self.containers[0].terminated else [0]
        if self.mode is Mode.MULTI_LAST:
            last = len(self.containers) - 1
            return [] if self.containers[last].terminated else [last]
        return [i for i, c in enumerate(self.containers) if not c.terminated]

    def open_new_container(self) -> int:
        if self.mode is Mode.SINGLE:
            raise SessionError("cannot open a second container in single mode")
        self.containers.append(ContainerState(self.spec))
        return len(self.containers) - 1

    def candidate_ems(self) -> list[tuple[int, Ems]]:
        out = []
        for ci in self.exposed_containers():
            for e in ems_mod.extract_all(self.containers[ci].hm, self.constrained_ems):
                out.append((ci, e))
        return out

    def _corner_options(self, e: Ems, w: int, d: int) -> list[tuple[int, int]]:
        cx, cy, _ = e.corner
        dx, dy, _ = e.dims
        if self.corner_rule == CORNER_DBL:
            return [(cx, cy)]
        return [(cx, cy), (cx + dx - w, cy), (cx, cy + dy - d), (cx + dx - w, cy + dy - d)]

    def drop_height(self, ci: int, e: Ems, dims: tuple[int, int, int]) -> int:
        """Rest height at the DBL corner of the EMS for the oriented dims."""
        cx, cy, _ = self._corner_options(e, dims[0], dims[1])[0]
        return self.containers[ci].hm.max_under(cx, cy, dims[0], dims[1])

    def place(self, ci: int, e: Ems, dims: tuple[int, int, int], box_id: int,
              state: int, counted_volume: int | None = None) -> Placement:
        """Execute a placement; an unstable drop terminates the container."""
        c = self.containers[ci]
        if c.terminated:
            raise SessionError(f"container {ci} already terminated")
        w, d, h = dims
        if w > e.dims[0] or d > e.dims[1] or h > e.dims[2]:
            raise ContractViolation(f"dims {dims} do not fit EMS {e}")
        best = None
        for (x0, y0) in self._corner_options(e, w, d):
            z = c.hm.max_under(x0, y0, w, d)
            if best is None or z < best[0]:
                best = (z, x0, y0)
        z_rest, x0, y0 = best
        if z_rest > e.corner[2]:
            raise ContractViolation("EMS interior is not empty above its corner")
        stable = stability_check(c.hm, x0, y0, w, d, z_rest, self.sigma)
        volume = counted_volume if counted_volume is not None else w * d * h
        placement = Placement(box_id, state, dims, (x0, y0, z_rest), ci,
                              stable, volume)
        if stable:
            c.hm.raise_footprint(x0, y0, w, d, z_rest + h)
            c.packed_volume += volume
            c.placements.append(placement)
        else:
            c.placements.append(placement)
            c.terminated = True
            self.unstable_events += 1
        return placement

    @property
    def n_containers(self) -> int:
        return len(self.containers)

    def reward(self) -> float:
        r = float(np.mean([c.compactness for c in self.containers]))
        if self.unstable_penalty:
            r -= 0.1 * self.unstable_events
        return r

    def metrics(self, source_volumes: list[int]) -> dict:
        n_t = len(self.containers)
        n_star = math.ceil(sum(source_volumes) / self.spec.volume)
        return {
            "C": float(np.mean([c.compactness for c in self.containers])),
            "N_t": n_t,
            "N_t_star": n_star,
            "dN_t": n_t - n_star,
            "unstable_events": self.unstable_events,
        }


def validity_mask(oriented_dims: np.ndarray, access: np.ndarray,
                  ems_entries: list[tuple[int, Ems]]) -> np.ndarray:
    """V[j, k] = 1 iff state j fits inside EMS k and is accessible.

    ``oriented_dims``: (N, 3) int array of box-state dims; ``access``: (N,)
    bool. EMS vertical extent reaches the ceiling, so a dims fit also rules
    out height overflow after the gravity drop."""
    n = oriented_dims.shape[0]
    m = len(ems_entries)
    if n == 0 or m == 0:
        return np.zeros((n, m), dtype=np.int8)
    edims = np.array([e.dims for _, e in ems_entries], dtype=np.int64)
    fit = np.all(oriented_dims[:, None, :] <= edims[None, :, :], axis=2)
    return (fit & access[:, None]).astype(np.int8)
