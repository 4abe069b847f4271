"""Integer-grid geometry: box dimensions, packing-state orientations, height maps.

All container-side geometry lives on an integer grid whose cell edge is the
quantization unit, so every comparison in the core is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, FootprintRangeError, HeightOverflowError

# Packing state s = 2*d + r: grasp axis d (0=Z, 1=X, 2=Y) becomes the world
# vertical in the container; yaw r = 1 swaps the two footprint axes.
N_STATES = 6
ORIENTATIONS = (
    (0, 1, 2), (1, 0, 2),  # grasp Z
    (1, 2, 0), (2, 1, 0),  # grasp X
    (0, 2, 1), (2, 0, 1),  # grasp Y
)

# Axis identifiers for access-block edges.
AXIS_X, AXIS_Y, AXIS_Z = "x", "y", "z"
_GRASP_AXES = (AXIS_Z, AXIS_X, AXIS_Y)


def grasp_axis(s: int) -> str:
    """Local axis of the box that points up once packed under state ``s``."""
    if not 0 <= s < N_STATES:
        raise ContractViolation(f"packing state {s} outside [0, 5]")
    return _GRASP_AXES[s // 2]


@dataclass(frozen=True, order=True)
class Dims3:
    """Axis-aligned box dimensions in grid cells."""

    x: int
    y: int
    z: int

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if int(v) != v or v < 1:
                raise ContractViolation(f"dimensions must be positive integers, got {self}")

    @property
    def volume(self) -> int:
        return self.x * self.y * self.z

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.x, self.y, self.z)


def orient_dims(dims: Dims3, s: int) -> Dims3:
    """Footprint dims of a box packed under state ``s`` (grasp axis up)."""
    if not 0 <= s < N_STATES:
        raise ContractViolation(f"packing state {s} outside [0, 5]")
    t = dims.as_tuple()
    perm = ORIENTATIONS[s]
    return Dims3(t[perm[0]], t[perm[1]], t[perm[2]])


@dataclass(frozen=True)
class ContainerSpec:
    """Target container size in grid cells."""

    width: int
    depth: int
    height: int

    def __post_init__(self):
        if min(self.width, self.depth, self.height) < 1:
            raise ContractViolation(f"container dimensions must be >= 1, got {self}")

    @property
    def volume(self) -> int:
        return self.width * self.depth * self.height


class HeightMap:
    """Discretized top surface of a container, indexed ``grid[x, y]``."""

    def __init__(self, spec: ContainerSpec, grid: np.ndarray | None = None):
        self.spec = spec
        if grid is None:
            grid = np.zeros((spec.width, spec.depth), dtype=np.int64)
        else:
            grid = np.asarray(grid, dtype=np.int64)
            if grid.shape != (spec.width, spec.depth):
                raise ContractViolation(
                    f"grid shape {grid.shape} does not match spec {spec}")
            if grid.min() < 0 or grid.max() > spec.height:
                raise ContractViolation("cell heights outside [0, container height]")
        self.grid = grid

    def copy(self) -> "HeightMap":
        return HeightMap(self.spec, self.grid.copy())

    def _check_footprint(self, x0: int, y0: int, w: int, d: int):
        if w < 1 or d < 1 or x0 < 0 or y0 < 0 \
                or x0 + w > self.spec.width or y0 + d > self.spec.depth:
            raise FootprintRangeError(
                f"footprint ({x0},{y0},{w},{d}) outside {self.spec.width}x{self.spec.depth}")

    def max_under(self, x0: int, y0: int, w: int, d: int) -> int:
        """Maximum cell height over the footprint [x0, x0+w) x [y0, y0+d)."""
        self._check_footprint(x0, y0, w, d)
        return int(self.grid[x0:x0 + w, y0:y0 + d].max())

    def raise_footprint(self, x0: int, y0: int, w: int, d: int, new_top: int):
        """Set every footprint cell to ``new_top``; idempotent for fixed args."""
        self._check_footprint(x0, y0, w, d)
        if new_top > self.spec.height:
            raise HeightOverflowError(
                f"new top {new_top} exceeds container height {self.spec.height}")
        if new_top < self.max_under(x0, y0, w, d):
            raise ContractViolation("raise_footprint below existing surface")
        self.grid[x0:x0 + w, y0:y0 + d] = new_top

    @property
    def integral(self) -> int:
        return int(self.grid.sum())

    def to_json(self) -> str:
        return json.dumps({
            "width": self.spec.width,
            "depth": self.spec.depth,
            "height": self.spec.height,
            "cells": self.grid.reshape(-1).tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "HeightMap":
        obj = json.loads(text)
        spec = ContainerSpec(obj["width"], obj["depth"], obj["height"])
        grid = np.asarray(obj["cells"], dtype=np.int64).reshape(spec.width, spec.depth)
        return cls(spec, grid)
