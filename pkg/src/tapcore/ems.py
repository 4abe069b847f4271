"""Empty maximal space (EMS) extraction from container height maps.

The container is a 2.5D height map, so every empty space reaches the ceiling
and an EMS is fully described by its DBL corner and footprint rectangle.
``extract_all`` in original mode enumerates *every* maximal empty box: for each
height level present in the map, all rectangles that are laterally maximal in
the mask of cells at or below that level and actually rest on a cell of that
exact height. Constrained EMS are anchored at seed corners and grow only
toward +x/+y, which yields extra candidates with distinct DBL corners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import HeightMap

KIND_ORIGINAL = "original"
KIND_CONSTRAINED = "constrained"


@dataclass(frozen=True, order=True)
class Ems:
    corner: tuple[int, int, int]
    dims: tuple[int, int, int]
    kind: str = KIND_ORIGINAL

    @property
    def key(self) -> tuple:
        return (self.corner, self.dims)


@njit(cache=True)
def _maximal_rects_at_level(grid, z, out):
    """All laterally maximal all-empty rectangles of mask(grid <= z) whose
    covered max height equals z. Writes (x0, y0, w, d) rows into ``out`` and
    returns the row count."""
    w_dim, d_dim = grid.shape
    # prefix counts of cells at exactly level z, shape (w+1, d+1)
    exact = np.zeros((w_dim + 1, d_dim + 1), dtype=np.int64)
    for x in range(w_dim):
        for y in range(d_dim):
            exact[x + 1, y + 1] = (exact[x, y + 1] + exact[x + 1, y]
                                   - exact[x, y] + (1 if grid[x, y] == z else 0))

    up = np.zeros(w_dim, dtype=np.int64)          # run of empty cells toward -y
    stack_x = np.empty(w_dim + 1, dtype=np.int64)
    stack_h = np.empty(w_dim + 1, dtype=np.int64)
    count = 0
    for y in range(d_dim):
        # zeros prefix over the next row, used for the +y maximality check
        znext = np.zeros(w_dim + 1, dtype=np.int64)
        if y + 1 < d_dim:
            for x in range(w_dim):
                znext[x + 1] = znext[x] + (0 if grid[x, y + 1] <= z else 1)
        for x in range(w_dim):
            if grid[x, y] <= z:
                up[x] += 1
            else:
                up[x] = 0
        top = -1
        for x in range(w_dim + 1):
            h = up[x] if x < w_dim else 0
            start = x
            while top >= 0 and stack_h[top] >= h:
                sx = stack_x[top]
                sh = stack_h[top]
                top -= 1
                if sh > h:
                    # rectangle [sx, x) x [y - sh + 1, y + 1): maximal in
                    # -x/+x/-y; check +y and the exact-level bottom contact
                    if y == d_dim - 1 or znext[x] - znext[sx] > 0:
                        y0 = y - sh + 1
                        n_exact = (exact[x, y + 1] - exact[sx, y + 1]
                                   - exact[x, y0] + exact[sx, y0])
                        if n_exact > 0:
                            out[count, 0] = sx
                            out[count, 1] = y0
                            out[count, 2] = x - sx
                            out[count, 3] = sh
                            count += 1
                start = sx
            if h > 0 and (top < 0 or stack_h[top] < h):
                top += 1
                stack_x[top] = start
                stack_h[top] = h
    return count


@njit(cache=True)
def _anchored_best_rect(grid, sx, sy, z):
    """Largest-area empty rectangle anchored at (sx, sy) growing +x/+y only.

    Ties prefer the wider (larger x-extent) rectangle. Returns (w, d)."""
    w_dim, d_dim = grid.shape
    best_w = 0
    best_d = 0
    best_area = 0
    limit = w_dim - sx
    for d in range(1, d_dim - sy + 1):
        y = sy + d - 1
        run = 0
        for x in range(sx, sx + limit):
            if grid[x, y] <= z:
                run += 1
            else:
                break
        if run == 0:
            break
        if run < limit:
            limit = run
        area = limit * d
        if area > best_area or (area == best_area and limit > best_w):
            best_area = area
            best_w = limit
            best_d = d
    return best_w, best_d


def seed_corners(hm: HeightMap) -> list[tuple[int, int, int]]:
    """DBL corner cells of constant-height plateaus: cells whose -x and -y
    neighbours (or the container wall) sit at a different height."""
    g = hm.grid
    w, d = g.shape
    left_edge = np.ones((w, d), dtype=bool)
    left_edge[1:, :] = g[1:, :] != g[:-1, :]
    bottom_edge = np.ones((w, d), dtype=bool)
    bottom_edge[:, 1:] = g[:, 1:] != g[:, :-1]
    xs, ys = np.nonzero(left_edge & bottom_edge)
    return [(int(x), int(y), int(g[x, y])) for x, y in zip(xs.tolist(), ys.tolist())]


def extract_original(hm: HeightMap, seed: tuple[int, int, int]) -> Ems | None:
    """Largest-area maximal empty rectangle containing the seed cell, grown in
    all lateral directions at the seed's height level."""
    sx, sy, z = seed
    height = hm.spec.height
    if z >= height:
        return None
    out = np.empty((hm.spec.width * hm.spec.depth, 4), dtype=np.int64)
    n = _maximal_rects_at_level(hm.grid, z, out)
    best = None
    for x0, y0, w, d in out[:n]:
        if not (x0 <= sx < x0 + w and y0 <= sy < y0 + d):
            continue
        key = (w * d, w, -x0, -y0)
        if best is None or key > best[0]:
            best = (key, Ems((int(x0), int(y0), z), (int(w), int(d), height - z)))
    return best[1] if best else None


def extract_constrained(hm: HeightMap, seed: tuple[int, int, int]) -> Ems | None:
    """EMS anchored exactly at the seed corner, grown only toward +x/+y."""
    sx, sy, z = seed
    height = hm.spec.height
    if z >= height:
        return None
    w, d = _anchored_best_rect(hm.grid, sx, sy, z)
    if w == 0 or d == 0:
        return None
    return Ems((sx, sy, z), (int(w), int(d), height - z), KIND_CONSTRAINED)


def extract_all(hm: HeightMap, constrained: bool = True) -> list[Ems]:
    """Candidate EMS set for the current container state.

    Default mode unions, per seed corner, the largest maximal rectangle
    containing the seed and the seed-anchored constrained rectangle. In
    original-only mode (``constrained=False``) the per-seed picks are replaced
    by the complete set of laterally maximal empty boxes, so the set is exact
    rather than a seed-dependent selection."""
    height = hm.spec.height
    result: dict[tuple, Ems] = {}
    if constrained:
        out = np.empty((hm.spec.width * hm.spec.depth, 4), dtype=np.int64)
        rects_by_level: dict[int, list] = {}
        for seed in seed_corners(hm):
            sx, sy, z = seed
            if z >= height:
                continue
            if z not in rects_by_level:
                n = _maximal_rects_at_level(hm.grid, z, out)
                rects_by_level[z] = out[:n].tolist()
            best = None
            for x0, y0, w, d in rects_by_level[z]:
                if x0 <= sx < x0 + w and y0 <= sy < y0 + d:
                    key = (w * d, w, -x0, -y0)
                    if best is None or key > best[0]:
                        best = (key, Ems((x0, y0, z), (w, d, height - z)))
            for e in (best[1] if best else None, extract_constrained(hm, seed)):
                if e is not None and e.key not in result:
                    result[e.key] = e
    else:
        g = hm.grid
        out = np.empty((hm.spec.width * hm.spec.depth, 4), dtype=np.int64)
        for z in [int(v) for v in np.unique(g) if v < height]:
            n = _maximal_rects_at_level(g, z, out)
            for x0, y0, w, d in out[:n].tolist():
                e = Ems((x0, y0, z), (w, d, height - z))
                result[e.key] = e
    return sorted(result.values(), key=lambda e: (e.corner[2], e.corner[0], e.corner[1], e.dims))


def ems_to_payload(entries: list[Ems]) -> list[dict]:
    return [{"corner": list(e.corner), "dims": list(e.dims), "kind": e.kind}
            for e in entries]


def ems_from_payload(payload: list[dict]) -> list[Ems]:
    return [Ems(tuple(o["corner"]), tuple(o["dims"]), o.get("kind", KIND_ORIGINAL))
            for o in payload]
