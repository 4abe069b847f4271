"""Stacked source scenes and precedence extraction.

Boxes rest upright (yaw about world-Z only) in a flat workspace. Generation
replaces physics with an analytic drop: each box falls onto the highest
surface under its footprint and must pass the same support-ratio rule the
container uses. Precedence comes in two flavours: movement-block (MB) edges
from boxes resting on top, and access-block (AB) edges from boxes inside the
corridor swept outward from a face along its normal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from shapely.geometry import Polygon, box as shapely_box

from .errors import ContractViolation, SceneGenerationError
from .geometry import AXIS_X, AXIS_Y, AXIS_Z, Dims3, N_STATES, grasp_axis

AREA_TOL = 1e-9
Z_TOL = 1e-9
# Vertical slack under which a box still counts as resting on another.
MB_GAP_TOL = 0.5

SIDE_POS = "+"
SIDE_NEG = "-"

_AXIS_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


@dataclass
class SceneBox:
    id: int
    dims: Dims3
    observed_dims: Dims3
    position: tuple[float, float, float]  # footprint centre x, y; bottom z
    yaw: float

    @property
    def z_bottom(self) -> float:
        return self.position[2]

    @property
    def z_top(self) -> float:
        return self.position[2] + self.dims.z

    def footprint(self) -> Polygon:
        cx, cy, _ = self.position
        hx, hy = self.dims.x / 2.0, self.dims.y / 2.0
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        pts = []
        for dx, dy in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)):
            pts.append((cx + dx * c - dy * s, cy + dx * s + dy * c))
        return Polygon(pts)

    def axis_dir(self, axis: str) -> tuple[float, float]:
        """Unit direction of a horizontal local axis in the workspace plane."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        if axis == AXIS_X:
            return (c, s)
        if axis == AXIS_Y:
            return (-s, c)
        raise ContractViolation(f"axis {axis!r} has no horizontal direction")


@dataclass
class Scene:
    boxes: list[SceneBox]
    workspace: tuple[float, float]

    @property
    def n(self) -> int:
        return len(self.boxes)

    def to_json(self) -> str:
        return json.dumps({
            "workspace": {"w": self.workspace[0], "d": self.workspace[1]},
            "boxes": [{
                "id": b.id,
                "dims": list(b.dims.as_tuple()),
                "observed_dims": list(b.observed_dims.as_tuple()),
                "pos": list(b.position),
                "yaw": b.yaw,
            } for b in self.boxes],
        })

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        obj = json.loads(text)
        boxes = [SceneBox(o["id"], Dims3(*o["dims"]), Dims3(*o["observed_dims"]),
                          tuple(o["pos"]), o["yaw"]) for o in obj["boxes"]]
        return cls(boxes, (obj["workspace"]["w"], obj["workspace"]["d"]))


@dataclass
class PrecedenceGraph:
    n: int
    mb: set[tuple[int, int]] = field(default_factory=set)  # (blocker, blocked)
    ab: dict[str, set[tuple[int, int, str]]] = field(default_factory=dict)

    def __post_init__(self):
        for axis in (AXIS_X, AXIS_Y, AXIS_Z):
            self.ab.setdefault(axis, set())

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "mb": sorted(self.mb),
            "ab": {axis: sorted([j, i, side] for (j, i, side) in edges)
                   for axis, edges in self.ab.items()},
        })


def _support_ok(footprint: Polygon, supports: list[Polygon], sigma: float) -> bool:
    """Shared support rule: covered-area ratio plus centroid containment in the
    support bounding box expanded by half a unit."""
    area = footprint.area
    total = 0.0
    minx = miny = math.inf
    maxx = maxy = -math.inf
    for s in supports:
        inter = footprint.intersection(s)
        if inter.area > AREA_TOL:
            total += inter.area
            bx = inter.bounds
            minx, miny = min(minx, bx[0]), min(miny, bx[1])
            maxx, maxy = max(maxx, bx[2]), max(maxy, bx[3])
    if total / area < sigma:
        return False
    cx, cy = footprint.centroid.x, footprint.centroid.y
    return (minx - 0.5 <= cx <= maxx + 0.5) and (miny - 0.5 <= cy <= maxy + 0.5)


def generate_scene(n_boxes: int, dims_sampler, rng_seed: int,
                   workspace: tuple[float, float] = (400.0, 400.0),
                   sigma: float = 0.3, p_occl: float = 0.0,
                   occl_delta: tuple[int, ...] = (1, 2),
                   max_attempts: int = 50,
                   random_orientation: bool = True) -> Scene:
    """Drop ``n_boxes`` sequentially with random position and yaw.

    ``dims_sampler(rng)`` supplies each box's dimensions; placement retries
    until the support rule passes. Deterministic for a fixed seed."""
    if n_boxes < 1:
        raise ContractViolation("n_boxes must be >= 1")
    rng = np.random.default_rng(rng_seed)
    ws_w, ws_d = workspace
    boxes: list[SceneBox] = []
    ws_poly = shapely_box(0.0, 0.0, ws_w, ws_d)
    for i in range(n_boxes):
        base = dims_sampler(rng)
        if random_orientation:
            perm = _AXIS_PERMS[int(rng.integers(len(_AXIS_PERMS)))]
            t = base.as_tuple()
            dims = Dims3(t[perm[0]], t[perm[1]], t[perm[2]])
        else:
            dims = base
        placed = None
        for _ in range(max_attempts):
            yaw = float(rng.uniform(0.0, 2.0 * math.pi))
            r = 0.5 * math.hypot(dims.x, dims.y)
            if ws_w <= 2 * r or ws_d <= 2 * r:
                continue
            cx = float(rng.uniform(r, ws_w - r))
            cy = float(rng.uniform(r, ws_d - r))
            cand = SceneBox(i, dims, dims, (cx, cy, 0.0), yaw)
            fp = cand.footprint()
            if not ws_poly.contains(fp):
                continue
            z = 0.0
            for other in boxes:
                if fp.intersection(other.footprint()).area > AREA_TOL:
                    z = max(z, other.z_top)
            if z > 0.0:
                supports = [o.footprint() for o in boxes
                            if abs(o.z_top - z) <= Z_TOL
                            and fp.intersection(o.footprint()).area > AREA_TOL]
                if not _support_ok(fp, supports, sigma):
                    continue
            placed = replace(cand, position=(cx, cy, z))
            break
        if placed is None:
            raise SceneGenerationError(
                f"could not place box {i} after {max_attempts} attempts")
        boxes.append(placed)
    for b in boxes:
        if rng.random() < p_occl:
            axis = int(rng.integers(3))
            delta = int(rng.choice(occl_delta)) * (1 if rng.random() < 0.5 else -1)
            t = list(b.dims.as_tuple())
            t[axis] = max(1, t[axis] + delta)
            b.observed_dims = Dims3(*t)
    return Scene(boxes, workspace)


def extract_mb(scene: Scene) -> set[tuple[int, int]]:
    """(j -> i) edges for every box j resting at least partly on top of i."""
    edges = set()
    fps = [b.footprint() for b in scene.boxes]
    for i, bi in enumerate(scene.boxes):
        for j, bj in enumerate(scene.boxes):
            if i == j:
                continue
            if fps[i].intersection(fps[j]).area <= AREA_TOL:
                continue
            if bj.z_bottom >= bi.z_top - MB_GAP_TOL and bj.z_bottom > bi.z_bottom:
                edges.add((j, i))
    return edges


def _corridor(box: SceneBox, axis: str, side: str, sweep: float) -> Polygon:
    """Face of ``box`` perpendicular to a horizontal local axis, swept outward."""
    sgn = 1.0 if side == SIDE_POS else -1.0
    nx, ny = box.axis_dir(axis)
    nx, ny = sgn * nx, sgn * ny
    # the two footprint corners bounding the face
    ox, oy = box.axis_dir(AXIS_Y if axis == AXIS_X else AXIS_X)
    cx, cy, _ = box.position
    half_n = (box.dims.x if axis == AXIS_X else box.dims.y) / 2.0
    half_o = (box.dims.y if axis == AXIS_X else box.dims.x) / 2.0
    a = (cx + half_n * nx - half_o * ox, cy + half_n * ny - half_o * oy)
    b = (cx + half_n * nx + half_o * ox, cy + half_n * ny + half_o * oy)
    return Polygon([a, b,
                    (b[0] + sweep * nx, b[1] + sweep * ny),
                    (a[0] + sweep * nx, a[1] + sweep * ny)])


def extract_ab(scene: Scene, axis: str) -> set[tuple[int, int, str]]:
    """(j -> i, side) edges: box j intersects the access corridor of box i's
    given face. The ground blocks every bottom face (Z- self edge)."""
    edges = set()
    fps = [b.footprint() for b in scene.boxes]
    sweep = 2.0 * math.hypot(*scene.workspace)
    for i, bi in enumerate(scene.boxes):
        if axis == AXIS_Z:
            edges.add((i, i, SIDE_NEG))
            for j, bj in enumerate(scene.boxes):
                if i == j or fps[i].intersection(fps[j]).area <= AREA_TOL:
                    continue
                if bj.z_top > bi.z_top + Z_TOL:
                    edges.add((j, i, SIDE_POS))
                if bj.z_bottom < bi.z_bottom - Z_TOL:
                    edges.add((j, i, SIDE_NEG))
            continue
        for side in (SIDE_POS, SIDE_NEG):
            corr = _corridor(bi, axis, side, sweep)
            for j, bj in enumerate(scene.boxes):
                if i == j:
                    continue
                z_overlap = min(bi.z_top, bj.z_top) - max(bi.z_bottom, bj.z_bottom)
                if z_overlap <= Z_TOL:
                    continue
                if corr.intersection(fps[j]).area > AREA_TOL:
                    edges.add((j, i, side))
    return edges


def extract_graph(scene: Scene) -> PrecedenceGraph:
    g = PrecedenceGraph(scene.n, extract_mb(scene))
    for axis in (AXIS_X, AXIS_Y, AXIS_Z):
        g.ab[axis] = extract_ab(scene, axis)
    return g


def state_precedence(graph: PrecedenceGraph, i: int, s: int) -> np.ndarray:
    """2 x n binary matrix: MB blockers of i, and AB blockers (either side)
    along the grasp axis of state s."""
    if not 0 <= i < graph.n:
        raise ContractViolation(f"box index {i} outside [0, {graph.n})")
    p = np.zeros((2, graph.n), dtype=np.int8)
    for (j, tgt) in graph.mb:
        if tgt == i:
            p[0, j] = 1
    axis = grasp_axis(s)
    for (j, tgt, _side) in graph.ab[axis]:
        if tgt == i:
            p[1, j] = 1
    return p


def accessible(graph: PrecedenceGraph, i: int, s: int,
               removed: frozenset[int] | set[int] = frozenset()) -> bool:
    """True when no present box movement-blocks i and at least one side along
    the grasp axis of s is free. Self edges (ground) never go away."""
    for (j, tgt) in graph.mb:
        if tgt == i and j not in removed:
            return False
    axis = grasp_axis(s)
    blocked = {SIDE_POS: False, SIDE_NEG: False}
    for (j, tgt, side) in graph.ab[axis]:
        if tgt == i and (j == i or j not in removed):
            blocked[side] = True
    return not (blocked[SIDE_POS] and blocked[SIDE_NEG])


def accessibility_table(graph: PrecedenceGraph,
                        removed: frozenset[int] | set[int] = frozenset()) -> np.ndarray:
    """(n, 6) boolean table of accessible(i, s) for all boxes and states."""
    out = np.zeros((graph.n, N_STATES), dtype=bool)
    for i in range(graph.n):
        for s in range(N_STATES):
            out[i, s] = accessible(graph, i, s, removed)
    return out
