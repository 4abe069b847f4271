"""Benchmark data generators: FIX / RAND / PPSG sources and quantization.

PPSG instances are built by recursively splitting the container volume into
exactly ``n`` cuboids, so replaying the recorded split positions fills the
container perfectly (C = 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, SceneGenerationError
from .geometry import ContainerSpec, Dims3

SOURCE_FIX = "fix"
SOURCE_RAND = "rand"
SOURCE_PPSG = "ppsg"

# Uniform per-axis bounds as fractions of the container edge. The paper never
# states its distribution; these defaults make the total source volume a small
# multiple of the container volume, which the multi-container metrics assume.
DEFAULT_DIST = (0.3, 0.75)


def _dist_bounds(dist: tuple[float, float], edge: int, u: int) -> tuple[int, int]:
    lo = max(1, math.ceil(dist[0] * edge / u))
    hi = max(lo, math.floor(dist[1] * edge / u))
    return lo, hi


def gen_rand(n: int, dist: tuple[float, float], container: ContainerSpec,
             u: int, rng: np.random.Generator) -> list[Dims3]:
    """n boxes with independent uniform integer dims, multiples of u."""
    edge = min(container.width, container.depth, container.height)
    lo, hi = _dist_bounds(dist, edge, u)
    out = []
    for _ in range(n):
        d = rng.integers(lo, hi + 1, size=3) * u
        out.append(Dims3(int(d[0]), int(d[1]), int(d[2])))
    return out


def gen_fix(n: int, n_fix: int, dist: tuple[float, float],
            container: ContainerSpec, u: int, rng: np.random.Generator) -> list[Dims3]:
    """Catalogue of ``n_fix`` dims drawn once, then n samples with replacement."""
    if n_fix < 1:
        raise ContractViolation("n_fix must be >= 1")
    catalogue = gen_rand(n_fix, dist, container, u, rng)
    idx = rng.integers(0, n_fix, size=n)
    return [catalogue[int(i)] for i in idx]


@dataclass
class PpsgInstance:
    container: ContainerSpec
    boxes: list[Dims3]
    # solution entries sorted bottom-up: {"box": index, "corner": [x,y,z]}
    solution: list[dict] = field(default_factory=list)


def gen_ppsg(n: int, container: ContainerSpec, rng: np.random.Generator,
             u: int = 1, max_attempts: int = 100) -> PpsgInstance:
    """Split the container into exactly n cuboids with min edge >= 2u.

    Pieces to split are chosen with probability proportional to volume and cut
    along their longest axis at a uniform u-aligned position."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    min_edge = 2 * u
    for _ in range(max_attempts):
        pieces = [((0, 0, 0), (container.width, container.depth, container.height))]
        ok = True
        while len(pieces) < n:
            vols = np.array([d[0] * d[1] * d[2] for _, d in pieces], dtype=float)
            splittable = np.array([max(d) >= 2 * min_edge for _, d in pieces])
            if not splittable.any():
                ok = False
                break
            vols[~splittable] = 0.0
            idx = int(rng.choice(len(pieces), p=vols / vols.sum()))
            corner, dims = pieces.pop(idx)
            axis = int(np.argmax(dims))
            length = dims[axis]
            cuts = np.arange(min_edge, length - min_edge + 1, u)
            cut = int(rng.choice(cuts))
            d1, d2 = list(dims), list(dims)
            d1[axis] = cut
            d2[axis] = length - cut
            c2 = list(corner)
            c2[axis] += cut
            pieces.append((corner, tuple(d1)))
            pieces.append((tuple(c2), tuple(d2)))
        if ok:
            order = rng.permutation(len(pieces))
            boxes = [Dims3(*pieces[int(i)][1]) for i in order]
            sol = [{"box": bi, "corner": list(pieces[int(pi)][0])}
                   for bi, pi in enumerate(order)]
            sol.sort(key=lambda e: (e["corner"][2], e["corner"][0], e["corner"][1]))
            return PpsgInstance(container, boxes, sol)
    raise SceneGenerationError(f"PPSG split failed after {max_attempts} attempts")


def quantize_dims(dims: Dims3, u: int) -> Dims3:
    """Round each dimension up to a multiple of u (never underestimates)."""
    if u < 1:
        raise ContractViolation("u must be >= 1")
    if u == 1:
        return dims
    return Dims3(*(math.ceil(v / u) * u for v in dims.as_tuple()))


def dataset_to_json(source: str, seed: int, container: ContainerSpec,
                    boxes: list[Dims3], solution: list[dict] | None = None,
                    u: int = 1) -> str:
    obj = {
        "source": source,
        "seed": seed,
        "u": u,
        "container": [container.width, container.depth, container.height],
        "boxes": [list(b.as_tuple()) for b in boxes],
    }
    if solution is not None:
        obj["solution"] = solution
    return json.dumps(obj, indent=2, sort_keys=True)


def dataset_from_json(text: str) -> dict:
    obj = json.loads(text)
    obj["container"] = ContainerSpec(*obj["container"])
    obj["boxes"] = [Dims3(*b) for b in obj["boxes"]]
    return obj


def generate_dataset(source: str, n: int, seed: int,
                     container: ContainerSpec = ContainerSpec(100, 100, 100),
                     n_fix: int = 5, dist: tuple[float, float] = DEFAULT_DIST,
                     u: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    solution = None
    if source == SOURCE_RAND:
        boxes = gen_rand(n, dist, container, u, rng)
    elif source == SOURCE_FIX:
        boxes = gen_fix(n, n_fix, dist, container, u, rng)
    elif source == SOURCE_PPSG:
        inst = gen_ppsg(n, container, rng, u)
        boxes, solution = inst.boxes, inst.solution
    else:
        raise ContractViolation(f"unknown source {source!r}")
    return {"source": source, "seed": seed, "u": u, "container": container,
            "boxes": boxes, "solution": solution}


def replay_solution(inst: PpsgInstance, sigma: float = 0.3):
    """Replay a PPSG instance's recorded solution bottom-up.

    Returns the finished single-container session; raises if any placement
    fails to rest at its recorded height or is unstable."""
    from .container import Mode, PackingSession
    from .ems import Ems

    session = PackingSession(inst.container, Mode.SINGLE, sigma=sigma)
    c = session.containers[0]
    for entry in inst.solution:
        dims = inst.boxes[entry["box"]].as_tuple()
        x, y, z = entry["corner"]
        z_rest = c.hm.max_under(x, y, dims[0], dims[1])
        if z_rest != z:
            raise SceneGenerationError(
                f"solution replay rests at {z_rest}, recorded {z}")
        e = Ems((x, y, z), (dims[0], dims[1], inst.container.height - z))
        p = session.place(0, e, dims, entry["box"], 0)
        if not p.stable:
            raise SceneGenerationError("solution replay produced unstable placement")
    return session
