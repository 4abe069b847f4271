"""Export finished packings as OBJ cuboid meshes or plain JSON."""

from __future__ import annotations

import json

_FACES = (
    (0, 2, 1), (0, 3, 2),  # bottom
    (4, 5, 6), (4, 6, 7),  # top
    (0, 1, 5), (0, 5, 4),
    (1, 2, 6), (1, 6, 5),
    (2, 3, 7), (2, 7, 6),
    (3, 0, 4), (3, 4, 7),
)


def placements_to_obj(placements) -> str:
    """One watertight axis-aligned cuboid per placement."""
    lines = ["# tapcore packing export"]
    base = 0
    for p in placements:
        if not p.stable:
            continue
        x, y, z = p.corner
        w, d, h = p.dims
        verts = [(x, y, z), (x + w, y, z), (x + w, y + d, z), (x, y + d, z),
                 (x, y, z + h), (x + w, y, z + h), (x + w, y + d, z + h),
                 (x, y + d, z + h)]
        lines.append(f"o box_{p.box_id}_c{p.container}")
        for v in verts:
            lines.append(f"v {v[0]} {v[1]} {v[2]}")
        for f in _FACES:
            lines.append(f"f {f[0] + base + 1} {f[1] + base + 1} {f[2] + base + 1}")
        base += 8
    return "\n".join(lines) + "\n"


def placements_to_json(session) -> str:
    return json.dumps({
        "containers": [{
            "index": i,
            "compactness": c.compactness,
            "terminated": c.terminated,
            "placements": [{
                "box": p.box_id, "state": p.state, "dims": list(p.dims),
                "corner": list(p.corner), "stable": p.stable,
                "volume": p.volume,
            } for p in c.placements],
        } for i, c in enumerate(session.containers)],
    }, indent=2)
