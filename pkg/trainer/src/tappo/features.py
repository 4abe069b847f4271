"""Tensor features extracted from an observation payload.

Everything is computed from the wire payload alone so the trainer stays
decoupled from the engine's internals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

EMS_FEATS = 8


@dataclass
class Features:
    """One observation, ready for the policy network.

    state_dims: (N, 3) oriented dims, scaled by the longest container edge.
    prec: (N, R, 2) per box state, its box's {movement, access}-blocker flags
        against each of the R remaining boxes.
    self_idx: (N,) index of the state's own box within the remaining list.
    ems: (M, 8) corner, dims (both scaled), volume fraction, container fill.
    mask: (N, M) boolean validity.
    """
    state_dims: torch.Tensor
    prec: torch.Tensor
    self_idx: torch.Tensor
    ems: torch.Tensor
    mask: torch.Tensor

    @property
    def n(self) -> int:
        return self.state_dims.shape[0]

    @property
    def m(self) -> int:
        return self.ems.shape[0]

    def to(self, *args, **kwargs) -> "Features":
        return Features(self.state_dims.to(*args, **kwargs),
                        self.prec.to(*args, **kwargs),
                        self.self_idx,
                        self.ems.to(*args, **kwargs),
                        self.mask)


def featurize(payload: dict, dtype=torch.float32) -> Features:
    spec = payload["spec"]
    edge = float(max(spec))
    volume = float(spec[0] * spec[1] * spec[2])
    remaining = list(payload["remaining"])
    pos = {box: r for r, box in enumerate(remaining)}
    states = payload["box_states"]
    n, r = len(states), len(remaining)

    dims = np.array([s["dims"] for s in states], dtype=np.float64) / edge
    prec = np.zeros((n, r, 2), dtype=np.float64)
    self_idx = np.zeros(n, dtype=np.int64)
    for row, s in enumerate(states):
        p = np.asarray(s["prec"], dtype=np.float64)
        if p.size:
            prec[row] = p.T
        self_idx[row] = pos[s["box"]]

    fills = {c["index"]: c["packed_volume"] / c["volume"]
             for c in payload["containers"]}
    ems = np.zeros((len(payload["ems"]), EMS_FEATS), dtype=np.float64)
    for i, e in enumerate(payload["ems"]):
        ems[i, 0:3] = np.asarray(e["corner"], dtype=np.float64) / edge
        ems[i, 3:6] = np.asarray(e["dims"], dtype=np.float64) / edge
        ems[i, 6] = e["dims"][0] * e["dims"][1] * e["dims"][2] / volume
        ems[i, 7] = fills.get(e["container"], 0.0)

    mask = np.asarray(payload["validity"], dtype=bool).reshape(n, len(ems))
    return Features(torch.tensor(dims, dtype=dtype),
                    torch.tensor(prec, dtype=dtype),
                    torch.tensor(self_idx),
                    torch.tensor(ems, dtype=dtype),
                    torch.tensor(mask))
