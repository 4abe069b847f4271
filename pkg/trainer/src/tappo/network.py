"""Policy network: object encoder, matching and feasibility heads, value head.

Selection runs over pairs (box state j, empty space k): encoded source
features S_j and target features T_k of a shared width are matched with a
scaled dot product, modulated by a feasibility score in (0, 1), masked to
-inf on invalid pairs and normalized with a softmax. Invalid pairs carry
exactly zero probability and zero gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .features import EMS_FEATS, Features

FEAS_EPS = 1e-6


class NoValidAction(Exception):
    """Raised when the validity mask has no set entry."""


@dataclass
class NetConfig:
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 2
    d_prec: int = 32
    hidden: int = 128


def sinusoidal_positions(n: int, d: int, dtype, device) -> torch.Tensor:
    pos = torch.arange(n, dtype=dtype, device=device)[:, None]
    idx = torch.arange(0, d, 2, dtype=dtype, device=device)
    angle = pos / torch.pow(torch.tensor(10000.0, dtype=dtype, device=device),
                            idx / d)
    out = torch.zeros(n, d, dtype=dtype, device=device)
    out[:, 0::2] = torch.sin(angle)
    out[:, 1::2] = torch.cos(angle)
    return out


def _mlp(d_in: int, hidden: int, d_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d_in, hidden), nn.ReLU(),
                         nn.Linear(hidden, d_out))


class ObjectEncoder(nn.Module):
    """Per box state: a shape feature from its oriented dims and a precedence
    feature from attention over its blocker rows (query = the self entry),
    concatenated."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        half = cfg.d_model // 2
        self.shape_mlp = _mlp(3, cfg.hidden, half)
        self.prec_embed = nn.Linear(2, cfg.d_prec)
        self.prec_attn = nn.MultiheadAttention(cfg.d_prec, num_heads=2,
                                               batch_first=True)
        self.prec_proj = nn.Linear(cfg.d_prec, cfg.d_model - half)

    def forward(self, dims: torch.Tensor, prec: torch.Tensor,
                self_idx: torch.Tensor) -> torch.Tensor:
        shape = self.shape_mlp(dims)
        kv = self.prec_embed(prec)
        n = dims.shape[0]
        query = kv[torch.arange(n), self_idx][:, None, :]
        att, _ = self.prec_attn(query, kv, kv, need_weights=False)
        return torch.cat([shape, self.prec_proj(att[:, 0])], dim=-1)


class PolicyNetwork(nn.Module):
    def __init__(self, cfg: NetConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or NetConfig()
        self.object_encoder = ObjectEncoder(cfg)
        layer = dict(d_model=cfg.d_model, nhead=cfg.n_heads,
                     dim_feedforward=cfg.hidden, batch_first=True)
        self.src_encoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(**layer), cfg.n_layers)
        self.ems_mlp = _mlp(EMS_FEATS, cfg.hidden, cfg.d_model)
        self.tgt_encoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(**layer), cfg.n_layers)
        self.feas_src = _mlp(cfg.d_model, cfg.hidden, cfg.d_model)
        self.feas_tgt = _mlp(cfg.d_model, cfg.hidden, cfg.d_model)
        self.value_head = _mlp(2 * cfg.d_model, cfg.hidden, 1)

    def encode(self, feats: Features) -> tuple[torch.Tensor, torch.Tensor]:
        obj = self.object_encoder(feats.state_dims, feats.prec, feats.self_idx)
        d = self.cfg.d_model
        obj = obj + sinusoidal_positions(obj.shape[0], d, obj.dtype, obj.device)
        src = self.src_encoder(obj[None])[0]
        ems = self.ems_mlp(feats.ems)
        ems = ems + sinusoidal_positions(ems.shape[0], d, ems.dtype, ems.device)
        tgt = self.tgt_encoder(ems[None])[0]
        return src, tgt

    def forward(self, feats: Features):
        """Returns (probs, feasibility, logits, value).

        probs is (N, M), sums to 1 over valid pairs and is exactly zero on
        invalid ones; feasibility is strictly inside (0, 1)."""
        if not bool(feats.mask.any()):
            raise NoValidAction("observation has no valid (state, space) pair")
        src, tgt = self.encode(feats)
        scale = 1.0 / math.sqrt(self.cfg.d_model)
        match = (src @ tgt.T) * scale
        feas = torch.sigmoid((self.feas_src(src) @ self.feas_tgt(tgt).T) * scale)
        feas = feas.clamp(FEAS_EPS, 1.0 - FEAS_EPS)
        logits = match * feas
        mask = feats.mask.to(logits.device)
        masked = logits.masked_fill(~mask, float("-inf"))
        probs = torch.softmax(masked.reshape(-1), dim=0).reshape(masked.shape)
        value = self.value_head(torch.cat([src.mean(0), tgt.mean(0)]))[0]
        return probs, feas, masked, value
