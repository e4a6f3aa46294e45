"""Semantic consistency module: stacked pre-norm transformer units over the
per-scale tokens of a representation, and the consistency loss."""

from __future__ import annotations

import math

import torch
from torch import nn

from .activations import ReLU
from .contrastive import cosine_sim
from .errors import ConfigError, NumericError


class MultiHeadAttention(nn.Module):
    """softmax(Q Wq (K Wk)^T / sqrt(d_k)) V Wv per head, concatenated, times Wo."""

    def __init__(self, width: int, n_head: int):
        super().__init__()
        if width % n_head:
            raise ConfigError(f"n_head={n_head} does not divide width {width}", "n_head")
        self.width, self.n_head = width, n_head
        self.d_k = width // n_head
        self.w_q = nn.Linear(width, width, bias=False)
        self.w_k = nn.Linear(width, width, bias=False)
        self.w_v = nn.Linear(width, width, bias=False)
        self.w_o = nn.Linear(width, width, bias=False)

    def _heads(self, x):
        b, n, _ = x.shape
        return x.view(b, n, self.n_head, self.d_k).transpose(1, 2)

    def forward(self, q, k, v, return_weights=False):
        for name, t in (("Q", q), ("K", k), ("V", v)):
            if t.shape[-1] != self.width:
                raise ValueError(f"{name} width {t.shape[-1]} != attention width {self.width}")
        qh, kh, vh = self._heads(self.w_q(q)), self._heads(self.w_k(k)), self._heads(self.w_v(v))
        weights = torch.softmax(qh @ kh.transpose(-2, -1) / math.sqrt(self.d_k), dim=-1)
        out = (weights @ vh).transpose(1, 2).reshape(q.shape[0], q.shape[1], self.width)
        out = self.w_o(out)
        return (out, weights) if return_weights else out


class TransformerUnit(nn.Module):
    def __init__(self, width, n_head, mlp_ratio=4, dropout=0.1):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = MultiHeadAttention(width, n_head)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, mlp_ratio * width),
            ReLU(),
            nn.Dropout(dropout),
            nn.Linear(mlp_ratio * width, width),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.dropout(self.attn(h, h, h))
        return x + self.dropout(self.mlp(self.norm2(x)))


class SemanticEncoder(nn.Module):
    """Reshape an m-vector into ``n_tokens`` tokens (one per scale branch), run
    the stacked units, flatten back to m."""

    def __init__(self, n_tokens, width, n_trans=1, n_head=16, mlp_ratio=4, dropout=0.1):
        super().__init__()
        self.n_tokens, self.width = n_tokens, width
        self.units = nn.ModuleList(TransformerUnit(width, n_head, mlp_ratio, dropout) for _ in range(n_trans))

    def forward(self, v):
        if v.shape[-1] != self.n_tokens * self.width:
            raise ValueError(f"expected dimension {self.n_tokens * self.width}, got {v.shape[-1]}")
        x = v.reshape(v.shape[0], self.n_tokens, self.width)
        for i, unit in enumerate(self.units):
            x = unit(x)
            if not torch.isfinite(x).all():
                raise NumericError(f"non-finite activations in transformer unit {i}")
        return x.reshape(v.shape[0], -1)


def l_sc(z_f: torch.Tensor, z_e: torch.Tensor) -> torch.Tensor:
    """1 - cos(z_f, z_e), averaged over the batch; 0 at perfect agreement.

    Evaluated as |a - b|^2 / 2 on the unit vectors when cos >= 0 and as
    2 - |a + b|^2 / 2 otherwise, so equal and opposite features give exactly
    0 and 2 instead of picking up rounding from 1 - cos.
    """
    if z_f.shape != z_e.shape:
        raise ValueError(f"feature shapes differ: {tuple(z_f.shape)} vs {tuple(z_e.shape)}")
    cos = cosine_sim(z_f, z_e)
    a = z_f / z_f.norm(dim=-1, keepdim=True)
    b = z_e / z_e.norm(dim=-1, keepdim=True)
    near = (a - b).pow(2).sum(-1) / 2
    far = 2 - (a + b).pow(2).sum(-1) / 2
    return torch.where(cos >= 0, near, far).mean()
