"""The full network: shared MSC encoder, semantic module(s), fusion head, and
the combined training objective."""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import nn

from .contrastive import msc_loss
from .encoder import MSCEncoder
from .head import FocalConfig, FusionHead, LossWeights, focal_loss_from_logits, total_loss
from .semantic import SemanticEncoder, l_sc


class Outputs(NamedTuple):
    v: torch.Tensor
    u: torch.Tensor
    z_f: torch.Tensor
    z_e: torch.Tensor
    logits: torch.Tensor


class Losses(NamedTuple):
    total: torch.Tensor
    msc: torch.Tensor
    sc: torch.Tensor
    fl: torch.Tensor


class MRLMCNetwork(nn.Module):
    """``in_channels`` maps modality name to channel count; one adapter each."""

    def __init__(self, in_channels: dict, *, d=64, n_scale=5, n_out=64, alpha=0.3, kernel_size=3,
                 dilation_base=2, dropout=0.1, n_trans=1, n_head=16, mlp_ratio=4, semantic_dropout=0.1,
                 share_semantic=True, head_hidden=None, head_dropout=0.1):
        super().__init__()
        self.encoder = MSCEncoder(in_channels, d, n_scale, n_out, alpha, kernel_size, dilation_base, dropout)
        make = lambda: SemanticEncoder(n_scale, n_out, n_trans, n_head, mlp_ratio, semantic_dropout)  # noqa: E731
        self.share_semantic = bool(share_semantic)
        self.semantic = nn.ModuleDict({"x": make()} if self.share_semantic else {"x": make(), "y": make()})
        self.head = FusionHead(self.encoder.m, head_hidden, head_dropout)

    def semantic_for(self, side: str) -> SemanticEncoder:
        return self.semantic["x" if self.share_semantic else side]

    def forward(self, x, y, x_modality: str, y_modality: str) -> Outputs:
        v = self.encoder(x, x_modality)
        u = self.encoder(y, y_modality)
        z_f = self.semantic_for("x")(v)
        z_e = self.semantic_for("y")(u)
        return Outputs(v, u, z_f, z_e, self.head(z_f, z_e))


def objective(out: Outputs, labels: torch.Tensor, temperature: float, focal: FocalConfig,
              weights: LossWeights) -> Losses:
    """Weighted sum of contrastive, consistency and focal terms. All three
    terms are always evaluated so they can be traced under zero weights."""
    l_m = msc_loss(out.v, out.u, temperature)
    l_s = l_sc(out.z_f, out.z_e)
    l_f = focal_loss_from_logits(out.logits, labels, focal)
    return Losses(total_loss(l_m, l_s, l_f, weights), l_m, l_s, l_f)
