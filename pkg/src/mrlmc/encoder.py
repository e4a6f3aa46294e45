"""Multiscale spatio-temporal convolution (MSC) encoder.

Per-modality width-1 adapters map channels to ``d``; everything after the
adapter (embedding convolution, scale branches, blocks) is shared.
"""

from __future__ import annotations

import torch
from torch import nn

from .activations import control_max, relu
from .errors import NumericError


def _same_conv(c_in, c_out, kernel_size, dilation=1):
    return nn.Conv1d(c_in, c_out, kernel_size, dilation=dilation, padding=dilation * (kernel_size // 2))


class ScaleBranch(nn.Module):
    """One scale: dilated convolution producing the scale representation,
    then the block (temporal conv, global average pool, layer norm)."""

    def __init__(self, d, n_out, kernel_size, dilation):
        super().__init__()
        self.scale_conv = _same_conv(d, d, kernel_size, dilation)
        self.block_conv = _same_conv(d, n_out, kernel_size, dilation)
        self.norm = nn.LayerNorm(n_out)

    def block(self, c_enc: torch.Tensor) -> torch.Tensor:
        h = relu(self.block_conv(c_enc))
        return h.mean(dim=-1)

    def forward(self, c: torch.Tensor) -> torch.Tensor:
        c_enc = relu(self.scale_conv(c))
        return self.norm(self.block(c_enc))


class MSCEncoder(nn.Module):
    def __init__(self, in_channels: dict, d=64, n_scale=5, n_out=64, alpha=0.3,
                 kernel_size=3, dilation_base=2, dropout=0.1):
        super().__init__()
        self.alpha = float(alpha)
        self.n_scale, self.n_out = int(n_scale), int(n_out)
        self.adapters = nn.ModuleDict({mod: nn.Conv1d(int(c), d, 1) for mod, c in in_channels.items()})
        self.embed = _same_conv(d, d, kernel_size)
        self.branches = nn.ModuleList(
            ScaleBranch(d, n_out, kernel_size, dilation_base ** i) for i in range(n_scale)
        )
        self.dropout = nn.Dropout(dropout)

    @property
    def m(self) -> int:
        return self.n_scale * self.n_out

    def trunk_parameters(self):
        return [p for name, p in self.named_parameters() if not name.startswith("adapters.")]

    def latent(self, x: torch.Tensor, modality: str) -> torch.Tensor:
        """Latent sequence C, shape (batch, d, timesteps)."""
        adapter = self.adapters[modality]
        if x.shape[-2] != adapter.in_channels:
            raise ValueError(
                f"{modality} adapter expects {adapter.in_channels} channels, got {x.shape[-2]}"
            )
        return relu(self.embed(adapter(x)))

    def aggregate(self, c: torch.Tensor) -> torch.Tensor:
        """Concatenate max(alpha*Norm(block), Norm(block)) over the scale branches."""
        phis = []
        for i, branch in enumerate(self.branches):
            z = branch(c)
            if not torch.isfinite(z).all():
                raise NumericError(f"non-finite activations in scale branch {i}")
            phis.append(control_max(z, self.alpha))
        return torch.cat(phis, dim=-1)

    def forward(self, x: torch.Tensor, modality: str) -> torch.Tensor:
        return self.dropout(self.aggregate(self.latent(x, modality)))
