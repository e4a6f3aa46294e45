"""Spatio-temporal contrasting loss (NT-Xent style over 2N in-batch items)."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError, NumericError


def cosine_sim(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity along the last axis. Zero-norm inputs raise."""
    na, nb = a.norm(dim=-1), b.norm(dim=-1)
    if (na == 0).any() or (nb == 0).any():
        raise NumericError("cosine similarity of a zero-norm vector")
    return (a * b).sum(dim=-1) / (na * nb)


@dataclass
class PairBatch:
    """2N items, interleaved ``v_1, u_1, v_2, u_2, ...``; item ``i``'s positive
    is ``positive_index[i]``."""

    items: torch.Tensor
    positive_index: torch.Tensor
    temperature: float

    def __post_init__(self):
        n2 = self.items.shape[0]
        if n2 % 2 or n2 < 4:
            raise ConfigError(f"contrastive batch needs N >= 2 pairs, got {n2} items", "batch_size")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}", "temperature")
        pos = self.positive_index
        idx = torch.arange(n2)
        if (pos == idx).any() or not torch.equal(pos[pos], idx):
            raise ConfigError("positive relation must be symmetric and irreflexive", "positive_index")

    @property
    def n_pairs(self) -> int:
        return self.items.shape[0] // 2

    @classmethod
    def from_views(cls, v: torch.Tensor, u: torch.Tensor, temperature: float) -> "PairBatch":
        if v.shape != u.shape:
            raise ConfigError(f"view shapes differ: {tuple(v.shape)} vs {tuple(u.shape)}", "items")
        items = torch.stack([v, u], dim=1).reshape(-1, v.shape[-1])
        return cls(items, torch.arange(items.shape[0]) ^ 1, temperature)


def l_msc(batch: PairBatch) -> torch.Tensor:
    """Mean over all 2N anchors of -log(exp(s+/t) / (exp(s+/t) + sum over the
    2N-2 negatives exp(s/t)))."""
    z = batch.items
    norms = z.norm(dim=-1, keepdim=True)
    if (norms == 0).any():
        raise NumericError("cosine similarity of a zero-norm vector")
    z = z / norms
    logits = z @ z.T / batch.temperature
    n2 = z.shape[0]
    self_mask = torch.eye(n2, dtype=torch.bool, device=z.device)
    logits = logits.masked_fill(self_mask, float("-inf"))
    rows = torch.arange(n2, device=z.device)
    return (torch.logsumexp(logits, dim=1) - logits[rows, batch.positive_index]).mean()


def msc_loss(v: torch.Tensor, u: torch.Tensor, temperature: float) -> torch.Tensor:
    return l_msc(PairBatch.from_views(v, u, temperature))
