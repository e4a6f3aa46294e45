"""Fusion classifier, focal loss and the combined objective."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .activations import relu
from .errors import ConfigError, NumericError

FOCAL_EPS = 1e-7


@dataclass(frozen=True)
class FocalConfig:
    alpha_f: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0 < self.alpha_f <= 1:
            raise ConfigError("alpha_f must lie in (0, 1]", "alpha_f")
        if not self.gamma >= 0:
            raise ConfigError("gamma must be >= 0", "gamma")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be >= 0", "lambda1" if self.lambda1 < 0 else "lambda2")


class FusionHead(nn.Module):
    """concat(z_f, z_e) -> affine -> ReLU -> affine -> 2 logits."""

    def __init__(self, m: int, hidden: int | None = None, dropout=0.1, n_classes=2):
        super().__init__()
        self.m = m
        hidden = hidden or m
        self.fc1 = nn.Linear(2 * m, hidden)
        self.fc2 = nn.Linear(hidden, n_classes)
        self.dropout = nn.Dropout(dropout)

    def forward(self, z_f, z_e):
        if z_f.shape[-1] != self.m or z_e.shape[-1] != self.m:
            raise ValueError(f"head expects two {self.m}-dim features, got {z_f.shape[-1]} and {z_e.shape[-1]}")
        h = relu(self.fc1(torch.cat([z_f, z_e], dim=-1)))
        return self.fc2(self.dropout(h))


def fuse_classify(head: FusionHead, z_f, z_e) -> torch.Tensor:
    """Class probabilities (CONTROL, DEPRESSED)."""
    return torch.softmax(head(z_f, z_e), dim=-1)


def focal_loss(p_true, cfg: FocalConfig = FocalConfig()) -> torch.Tensor:
    """Batch mean of -alpha_f * (1 - P)^gamma * log(P), P clamped below at 1e-7."""
    p = torch.as_tensor(p_true, dtype=torch.get_default_dtype() if not torch.is_tensor(p_true) else None)
    p = p.clamp(min=FOCAL_EPS)
    if not torch.isfinite(p).all() or (p > 1).any():
        raise NumericError("focal loss probability outside (0, 1]")
    loss = -cfg.alpha_f * (1.0 - p).pow(cfg.gamma) * torch.log(p)
    return loss.mean()


def focal_loss_from_logits(logits, labels, cfg: FocalConfig = FocalConfig()) -> torch.Tensor:
    """Focal loss with log(P) taken from log-softmax.

    Equal to :func:`focal_loss` on the softmax probabilities whenever
    P >= 1e-7, but keeps a gradient for confidently wrong samples.
    """
    log_p = torch.log_softmax(logits, dim=-1).gather(1, labels.view(-1, 1)).squeeze(1)
    p = log_p.exp()
    return (-cfg.alpha_f * (1.0 - p).pow(cfg.gamma) * log_p).mean()


def total_loss(l_msc, l_sc, l_fl, w: LossWeights = LossWeights()):
    return w.lambda1 * l_msc + w.lambda2 * l_sc + l_fl
