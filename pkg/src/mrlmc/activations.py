"""Piecewise-linear activations with an optional kink recorder.

Finite differences are only valid when the perturbed evaluations sit on the
same linear piece of every rectifier; :func:`record_kinks` collects the
active-side masks so a gradient check can detect a crossing.
"""

from __future__ import annotations

from contextlib import contextmanager

import torch
from torch import nn

_masks: list | None = None


@contextmanager
def record_kinks():
    global _masks
    prev, _masks = _masks, []
    try:
        yield _masks
    finally:
        _masks = prev


def _note(x: torch.Tensor) -> None:
    if _masks is not None:
        _masks.append(x.detach() > 0)


def relu(x: torch.Tensor) -> torch.Tensor:
    _note(x)
    return torch.relu(x)


def control_max(z: torch.Tensor, alpha: float) -> torch.Tensor:
    """Elementwise max(alpha * z, z): identity for z >= 0, slope alpha below."""
    _note(z)
    return torch.maximum(alpha * z, z)


class ReLU(nn.Module):
    def forward(self, x):
        return relu(x)
