"""Time-domain augmentation bounded by the per-question response time, and
assembly of (x, y) input pairs."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .signals import Modality, Record, Signal, TaskMeta
from .validation import Mode, check_mode


class AugmentMethod(str, enum.Enum):
    MASK = "MASK"
    WARP = "WARP"


@dataclass(frozen=True)
class AugmentSpec:
    method: AugmentMethod = AugmentMethod.MASK
    lambda_s: float = 2.0
    warp_factor_range: tuple = (0.8, 1.25)
    probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", AugmentMethod(str(getattr(self.method, "value", self.method)).upper()))
        object.__setattr__(self, "warp_factor_range", tuple(float(w) for w in self.warp_factor_range))
        if not self.lambda_s > 0:
            raise ConfigError("lambda_s must be positive", "lambda_s")
        if len(self.warp_factor_range) != 2:
            raise ConfigError("warp_factor_range must be [lo, hi]", "warp_factor_range")
        lo, hi = self.warp_factor_range
        if not 0 < lo <= hi:
            raise ConfigError("warp_factor_range must satisfy 0 < lo <= hi", "warp_factor_range")
        if not 0 <= self.probability <= 1:
            raise ConfigError("probability must lie in [0, 1]", "probability")

    def check_task(self, task: TaskMeta) -> None:
        if self.lambda_s > task.t_q + 1e-12:
            raise ConfigError(f"lambda_s={self.lambda_s} exceeds the response time t_q={task.t_q}", "lambda_s")


@dataclass(frozen=True)
class AugmentWindow:
    """A drawn augmentation segment; ``start:stop`` are sample indices."""

    question: int
    t0: float
    width: float
    start: int
    stop: int
    warp: float = 1.0

    @property
    def count(self) -> int:
        return self.stop - self.start


def draw_window(sig: Signal, task: TaskMeta, spec: AugmentSpec, rng: np.random.Generator) -> AugmentWindow:
    """Draw a question, a width in (0, lambda] and an offset in [0, t_q - width)."""
    spec.check_task(task)
    if sig.duration + 1e-9 < task.t_q:
        raise DataError(f"signal of {sig.duration:.3f} s is shorter than t_q={task.t_q}")
    q = int(rng.integers(task.question_count))
    width = spec.lambda_s * (1.0 - rng.random())
    t0 = rng.random() * (task.t_q - width)
    q_start, q_stop = task.question_windows()[q]
    fs = sig.fs
    lo = int(round(q_start * fs))
    hi = min(int(round(q_stop * fs)), sig.n_times)
    count = max(1, int(round(width * fs)))
    count = min(count, hi - lo)
    start = min(int(round((q_start + t0) * fs)), hi - count)
    start = max(start, lo)
    lo_w, hi_w = spec.warp_factor_range
    warp = float(rng.uniform(lo_w, hi_w)) if spec.method is AugmentMethod.WARP else 1.0
    return AugmentWindow(q, float(t0), float(width), start, start + count, warp)


def time_mask(sig: Signal, task: TaskMeta, spec: AugmentSpec, rng: np.random.Generator, return_window=False):
    """Replace one drawn segment (all channels) with each channel's mean over
    the unmasked samples."""
    win = draw_window(sig, task, spec, rng)
    data = sig.data.copy()
    keep = np.ones(sig.n_times, dtype=bool)
    keep[win.start:win.stop] = False
    fill = data[:, keep].mean(axis=1) if keep.any() else np.zeros(sig.n_channels)
    data[:, win.start:win.stop] = fill[:, None]
    out = sig.replace(data=data)
    return (out, win) if return_window else out


def warp_time_map(n: int, start: float, length: float, factor: float) -> np.ndarray:
    """Original-time position of each of the ``n`` output samples.

    The segment ``[start, start + length]`` is stretched by ``factor`` and the
    stretched record is mapped back onto ``n`` samples. Piecewise linear with
    positive slopes, hence strictly increasing.
    """
    if n < 2:
        return np.zeros(n)
    end = n - 1.0
    length = min(length, end - start)
    src = np.array([0.0, start, start + length, end])
    dst = np.array([0.0, start, start + factor * length, end + (factor - 1.0) * length])
    keep = np.concatenate([[True], np.diff(src) > 0])
    src, dst = src[keep], dst[keep]
    u = np.arange(n) * (dst[-1] / end)
    return np.interp(u, dst, src)


def time_warp(sig: Signal, task: TaskMeta, spec: AugmentSpec, rng: np.random.Generator, return_window=False):
    """Locally re-time one drawn segment by the drawn factor, then resample
    the record back to its original length (linear interpolation)."""
    win = draw_window(sig, task, spec, rng)
    pos = warp_time_map(sig.n_times, float(win.start), float(win.count), win.warp)
    grid = np.arange(sig.n_times, dtype=np.float64)
    data = np.stack([np.interp(pos, grid, row) for row in sig.data])
    out = sig.replace(data=data)
    return (out, win) if return_window else out


def augment(sig: Signal, task: TaskMeta, spec: AugmentSpec, rng: np.random.Generator) -> Signal:
    if spec.method is AugmentMethod.MASK:
        return time_mask(sig, task, spec, rng)
    return time_warp(sig, task, spec, rng)


def record_rng(seed: int, index: int, epoch: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(epoch), int(index)]))


def build_input_pairs(records: Sequence[Record], mode, spec: AugmentSpec, epoch: int = 0):
    """(x, y, label) triples.

    Single-modal modes pair the raw signal with an augmented copy. MULTI
    pairs FNIRS with EEG, each side augmented independently with
    ``spec.probability``. Randomness is derived per record from
    (seed, epoch, position).
    """
    mode = check_mode(mode)
    pairs = []
    for i, rec in enumerate(records):
        for m in mode.modalities:
            if m not in rec.signals:
                raise DataError(f"record {rec.subject_id} is missing modality {m.value}")
        rng = record_rng(spec.seed, i, epoch)
        if mode is Mode.MULTI:
            x, y = rec.signals[Modality.FNIRS], rec.signals[Modality.EEG]
            if rng.random() < spec.probability:
                x = augment(x, rec.task, spec, rng)
            if rng.random() < spec.probability:
                y = augment(y, rec.task, spec, rng)
        else:
            x = rec.signals[mode.modalities[0]]
            y = augment(x, rec.task, spec, rng)
        pairs.append((x, y, rec.label))
    return pairs
