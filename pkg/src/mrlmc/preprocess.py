"""Signal conditioning: FIR band-pass, resampling, channel selection and
optical density to hemoglobin conversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import signal as sps
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError
from .signals import Modality, Record, Signal
from .validation import check_records


@dataclass(frozen=True)
class FilterSpec:
    low_hz: float
    high_hz: float
    taps: int = 3001

    def check(self, fs: float) -> None:
        if not 0 < self.low_hz < self.high_hz < fs / 2:
            raise ConfigError(
                f"passband {self.low_hz}-{self.high_hz} Hz infeasible at fs={fs} Hz "
                "(need 0 < low_hz < high_hz < fs/2)",
                "low_hz",
            )
        if self.taps < 31 or self.taps % 2 == 0:
            raise ConfigError(f"taps must be odd and >= 31, got {self.taps}", "taps")

    @classmethod
    def from_dict(cls, d) -> "FilterSpec":
        return cls(float(d["low_hz"]), float(d["high_hz"]), int(d.get("taps", 3001)))


# Molar extinction coefficients [1/(cm*M)], base-10, rows = wavelength (690, 830),
# columns = (HbO, HbR). Tabulated by Prahl.
EXTINCTION_690_830 = ((276.0, 2051.96), (974.0, 693.04))


@dataclass
class OpticalFrame:
    """Optical-density change at 690 and 830 nm, shape 2 x channels x timesteps."""

    delta_od: np.ndarray
    distance_cm: np.ndarray
    fs: float
    channel_ids: tuple
    dpf: tuple = (6.0, 6.0)
    extinction: tuple = EXTINCTION_690_830

    def __post_init__(self):
        self.delta_od = np.asarray(self.delta_od, dtype=np.float64)
        if self.delta_od.ndim != 3 or self.delta_od.shape[0] != 2:
            raise ConfigError(f"delta_od must be 2 x channels x timesteps, got {self.delta_od.shape}", "delta_od")
        self.distance_cm = np.broadcast_to(np.asarray(self.distance_cm, dtype=np.float64),
                                           (self.delta_od.shape[1],)).copy()
        if np.any(self.distance_cm <= 0):
            raise ConfigError("source-detector distances must be positive", "distance_cm")
        if any(p <= 0 for p in self.dpf):
            raise ConfigError("differential pathlength factors must be positive", "dpf")


def design_bandpass(spec: FilterSpec, fs: float) -> np.ndarray:
    """Linear-phase windowed-sinc (Hamming) band-pass taps."""
    spec.check(fs)
    return sps.firwin(spec.taps, [spec.low_hz, spec.high_hz], pass_zero=False, window="hamming", fs=fs)


def fir_zero_phase(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Forward-backward FIR along the last axis with reflect padding of one filter length."""
    pad = len(taps)
    padded = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pad, pad)], mode="reflect")
    k = taps.reshape((1,) * (x.ndim - 1) + (-1,))
    half = len(taps) // 2
    # symmetric taps: 'same'-aligned convolution is the zero-delay linear-phase pass
    y = sps.fftconvolve(padded, k, mode="full", axes=-1)[..., half:half + padded.shape[-1]]
    y = sps.fftconvolve(y[..., ::-1], k, mode="full", axes=-1)[..., half:half + padded.shape[-1]][..., ::-1]
    return y[..., pad:pad + x.shape[-1]]


def bandpass_fir(sig: Signal, spec: FilterSpec) -> Signal:
    """Zero-phase FIR band-pass, applied per channel; length preserved."""
    taps = design_bandpass(spec, sig.fs)
    return sig.replace(data=fir_zero_phase(sig.data, taps))


def resample(sig: Signal, fs_out: float) -> Signal:
    """Polyphase (anti-aliased) resampling to ``fs_out``.

    The output has ``round(n_times * fs_out / fs)`` samples.
    """
    if not fs_out > 0:
        raise ConfigError(f"fs_out must be positive, got {fs_out}", "fs_out")
    if fs_out == sig.fs:
        return sig.replace(data=sig.data.copy())
    ratio = Fraction(fs_out / sig.fs).limit_denominator(1000)
    n_out = int(round(sig.n_times * fs_out / sig.fs))
    if n_out < 1:
        raise ConfigError(f"resampling {sig.n_times} samples to {fs_out} Hz leaves no samples", "fs_out")
    # Remove a least-squares line first and add it back at the output instants:
    # polyphase branch gains differ slightly, so a trend pushed through the
    # filter would pick up ripple. Constants and ramps come out exact.
    t_in = np.arange(sig.n_times, dtype=np.float64)
    if sig.n_times > 1:
        slope, offset = np.polyfit(t_in, sig.data.T, 1)
    else:
        slope, offset = np.zeros(sig.n_channels), sig.data[:, 0]
    trend = offset[:, None] + slope[:, None] * t_in
    y = sps.resample_poly(sig.data - trend, ratio.numerator, ratio.denominator, axis=1, padtype="line")
    if y.shape[1] >= n_out:
        y = y[:, :n_out]
    else:
        y = np.pad(y, [(0, 0), (0, n_out - y.shape[1])], mode="edge")
    t_out = np.arange(n_out) * (sig.fs / fs_out)
    y = y + offset[:, None] + slope[:, None] * t_out
    return sig.replace(data=y, fs=float(fs_out))


def select_channels(sig: Signal, keep: Sequence[str]) -> Signal:
    keep = [str(k) for k in keep]
    if not keep:
        raise ConfigError("empty channel selection", "keep")
    index = {c: i for i, c in enumerate(sig.channel_ids)}
    missing = [k for k in keep if k not in index]
    if missing:
        raise ConfigError(f"unknown channel id(s) {missing} for {sig.modality.value}", "keep")
    rows = [index[k] for k in keep]
    return sig.replace(data=sig.data[rows], channel_ids=tuple(keep))


def _extinction_matrix(frame: OpticalFrame) -> np.ndarray:
    eps = np.asarray(frame.extinction, dtype=np.float64)
    if eps.shape != (2, 2):
        raise ConfigError("extinction matrix must be 2 x 2 (wavelength x chromophore)", "extinction")
    if abs(np.linalg.det(eps)) < 1e-12 * np.abs(eps).max() ** 2:
        raise ConfigError("extinction matrix is singular", "extinction")
    return eps


def hemoglobin_forward(hbo: np.ndarray, hbr: np.ndarray, frame_like: OpticalFrame) -> np.ndarray:
    """Modified Beer-Lambert forward model: concentrations (umol/L) to delta OD."""
    eps = _extinction_matrix(frame_like)
    conc = np.stack([hbo, hbr]) * 1e-6
    od = np.einsum("wc,cnt->wnt", eps, conc)
    path = frame_like.distance_cm[None, :, None] * np.asarray(frame_like.dpf, dtype=np.float64)[:, None, None]
    return od * path


def hemoglobin_inverse(frame: OpticalFrame) -> tuple[np.ndarray, np.ndarray]:
    """Solve the 2x2 Beer-Lambert system per channel and timestep.

    Returns (delta HbO, delta HbR) in umol/L.
    """
    eps = _extinction_matrix(frame)
    path = frame.distance_cm[None, :, None] * np.asarray(frame.dpf, dtype=np.float64)[:, None, None]
    scaled = frame.delta_od / path
    conc = np.einsum("cw,wnt->cnt", np.linalg.inv(eps), scaled) * 1e6
    return conc[0], conc[1]


def od_to_hemoglobin(frame: OpticalFrame) -> Signal:
    """Delta HbO as an FNIRS signal."""
    hbo, _ = hemoglobin_inverse(frame)
    return Signal(Modality.FNIRS, hbo, frame.fs, frame.channel_ids)


class SignalPreprocessor(TransformerMixin, BaseEstimator):
    """Per-record conditioning chain: channel selection, band-pass, resampling.

    Stateless: ``fit`` only validates. ``filters`` and ``channels`` map a
    modality name to a filter dict / channel list; missing entries skip the
    step for that modality.
    """

    def __init__(self, fs_common=100.0, filters=None, channels=None):
        self.fs_common = fs_common
        self.filters = filters
        self.channels = channels

    def fit(self, X, y=None):
        check_records(X)
        if self.fs_common is not None and not self.fs_common > 0:
            raise ConfigError("fs_common must be positive", "fs_common")
        return self

    def _process(self, sig: Signal) -> Signal:
        mod = sig.modality.value
        keep = (self.channels or {}).get(mod)
        if keep:
            sig = select_channels(sig, keep)
        spec = (self.filters or {}).get(mod)
        if spec:
            sig = bandpass_fir(sig, spec if isinstance(spec, FilterSpec) else FilterSpec.from_dict(spec))
        if self.fs_common is not None:
            sig = resample(sig, self.fs_common)
        return sig

    def transform(self, X) -> list[Record]:
        records = check_records(X)
        return [r.with_signals({m: self._process(s) for m, s in r.signals.items()}) for r in records]
