"""Signal data model, the on-disk dataset format and a synthetic generator.

A dataset directory holds ``manifest.json`` plus, for every record and
modality, a raw float32 little-endian matrix ``<subject>_<modality>.f32``
(row-major, channels x timesteps) and a JSON sidecar
``<subject>_<modality>.json``.
"""

from __future__ import annotations

import enum
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError

MANIFEST = "manifest.json"
FORMAT_NAME = "mrlmc-dataset"
FORMAT_VERSION = 1

_manifest_lock = threading.Lock()


class Modality(str, enum.Enum):
    FNIRS = "FNIRS"
    EEG = "EEG"


class Label(enum.IntEnum):
    CONTROL = 0
    DEPRESSED = 1


EEG_1020 = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3",
    "C3", "Cz", "C4", "T4", "T5", "P3", "Pz", "P4",
    "T6", "O1", "O2",
)


@dataclass(frozen=True, eq=False)
class Signal:
    """One modality's multichannel recording.

    ``data`` is channels x timesteps; HbO change in umol/L for FNIRS and
    potential in uV for EEG.
    """

    modality: Modality
    data: np.ndarray
    fs: float
    channel_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "modality", Modality(self.modality))
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ConfigError(f"signal data must be 2-D, got shape {data.shape}", "data")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_ids", tuple(str(c) for c in self.channel_ids))
        object.__setattr__(self, "fs", float(self.fs))
        if not self.fs > 0:
            raise ConfigError(f"sampling rate must be positive, got {self.fs}", "fs")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ConfigError(f"signal needs at least one channel and timestep, got {data.shape}", "data")
        if len(self.channel_ids) != data.shape[0]:
            raise ConfigError(
                f"{len(self.channel_ids)} channel ids for {data.shape[0]} channels", "channel_ids"
            )
        if not np.all(np.isfinite(data)):
            raise DataError("corrupt signal: non-finite values")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_times(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_times / self.fs

    def replace(self, **changes) -> "Signal":
        kwargs = dict(modality=self.modality, data=self.data, fs=self.fs, channel_ids=self.channel_ids)
        kwargs.update(changes)
        return Signal(**kwargs)

    def __eq__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return (
            self.modality == other.modality
            and self.fs == other.fs
            and self.channel_ids == other.channel_ids
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class TaskMeta:
    """Stimulation-task timing.

    The task period (``question_count`` consecutive windows of ``t_q``
    seconds) is centred in the recording, with equal silent periods before
    and after.
    """

    total_duration: float
    question_count: int
    t_q: float

    def __post_init__(self):
        if self.question_count < 1:
            raise ConfigError("question_count must be >= 1", "question_count")
        if not self.t_q > 0:
            raise ConfigError("t_q must be positive", "t_q")
        if self.question_count * self.t_q > self.total_duration + 1e-9:
            raise ConfigError("question_count * t_q exceeds total_duration", "t_q")

    @property
    def task_onset(self) -> float:
        return 0.5 * (self.total_duration - self.question_count * self.t_q)

    def question_windows(self) -> list[tuple[float, float]]:
        start = self.task_onset
        return [(start + k * self.t_q, start + (k + 1) * self.t_q) for k in range(self.question_count)]

    def to_dict(self) -> dict:
        return {"total_duration": self.total_duration, "question_count": self.question_count, "t_q": self.t_q}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskMeta":
        return cls(float(d["total_duration"]), int(d["question_count"]), float(d["t_q"]))


@dataclass(frozen=True)
class Record:
    subject_id: str
    label: Label
    signals: Mapping[Modality, Signal]
    task: TaskMeta

    def __post_init__(self):
        object.__setattr__(self, "label", Label(int(self.label)))
        sigs = {Modality(k): v for k, v in self.signals.items()}
        if not sigs:
            raise ConfigError(f"record {self.subject_id} has no signals", "signals")
        object.__setattr__(self, "signals", sigs)

    def __getitem__(self, modality) -> Signal:
        return self.signals[Modality(modality)]

    @property
    def modalities(self) -> tuple[Modality, ...]:
        return tuple(m for m in Modality if m in self.signals)

    def with_signals(self, signals: Mapping[Modality, Signal]) -> "Record":
        return Record(self.subject_id, self.label, signals, self.task)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SynthSpec:
    """Parameters of the class-separable two-modality generator."""

    n_records: int = 200
    channels: dict = field(default_factory=lambda: {"FNIRS": 8, "EEG": 8})
    fs: dict = field(default_factory=lambda: {"FNIRS": 10.0, "EEG": 50.0})
    duration: float = 20.0
    question_count: int = 3
    t_q: float = 4.0
    class_ratio: float = 0.2
    activation_gain: dict = field(default_factory=lambda: {"CONTROL": 1.0, "DEPRESSED": 0.4})
    noise_sd: float = 0.1
    seed: int = 0
    modalities: tuple = ("FNIRS", "EEG")
    kernel_peak_s: float = 6.0
    kernel_undershoot_s: float = 16.0
    kernel_undershoot_ratio: float = 1.0 / 6.0
    eeg_band_hz: tuple = (0.5, 2.0)
    eeg_baseline: float = 0.5
    channel_jitter: float = 0.2

    def validate(self) -> "SynthSpec":
        if int(self.n_records) != self.n_records or self.n_records < 1:
            raise ConfigError("n_records must be a positive integer", "n_records")
        if not 0 < self.class_ratio < 1:
            raise ConfigError("class_ratio must lie in (0, 1)", "class_ratio")
        if not self.noise_sd > 0:
            raise ConfigError("noise_sd must be positive", "noise_sd")
        if not self.duration > 0:
            raise ConfigError("duration must be positive", "duration")
        gains = {Label[k] if isinstance(k, str) else Label(k): float(v) for k, v in self.activation_gain.items()}
        if set(gains) != set(Label):
            raise ConfigError("activation_gain needs a value for every label", "activation_gain")
        if any(g <= 0 for g in gains.values()):
            raise ConfigError("activation_gain values must be positive", "activation_gain")
        if gains[Label.CONTROL] == gains[Label.DEPRESSED]:
            raise ConfigError("activation_gain values must differ between labels", "activation_gain")
        if not self.modalities:
            raise ConfigError("at least one modality is required", "modalities")
        for m in self.modalities:
            mod = Modality(m).value
            if int(self.channels.get(mod, 0)) < 1:
                raise ConfigError(f"channels[{mod}] must be >= 1", "channels")
            if not float(self.fs.get(mod, 0)) > 0:
                raise ConfigError(f"fs[{mod}] must be positive", "fs")
        lo, hi = self.eeg_band_hz
        if not 0 < lo < hi:
            raise ConfigError("eeg_band_hz must satisfy 0 < lo < hi", "eeg_band_hz")
        if Modality.EEG.value in [Modality(m).value for m in self.modalities]:
            if hi >= float(self.fs["EEG"]) / 2:
                raise ConfigError("eeg_band_hz upper edge must be below EEG Nyquist", "eeg_band_hz")
        if not 0 <= self.channel_jitter < 1:
            raise ConfigError("channel_jitter must lie in [0, 1)", "channel_jitter")
        TaskMeta(self.duration, self.question_count, self.t_q)
        return self

    def gains(self) -> dict[Label, float]:
        return {Label[k] if isinstance(k, str) else Label(k): float(v) for k, v in self.activation_gain.items()}

    def to_dict(self) -> dict:
        return {
            "n_records": int(self.n_records),
            "channels": {Modality(k).value: int(v) for k, v in self.channels.items()},
            "fs": {Modality(k).value: float(v) for k, v in self.fs.items()},
            "duration": float(self.duration),
            "question_count": int(self.question_count),
            "t_q": float(self.t_q),
            "class_ratio": float(self.class_ratio),
            "activation_gain": {lab.name: g for lab, g in self.gains().items()},
            "noise_sd": float(self.noise_sd),
            "seed": int(self.seed),
            "modalities": [Modality(m).value for m in self.modalities],
            "kernel_peak_s": float(self.kernel_peak_s),
            "kernel_undershoot_s": float(self.kernel_undershoot_s),
            "kernel_undershoot_ratio": float(self.kernel_undershoot_ratio),
            "eeg_band_hz": [float(x) for x in self.eeg_band_hz],
            "eeg_baseline": float(self.eeg_baseline),
            "channel_jitter": float(self.channel_jitter),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown synth spec key(s): {', '.join(unknown)}", unknown[0])
        d = dict(d)
        for key in ("modalities", "eeg_band_hz"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def response_kernel(fs: float, peak_s: float = 6.0, undershoot_s: float = 16.0, ratio: float = 1 / 6) -> np.ndarray:
    """Difference-of-gammas hemodynamic kernel with unit area.

    Shape parameters are chosen so the main lobe peaks at ``peak_s`` and the
    undershoot at ``undershoot_s`` (gamma mode = shape - 1 at unit scale).
    """
    t = np.arange(0.0, max(32.0, undershoot_s * 2), 1.0 / fs)
    h = stats.gamma.pdf(t, peak_s + 1.0) - ratio * stats.gamma.pdf(t, undershoot_s + 1.0)
    return h / (h.sum() / fs)


def _task_indicator(task: TaskMeta, t: np.ndarray) -> np.ndarray:
    on = np.zeros_like(t)
    for start, stop in task.question_windows():
        on[(t >= start) & (t < stop)] = 1.0
    return on


def _channel_ids(modality: Modality, n: int) -> tuple[str, ...]:
    if modality is Modality.EEG and n <= len(EEG_1020):
        return EEG_1020[:n]
    prefix = "CH" if modality is Modality.FNIRS else "E"
    return tuple(f"{prefix}{i + 1:02d}" for i in range(n))


def _synth_fnirs(rng, task, gain, n_ch, fs, spec: SynthSpec) -> np.ndarray:
    n = int(round(spec.duration * fs))
    t = np.arange(n) / fs
    box = _task_indicator(task, t)
    kernel = response_kernel(fs, spec.kernel_peak_s, spec.kernel_undershoot_s, spec.kernel_undershoot_ratio)
    response = np.convolve(box, kernel)[:n] / fs
    sens = 1.0 + spec.channel_jitter * rng.uniform(-1.0, 1.0, size=(n_ch, 1))
    return gain * sens * response[None, :] + spec.noise_sd * rng.standard_normal((n_ch, n))


def _synth_eeg(rng, task, gain, n_ch, fs, spec: SynthSpec) -> np.ndarray:
    n = int(round(spec.duration * fs))
    t = np.arange(n) / fs
    box = _task_indicator(task, t)
    # soften the envelope edges over ~0.5 s
    width = max(1, int(round(0.5 * fs)))
    envelope = spec.eeg_baseline + gain * np.convolve(box, np.ones(width) / width, mode="same")
    lo, hi = spec.eeg_band_hz
    freqs = rng.uniform(lo, hi, size=(n_ch, 3))
    phases = rng.uniform(0.0, 2 * np.pi, size=(n_ch, 3))
    osc = np.sin(2 * np.pi * freqs[:, :, None] * t[None, None, :] + phases[:, :, None]).sum(axis=1) / np.sqrt(3)
    sens = 1.0 + spec.channel_jitter * rng.uniform(-1.0, 1.0, size=(n_ch, 1))
    return sens * envelope[None, :] * osc + spec.noise_sd * rng.standard_normal((n_ch, n))


def _label_assignment(spec: SynthSpec) -> np.ndarray:
    n = int(spec.n_records)
    n_dep = int(round(n * spec.class_ratio))
    labels = np.zeros(n, dtype=int)
    order = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & (2**64 - 1), 0xA5])).permutation(n)
    labels[order[:n_dep]] = Label.DEPRESSED
    return labels


def synth_record(spec: SynthSpec, index: int, label: Label | None = None) -> Record:
    """Generate record ``index``; randomness depends only on (seed, index)."""
    if label is None:
        label = Label(_label_assignment(spec)[index])
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & (2**64 - 1), int(index)]))
    task = TaskMeta(float(spec.duration), int(spec.question_count), float(spec.t_q))
    gain = spec.gains()[label]
    signals = {}
    for m in (Modality.FNIRS, Modality.EEG):
        # both generators always draw, so a record is identical whichever modalities are kept
        n_ch, fs = int(spec.channels.get(m.value, 1)), float(spec.fs.get(m.value, 1.0))
        make = _synth_fnirs if m is Modality.FNIRS else _synth_eeg
        data = make(rng, task, gain, n_ch, fs, spec)
        if m.value in [Modality(x).value for x in spec.modalities]:
            signals[m] = Signal(m, data.astype(np.float32), fs, _channel_ids(m, n_ch))
    return Record(f"S{index + 1:04d}", label, signals, task)


def synth_dataset(spec: SynthSpec) -> list[Record]:
    """Generate ``spec.n_records`` labelled records.

    Exactly ``round(n_records * class_ratio)`` records are DEPRESSED. FNIRS
    channels carry a task boxcar convolved with the response kernel and
    scaled by the label's activation gain; EEG channels carry band-limited
    oscillations whose task-period amplitude scales with the same gain.
    """
    spec.validate()
    labels = _label_assignment(spec)
    return [synth_record(spec, i, Label(labels[i])) for i in range(int(spec.n_records))]


# ---------------------------------------------------------------------------
# persistence


def _file_stem(subject_id: str, modality: Modality) -> str:
    return f"{subject_id}_{modality.value}"


def _read_manifest(path: Path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT_NAME:
        raise DataError(f"{path} is not an {FORMAT_NAME} manifest")
    return manifest


def init_dataset(directory, synth_spec: SynthSpec | None = None) -> Path:
    """Create ``directory`` with an empty manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "records": []}
    if synth_spec is not None:
        manifest["synth"] = synth_spec.to_dict()
        manifest["synth"]["response_kernel"] = "difference-of-gammas, unit area"
    with open(directory / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return directory


def save_record(record: Record, directory) -> dict:
    """Write ``record`` into ``directory`` and append it to the manifest.

    Returns the manifest entry.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for modality, sig in record.signals.items():
        stem = _file_stem(record.subject_id, modality)
        sig.data.astype("<f4").tofile(directory / f"{stem}.f32")
        sidecar = {
            "modality": modality.value,
            "shape": [sig.n_channels, sig.n_times],
            "fs": sig.fs,
            "channel_ids": list(sig.channel_ids),
            "label": int(record.label),
            "subject_id": record.subject_id,
            "task": record.task.to_dict(),
        }
        with open(directory / f"{stem}.json", "w") as fh:
            json.dump(sidecar, fh, indent=2)
        files[modality.value] = {"data": f"{stem}.f32", "sidecar": f"{stem}.json"}
    entry = {"subject_id": record.subject_id, "label": int(record.label), "files": files}
    with _manifest_lock:
        path = directory / MANIFEST
        manifest = _read_manifest(path) if path.exists() else {
            "format": FORMAT_NAME, "version": FORMAT_VERSION, "records": []}
        manifest["records"].append(entry)
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2)
    return entry


def save_dataset(records: Sequence[Record], directory, synth_spec: SynthSpec | None = None) -> Path:
    directory = init_dataset(directory, synth_spec)
    for rec in records:
        save_record(rec, directory)
    return directory


def _load_signal(directory: Path, files: Mapping, subject_id: str) -> tuple[Signal, dict]:
    sidecar_path = directory / files["sidecar"]
    data_path = directory / files["data"]
    for p in (sidecar_path, data_path):
        if not p.exists():
            raise DataError(f"missing file {p} for record {subject_id}")
    with open(sidecar_path) as fh:
        side = json.load(fh)
    shape = tuple(int(s) for s in side["shape"])
    raw = np.fromfile(data_path, dtype="<f4")
    if raw.size != math.prod(shape):
        raise DataError(
            f"shape mismatch for record {subject_id}: sidecar {list(shape)} "
            f"but {raw.size} values in {data_path.name}"
        )
    data = raw.reshape(shape)
    if not np.all(np.isfinite(data)):
        raise DataError(f"corrupt signal in record {subject_id} ({side['modality']}): non-finite values")
    sig = Signal(Modality(side["modality"]), data, float(side["fs"]), side["channel_ids"])
    return sig, side


def load_record(directory, entry: Mapping) -> Record:
    directory = Path(directory)
    subject_id = entry["subject_id"]
    signals, task = {}, None
    for mod, files in entry["files"].items():
        sig, side = _load_signal(directory, files, subject_id)
        signals[Modality(mod)] = sig
        task = TaskMeta.from_dict(side["task"])
    if task is None:
        raise DataError(f"record {subject_id} lists no signal files")
    return Record(subject_id, Label(int(entry["label"])), signals, task)


def load_dataset(directory) -> list[Record]:
    """Load every record listed in the manifest, in manifest order."""
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise DataError(f"missing file {path}")
    manifest = _read_manifest(path)
    return [load_record(directory, e) for e in manifest["records"]]
