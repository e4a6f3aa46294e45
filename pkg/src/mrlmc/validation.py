"""Input validation helpers used by the estimators."""

from __future__ import annotations

import enum
from typing import Iterable

import numpy as np

from .errors import ConfigError, DataError
from .signals import Modality, Record


class Mode(str, enum.Enum):
    SINGLE_FNIRS = "SINGLE_FNIRS"
    SINGLE_EEG = "SINGLE_EEG"
    MULTI = "MULTI"

    @property
    def modalities(self) -> tuple[Modality, ...]:
        if self is Mode.SINGLE_FNIRS:
            return (Modality.FNIRS,)
        if self is Mode.SINGLE_EEG:
            return (Modality.EEG,)
        return (Modality.FNIRS, Modality.EEG)


def check_mode(mode) -> Mode:
    try:
        return Mode(mode.value if isinstance(mode, enum.Enum) else str(mode).upper())
    except ValueError:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {[m.value for m in Mode]}", "mode") from None


def check_records(X, mode=None, allow_empty=False) -> list[Record]:
    """Return ``X`` as a list of records, checking modality availability and
    that every record of a modality has the same shape and rate."""
    if isinstance(X, Record):
        raise DataError("expected a sequence of records, got a single Record")
    records = list(X) if isinstance(X, Iterable) else None
    if records is None or not all(isinstance(r, Record) for r in records):
        raise DataError("expected a sequence of Record objects")
    if not records and not allow_empty:
        raise DataError("empty record set")
    if mode is None:
        return records
    mode = check_mode(mode)
    ref = {}
    for rec in records:
        for m in mode.modalities:
            if m not in rec.signals:
                raise DataError(f"record {rec.subject_id} is missing modality {m.value} required by {mode.value}")
            sig = rec.signals[m]
            key = (sig.n_channels, sig.n_times, sig.fs)
            if ref.setdefault(m, (key, rec.subject_id))[0] != key:
                other = ref[m][1]
                raise DataError(
                    f"record {rec.subject_id} {m.value} has (channels, timesteps, fs)={key}, "
                    f"but {other} has {ref[m][0]}; resample to a common timeline first"
                )
    return records


def check_labels(records, y=None) -> np.ndarray:
    if y is None:
        return np.array([int(r.label) for r in records], dtype=np.int64)
    y = np.asarray(y).astype(np.int64).ravel()
    if len(y) != len(records):
        raise DataError(f"{len(y)} labels for {len(records)} records")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0 (CONTROL) or 1 (DEPRESSED)")
    return y
