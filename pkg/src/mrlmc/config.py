"""Experiment configuration: one JSON document with sections
``data, preprocess, augment, model, semantic, head, train``.

Unknown keys are rejected; ``to_dict`` materializes every default so a run
directory always holds the fully resolved configuration.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .augment import AugmentSpec
from .errors import ConfigError
from .preprocess import EXTINCTION_690_830, FilterSpec
from .validation import Mode, check_mode


@dataclass
class DataConfig:
    fs_common: float = 100.0
    channels: dict | None = None

    def validate(self):
        if not self.fs_common > 0:
            raise ConfigError("fs_common must be positive", "fs_common")
        for mod, keep in (self.channels or {}).items():
            if mod not in ("FNIRS", "EEG"):
                raise ConfigError(f"unknown modality {mod!r} in channels", "channels")
            if not keep:
                raise ConfigError(f"empty channel selection for {mod}", "channels")


@dataclass
class PreprocessConfig:
    # modality -> {"low_hz", "high_hz", "taps"}; absent/null skips filtering
    filters: dict | None = None
    extinction: list = field(default_factory=lambda: [list(r) for r in EXTINCTION_690_830])
    dpf: list = field(default_factory=lambda: [6.0, 6.0])
    distance_cm: float = 3.0

    def validate(self):
        for mod, spec in (self.filters or {}).items():
            if mod not in ("FNIRS", "EEG"):
                raise ConfigError(f"unknown modality {mod!r} in filters", "filters")
            if spec is None:
                continue
            fs = FilterSpec.from_dict(spec)
            if not 0 < fs.low_hz < fs.high_hz:
                raise ConfigError("filter needs 0 < low_hz < high_hz", "low_hz")
            if fs.taps < 31 or fs.taps % 2 == 0:
                raise ConfigError("taps must be odd and >= 31", "taps")
        if any(p <= 0 for p in self.dpf):
            raise ConfigError("dpf values must be positive", "dpf")
        if not self.distance_cm > 0:
            raise ConfigError("distance_cm must be positive", "distance_cm")


@dataclass
class MSCConfig:
    d: int = 64
    n_scale: int = 5
    n_out: int = 64
    alpha: float = 0.3
    kernel_size: int = 3
    dilation_base: int = 2
    dropout: float = 0.1
    temperature: float = 0.2

    @property
    def m(self) -> int:
        return self.n_scale * self.n_out

    def validate(self):
        for name in ("d", "n_scale", "n_out", "kernel_size", "dilation_base"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1", name)
        if self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be odd", "kernel_size")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha (control weight) must lie in (0, 1]", "alpha")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)", "dropout")
        if not self.temperature > 0:
            raise ConfigError(f"contrastive temperature must be > 0, got {self.temperature}", "temperature")


@dataclass
class TransformerConfig:
    n_trans: int = 1
    n_head: int = 16
    mlp_ratio: int = 4
    dropout: float = 0.1
    share_weights: bool = True

    def validate(self, token_width: int | None = None):
        if int(self.n_trans) < 1:
            raise ConfigError("n_trans must be >= 1", "n_trans")
        if int(self.n_head) < 1:
            raise ConfigError("n_head must be >= 1", "n_head")
        if int(self.mlp_ratio) < 1:
            raise ConfigError("mlp_ratio must be >= 1", "mlp_ratio")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)", "dropout")
        if token_width is not None and token_width % self.n_head:
            raise ConfigError(
                f"n_head={self.n_head} does not divide the token width n_out={token_width}", "n_head"
            )


@dataclass
class HeadConfig:
    alpha_f: float = 0.25
    gamma: float = 2.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    hidden: int | None = None
    dropout: float = 0.1

    def validate(self):
        if not 0 < self.alpha_f <= 1:
            raise ConfigError("alpha_f must lie in (0, 1]", "alpha_f")
        if not self.gamma >= 0:
            raise ConfigError("gamma must be >= 0", "gamma")
        for name in ("lambda1", "lambda2"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0", name)
        if self.hidden is not None and int(self.hidden) < 1:
            raise ConfigError("hidden must be >= 1", "hidden")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)", "dropout")


@dataclass
class TrainConfig:
    mode: str = "MULTI"
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 100
    patience: int = 20
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-8
    seed: int = 0
    fractions: list = field(default_factory=lambda: [0.7, 0.15, 0.15])

    def validate(self):
        check_mode(self.mode)
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0", "learning_rate")
        if int(self.batch_size) < 2:
            raise ConfigError("batch_size must be >= 2 (contrastive loss needs negatives)", "batch_size")
        if int(self.epochs) < 1:
            raise ConfigError("epochs must be >= 1", "epochs")
        if int(self.patience) < 1:
            raise ConfigError("patience must be >= 1", "patience")
        if not 0 < self.rmsprop_alpha < 1:
            raise ConfigError("rmsprop_alpha must lie in (0, 1)", "rmsprop_alpha")
        if not self.rmsprop_eps > 0:
            raise ConfigError("rmsprop_eps must be > 0", "rmsprop_eps")
        fr = [float(f) for f in self.fractions]
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError("fractions must be three positive numbers summing to 1", "fractions")


SECTIONS = {
    "data": DataConfig,
    "preprocess": PreprocessConfig,
    "augment": AugmentSpec,
    "model": MSCConfig,
    "semantic": TransformerConfig,
    "head": HeadConfig,
    "train": TrainConfig,
}


def _section_from_dict(name: str, cls, values: Mapping[str, Any]):
    if not isinstance(values, Mapping):
        raise ConfigError(f"section {name!r} must be an object", name)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {', '.join(unknown)}", unknown[0])
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in section {name!r}: {exc}", name) from exc


def _plain(value):
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return getattr(value, "value", value)


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    model: MSCConfig = field(default_factory=MSCConfig)
    semantic: TransformerConfig = field(default_factory=TransformerConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def mode(self) -> Mode:
        return check_mode(self.train.mode)

    def validate(self, check_heads=True) -> "ExperimentConfig":
        self.data.validate()
        self.preprocess.validate()
        self.model.validate()
        self.semantic.validate(self.model.n_out if check_heads else None)
        self.head.validate()
        self.train.validate()
        return self

    def to_dict(self) -> dict:
        return {name: _plain(dataclasses.asdict(getattr(self, name))) for name in SECTIONS}

    @classmethod
    def from_dict(cls, d: Mapping | None, validate=True) -> "ExperimentConfig":
        d = dict(d or {})
        unknown = sorted(set(d) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(unknown)}", unknown[0])
        cfg = cls(**{name: _section_from_dict(name, SECTIONS[name], d.get(name, {})) for name in SECTIONS})
        return cfg.validate() if validate else cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with some fields overridden, e.g. ``replace(head={"lambda1": 0})``."""
        d = self.to_dict()
        for name, values in sections.items():
            d[name].update(values)
        return ExperimentConfig.from_dict(d, validate=False)

    def estimator_params(self) -> dict:
        """Keyword arguments for :class:`mrlmc.estimator.MRLMCClassifier`."""
        m, s, h, t = self.model, self.semantic, self.head, self.train
        return dict(
            mode=check_mode(t.mode).value,
            d=m.d, n_scale=m.n_scale, n_out=m.n_out, alpha=m.alpha, kernel_size=m.kernel_size,
            dilation_base=m.dilation_base, dropout=m.dropout, temperature=m.temperature,
            n_trans=s.n_trans, n_head=s.n_head, mlp_ratio=s.mlp_ratio,
            semantic_dropout=s.dropout, share_semantic=s.share_weights,
            alpha_f=h.alpha_f, gamma=h.gamma, lambda1=h.lambda1, lambda2=h.lambda2,
            head_hidden=h.hidden, head_dropout=h.dropout,
            learning_rate=t.learning_rate, batch_size=t.batch_size, epochs=t.epochs, patience=t.patience,
            rmsprop_alpha=t.rmsprop_alpha, rmsprop_eps=t.rmsprop_eps,
            augment=dataclasses.asdict(self.augment) | {"method": self.augment.method.value},
            random_state=t.seed,
        )
