"""Multimodal contrastive representation learning for fNIRS/EEG depression recognition."""

from .augment import AugmentMethod, AugmentSpec, build_input_pairs, time_mask, time_warp
from .config import ExperimentConfig
from .errors import ConfigError, DataError, MRLMCError, NumericError
from .estimator import MRLMCClassifier
from .preprocess import FilterSpec, OpticalFrame, SignalPreprocessor, bandpass_fir, od_to_hemoglobin, resample, select_channels
from .signals import Label, Modality, Record, Signal, SynthSpec, TaskMeta, load_dataset, save_record, synth_dataset
from .training import MetricsReport, ablate, evaluate, split_dataset, sweep, train
from .validation import Mode

__version__ = "0.1.0"
