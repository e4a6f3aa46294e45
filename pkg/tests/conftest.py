import numpy as np
import pytest
import torch

from mrlmc import SignalPreprocessor, SynthSpec, synth_dataset


@pytest.fixture(scope="session")
def desk_spec():
    return SynthSpec(n_records=200, seed=0)


@pytest.fixture(scope="session")
def desk_records(desk_spec):
    """200 records, 8 channels per modality, 100 timesteps after resampling."""
    return SignalPreprocessor(fs_common=5.0).fit_transform(synth_dataset(desk_spec))


@pytest.fixture(scope="session")
def small_records():
    recs = synth_dataset(SynthSpec(n_records=40, seed=11, class_ratio=0.3))
    return SignalPreprocessor(fs_common=5.0).fit_transform(recs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def double():
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)


TINY = {
    "data": {"fs_common": 5.0},
    "model": {"d": 8, "n_scale": 2, "n_out": 8},
    "semantic": {"n_head": 2},
    "train": {"epochs": 3, "patience": 3},
}


@pytest.fixture
def tiny_config():
    """Small widths and a short schedule for plumbing tests."""
    from mrlmc.config import ExperimentConfig

    def make(**sections):
        d = {k: dict(v) for k, v in TINY.items()}
        for name, values in sections.items():
            d.setdefault(name, {}).update(values)
        return ExperimentConfig.from_dict(d)

    return make
