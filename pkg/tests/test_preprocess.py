import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal as sps

from mrlmc.errors import ConfigError
from mrlmc.preprocess import (
    FilterSpec, OpticalFrame, SignalPreprocessor, bandpass_fir, design_bandpass, hemoglobin_forward,
    hemoglobin_inverse, od_to_hemoglobin, resample, select_channels,
)
from mrlmc.signals import Modality, Signal

FS = 100.0
T = np.arange(int(150 * FS)) / FS
CENTRAL = slice(len(T) // 4, 3 * len(T) // 4)
FNIRS_BAND = FilterSpec(0.01, 0.08, 3001)


def tone(freq):
    return Signal(Modality.FNIRS, np.sin(2 * np.pi * freq * T)[None, :], FS, ["CH01"])


def central_gain_db(x, y):
    rms = lambda a: np.sqrt(np.mean(a[CENTRAL] ** 2))  # noqa: E731
    return 20 * np.log10(rms(y) / rms(x))


def response_db(freq):
    """Designed filter's zero-phase (squared) magnitude at ``freq``."""
    _, h = sps.freqz(design_bandpass(FNIRS_BAND, FS), worN=[freq], fs=FS)
    return 2 * 20 * np.log10(np.abs(h[0]))


def test_passband_tone_within_1db():
    assert abs(response_db(0.04)) <= 1.0
    x = tone(0.04)
    assert abs(central_gain_db(x.data[0], bandpass_fir(x, FNIRS_BAND).data[0])) <= 1.0


def test_stopband_tone_attenuated_40db():
    assert response_db(0.5) <= -40
    x = tone(0.5)
    assert central_gain_db(x.data[0], bandpass_fir(x, FNIRS_BAND).data[0]) <= -40


def test_zero_in_zero_out():
    z = Signal(Modality.FNIRS, np.zeros((2, 500)), FS, ["a", "b"])
    out = bandpass_fir(z, FilterSpec(1.0, 10.0, 101))
    assert np.all(out.data == 0)
    assert out.data.shape == z.data.shape


def test_filter_is_zero_phase():
    x = Signal(Modality.EEG, np.sin(2 * np.pi * 5.0 * np.arange(4000) / 500.0)[None], 500.0, ["Cz"])
    y = bandpass_fir(x, FilterSpec(1.0, 40.0, 301)).data[0]
    c = slice(1000, 3000)
    lag = np.argmax(np.correlate(y[c], x.data[0][c], mode="full")) - (2000 - 1)
    assert lag == 0


@pytest.mark.parametrize("spec", [FilterSpec(0.01, 60.0, 101), FilterSpec(0.0, 1.0, 101), FilterSpec(2.0, 1.0, 101)])
def test_infeasible_passband(spec):
    with pytest.raises(ConfigError):
        bandpass_fir(tone(0.04), spec)


@pytest.mark.parametrize("taps", [30, 101 - 1, 29])
def test_taps_must_be_odd_and_long(taps):
    with pytest.raises(ConfigError, match="taps"):
        bandpass_fir(tone(0.04), FilterSpec(0.01, 0.08, taps))


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_bandpass_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    spec = FilterSpec(1.0, 10.0, 61)
    x = Signal(Modality.EEG, rng.standard_normal((2, 300)), 50.0, ["a", "b"])
    y = Signal(Modality.EEG, rng.standard_normal((2, 300)), 50.0, ["a", "b"])
    lhs = bandpass_fir(x.replace(data=a * x.data + b * y.data), spec).data
    rhs = a * bandpass_fir(x, spec).data + b * bandpass_fir(y, spec).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_resample_identity_is_bit_identical(rng):
    x = Signal(Modality.EEG, rng.standard_normal((3, 100)), 250.0, ["a", "b", "c"])
    y = resample(x, 250.0)
    assert y.data.tobytes() == x.data.tobytes() and y.fs == 250.0


@pytest.mark.parametrize("fs_out", [10.0, 33.0, 100.0, 400.0, 1000.0])
def test_resample_constant_stays_constant(fs_out):
    x = Signal(Modality.EEG, np.full((2, 1000), 3.25), 250.0, ["a", "b"])
    y = resample(x, fs_out)
    assert y.n_times == round(1000 * fs_out / 250.0)
    interior = y.data[:, y.n_times // 10: -y.n_times // 10 or None]
    np.testing.assert_allclose(interior, 3.25, atol=1e-6)


def test_resample_eeg_length():
    x = Signal(Modality.EEG, np.zeros((1, 150_000)), 1000.0, ["Cz"])
    y = resample(x, 100.0)
    assert y.n_times == 15000 and y.fs == 100.0


def test_resample_preserves_slow_tone():
    t = np.arange(2000) / 200.0
    x = Signal(Modality.EEG, np.sin(2 * np.pi * 2.0 * t)[None], 200.0, ["Cz"])
    y = resample(x, 50.0)
    ty = np.arange(y.n_times) / 50.0
    np.testing.assert_allclose(y.data[0, 20:-20], np.sin(2 * np.pi * 2.0 * ty)[20:-20], atol=1e-2)


def test_select_channels(rng):
    x = Signal(Modality.EEG, rng.standard_normal((3, 10)), 10.0, ["a", "b", "c"])
    assert select_channels(x, ["a", "b", "c"]) == x
    rev = select_channels(x, ["c", "b", "a"])
    np.testing.assert_array_equal(rev.data, x.data[::-1])
    assert rev.channel_ids == ("c", "b", "a")
    with pytest.raises(ConfigError, match="empty channel selection"):
        select_channels(x, [])
    with pytest.raises(ConfigError, match="zz"):
        select_channels(x, ["a", "zz"])


def _frame(od, **kw):
    return OpticalFrame(od, distance_cm=np.array([3.0, 2.5, 3.5]), fs=10.0, channel_ids=["c1", "c2", "c3"], **kw)


def test_beer_lambert_zero():
    sig = od_to_hemoglobin(_frame(np.zeros((2, 3, 20))))
    assert sig.modality is Modality.FNIRS and np.all(sig.data == 0)


def test_beer_lambert_recovers_forward_model(rng):
    hbo, hbr = rng.normal(0, 2.0, (3, 50)), rng.normal(0, 1.0, (3, 50))
    probe = _frame(np.zeros((2, 3, 50)), dpf=(6.5, 5.8))
    od = hemoglobin_forward(hbo, hbr, probe)
    rec_hbo, rec_hbr = hemoglobin_inverse(_frame(od, dpf=(6.5, 5.8)))
    np.testing.assert_allclose(rec_hbo, hbo, rtol=1e-9, atol=0)
    np.testing.assert_allclose(rec_hbr, hbr, rtol=1e-9, atol=0)


def test_beer_lambert_linear(rng):
    od = rng.normal(0, 1e-3, (2, 3, 10))
    a = od_to_hemoglobin(_frame(od)).data
    b = od_to_hemoglobin(_frame(2 * od)).data
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12)


def test_beer_lambert_singular_extinction():
    with pytest.raises(ConfigError, match="singular"):
        od_to_hemoglobin(_frame(np.zeros((2, 3, 5)), extinction=((1.0, 2.0), (2.0, 4.0))))


def test_preprocessor_chain(small_records):
    pre = SignalPreprocessor(fs_common=2.5, filters={"EEG": {"low_hz": 0.3, "high_hz": 1.0, "taps": 31}},
                             channels={"FNIRS": ["CH02", "CH01"]})
    out = pre.fit_transform(small_records[:3])
    assert out[0][Modality.FNIRS].channel_ids == ("CH02", "CH01")
    assert out[0][Modality.EEG].n_times == 50 and out[0][Modality.EEG].fs == 2.5
    assert pre.get_params()["fs_common"] == 2.5
    assert [r.label for r in out] == [r.label for r in small_records[:3]]
