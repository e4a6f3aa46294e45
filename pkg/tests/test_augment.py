import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrlmc.augment import (
    AugmentMethod, AugmentSpec, build_input_pairs, draw_window, record_rng, time_mask, time_warp, warp_time_map,
)
from mrlmc.errors import ConfigError, DataError
from mrlmc.signals import Modality, Record, Signal, TaskMeta

TASK = TaskMeta(total_duration=20.0, question_count=3, t_q=4.0)


def _signal(rng, fs=50.0, channels=4):
    n = int(TASK.total_duration * fs)
    return Signal(Modality.EEG, rng.standard_normal((channels, n)), fs, [f"E{i}" for i in range(channels)])


def _inside_one_question(win, fs):
    spans = [(round(a * fs), round(b * fs)) for a, b in TASK.question_windows()]
    return any(lo <= win.start and win.stop <= hi for lo, hi in spans)


def test_mask_fills_segment_with_unmasked_mean(rng):
    sig = _signal(rng)
    out, win = time_mask(sig, TASK, AugmentSpec(), np.random.default_rng(3), return_window=True)
    assert win.count == max(1, round(win.width * sig.fs))
    keep = np.ones(sig.n_times, bool)
    keep[win.start:win.stop] = False
    expected = sig.data[:, keep].mean(axis=1)
    np.testing.assert_array_equal(out.data[:, win.start:win.stop], np.repeat(expected[:, None], win.count, 1))
    assert out.data[:, keep].tobytes() == sig.data[:, keep].tobytes()
    assert out.data.shape == sig.data.shape and out.channel_ids == sig.channel_ids and out.fs == sig.fs


@pytest.mark.parametrize("method", list(AugmentMethod))
def test_window_bounds_over_1000_draws(rng, method):
    sig = _signal(rng, fs=10.0)
    spec = AugmentSpec(method=method, lambda_s=2.5)
    draws = np.random.default_rng(7)
    for _ in range(1000):
        win = draw_window(sig, TASK, spec, draws)
        assert 0 < win.width <= spec.lambda_s
        assert 0 <= win.t0 <= TASK.t_q - win.width
        assert win.count >= 1
        assert _inside_one_question(win, sig.fs)
        lo, hi = spec.warp_factor_range
        assert lo <= win.warp <= hi if method is AugmentMethod.WARP else win.warp == 1.0


def test_lambda_above_response_time_rejected(rng):
    with pytest.raises(ConfigError, match="lambda_s"):
        draw_window(_signal(rng), TASK, AugmentSpec(lambda_s=4.5), rng)


def test_signal_shorter_than_response_time(rng):
    short = Signal(Modality.EEG, rng.standard_normal((1, 30)), 10.0, ["E0"])
    with pytest.raises(DataError, match="shorter"):
        time_mask(short, TASK, AugmentSpec(), rng)


@pytest.mark.parametrize("bad", [dict(lambda_s=0.0), dict(probability=1.5), dict(warp_factor_range=(1.2, 0.9))])
def test_spec_validation(bad):
    with pytest.raises(ConfigError):
        AugmentSpec(**bad)


def test_identity_warp(rng):
    sig = _signal(rng)
    spec = AugmentSpec(method=AugmentMethod.WARP, warp_factor_range=(1.0, 1.0))
    for seed in range(20):
        out = time_warp(sig, TASK, spec, np.random.default_rng(seed))
        np.testing.assert_allclose(out.data, sig.data, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 400), start=st.floats(0, 1), length=st.floats(0, 1), factor=st.floats(0.5, 2.0))
def test_warp_map_strictly_increasing_and_pinned(n, start, length, factor):
    start = start * (n - 1)
    length = length * (n - 1 - start)
    pos = warp_time_map(n, start, length, factor)
    assert pos.shape == (n,)
    assert np.all(np.diff(pos) > 0)
    assert pos[0] == 0.0 and abs(pos[-1] - (n - 1)) < 1e-9


def test_warp_map_against_grid_oracle():
    # dense evaluation of the forward map (original -> stretched) inverted numerically
    n, start, length, factor = 101, 30.0, 20.0, 1.25
    pos = warp_time_map(n, start, length, factor)
    fine = np.linspace(0, n - 1, 200_001)
    stretched = np.where(fine < start, fine,
                         np.where(fine < start + length, start + factor * (fine - start), fine + (factor - 1) * length))
    target = np.arange(n) * stretched[-1] / (n - 1)
    oracle = np.interp(target, stretched, fine)
    np.testing.assert_allclose(pos, oracle, atol=1e-3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), method=st.sampled_from(list(AugmentMethod)),
       lam=st.floats(0.05, 4.0), fs=st.sampled_from([5.0, 10.0, 50.0]))
def test_augment_preserves_shape_and_metadata(seed, method, lam, fs):
    base = np.random.default_rng(seed)
    sig = _signal(base, fs=fs, channels=3)
    spec = AugmentSpec(method=method, lambda_s=lam)
    fn = time_mask if method is AugmentMethod.MASK else time_warp
    out, win = fn(sig, TASK, spec, np.random.default_rng(seed), return_window=True)
    assert out.data.shape == sig.data.shape
    assert (out.fs, out.channel_ids, out.modality) == (sig.fs, sig.channel_ids, sig.modality)
    assert np.isfinite(out.data).all()
    assert win.width <= lam and _inside_one_question(win, fs)
    again = fn(sig, TASK, spec, np.random.default_rng(seed))
    assert again.data.tobytes() == out.data.tobytes()


def test_multi_probability_zero_returns_raw(small_records):
    pairs = build_input_pairs(small_records[:8], "MULTI", AugmentSpec(probability=0.0))
    for (x, y, label), rec in zip(pairs, small_records[:8]):
        assert x is rec[Modality.FNIRS] and y is rec[Modality.EEG]
        assert label == rec.label


def test_single_eeg_augmented_copy_differs(small_records):
    pairs = build_input_pairs(small_records[:10], "SINGLE_EEG", AugmentSpec(lambda_s=1.0))
    for (x, y, _), rec in zip(pairs, small_records[:10]):
        assert x is rec[Modality.EEG]
        assert y.data.shape == x.data.shape and np.any(y.data != x.data)


def test_pairs_deterministic_and_epoch_dependent(small_records):
    spec = AugmentSpec(method="WARP", probability=0.7, seed=5)
    a = build_input_pairs(small_records[:6], "MULTI", spec, epoch=2)
    b = build_input_pairs(small_records[:6], "MULTI", spec, epoch=2)
    c = build_input_pairs(small_records[:6], "MULTI", spec, epoch=3)
    dump = lambda ps: b"".join(x.data.tobytes() + y.data.tobytes() for x, y, _ in ps)  # noqa: E731
    assert dump(a) == dump(b)
    assert dump(a) != dump(c)


def test_missing_modality_names_subject(small_records):
    rec = small_records[0]
    only_eeg = Record(rec.subject_id, rec.label, {Modality.EEG: rec[Modality.EEG]}, rec.task)
    with pytest.raises(DataError, match=rec.subject_id):
        build_input_pairs([only_eeg], "SINGLE_FNIRS", AugmentSpec())


def test_record_rng_streams_distinct():
    a = record_rng(0, 1, 0).random(4)
    assert not np.array_equal(a, record_rng(0, 2, 0).random(4))
    assert not np.array_equal(a, record_rng(0, 1, 1).random(4))
    np.testing.assert_array_equal(a, record_rng(0, 1, 0).random(4))
