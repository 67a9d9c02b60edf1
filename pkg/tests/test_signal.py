import numpy as np
import pytest

from conftest import make_recording, make_window
from tinyfit import signal
from tinyfit.errors import (
    BadTimestamps,
    EmptyDataset,
    EmptyRecording,
    TooFewSubjects,
)
from tinyfit.signal import (
    EPSILON_STD,
    ChannelStats,
    Window,
    fit_channel_stats,
    make_windows,
    normalize,
    resample,
    slice_dataset,
    window_count,
)


class TestResample:
    def test_same_rate_is_identity_on_grid(self):
        rec = make_recording(100, rate_hz=20.0, fill=3.25)
        out = resample(rec, 20.0)
        assert out.rate_hz == 20.0
        assert np.array_equal(out.channels, rec.channels[: len(out)])

    def test_constant_preserved_downsampling(self):
        # 300 samples at 100 Hz span 2.99 s -> 60 grid points at 20 Hz
        rec = make_recording(300, rate_hz=100.0, fill=7.5)
        out = resample(rec, 20.0)
        assert len(out) == int(np.floor(2.99 * 20)) + 1
        assert np.all(out.channels == 7.5)

    def test_constant_count_on_exact_span(self):
        # 301 samples at 100 Hz span exactly 3.0 s -> 61 points
        rec = make_recording(301, rate_hz=100.0, fill=1.0)
        out = resample(rec, 20.0)
        assert len(out) == 61
        assert out.times[-1] == pytest.approx(3.0)

    def test_25hz_grid_spacing_and_bounds(self):
        # the band's native rate: output values stay inside bracketing inputs
        rec = make_recording(250, rate_hz=25.0, seed=5)
        out = resample(rec, 20.0)
        assert np.allclose(np.diff(out.times), 0.05)
        src_t = rec.times
        src = rec.channels
        for i, t in enumerate(out.times):
            j = np.searchsorted(src_t, t, side="right")
            lo, hi = max(0, j - 1), min(len(src_t) - 1, j)
            low = np.minimum(src[lo], src[hi])
            high = np.maximum(src[lo], src[hi])
            assert np.all(out.channels[i] >= low - 1e-12)
            assert np.all(out.channels[i] <= high + 1e-12)

    def test_matches_bruteforce_interpolation(self):
        rec = make_recording(137, rate_hz=33.0, seed=9)
        out = resample(rec, 20.0)
        for i, t in enumerate(out.times):
            for c in range(6):
                expected = np.interp(t, rec.times, rec.channels[:, c])
                assert out.channels[i, c] == pytest.approx(expected, abs=1e-12)

    def test_too_few_samples(self):
        rec = make_recording(2, rate_hz=20.0)
        resample(rec, 20.0)  # two samples is the minimum
        with pytest.raises(EmptyRecording):
            resample(make_recording(1, rate_hz=20.0), 20.0)

    def test_non_monotone_timestamps(self):
        rec = make_recording(50, rate_hz=20.0)
        samples = rec.samples.copy()
        samples[10, 0] = samples[9, 0] - 1.0
        bad = signal.Recording(
            subject_id="s0", class_label="walking", rate_hz=20.0, samples=samples
        )
        with pytest.raises(BadTimestamps):
            resample(bad, 20.0)


class TestMakeWindows:
    def test_exactly_one_window(self):
        rec = make_recording(60)
        assert len(make_windows(rec)) == 1

    def test_l150_offsets(self):
        rec = make_recording(150, seed=3)
        wins = make_windows(rec)
        assert len(wins) == 4
        for k, w in enumerate(wins):
            assert np.array_equal(w.data, rec.channels[30 * k : 30 * k + 60])

    def test_below_window_length(self):
        assert make_windows(make_recording(59)) == []

    def test_count_law_exhaustive(self):
        for n in range(0, 401):
            expected = (n - 60) // 30 + 1 if n >= 60 else 0
            assert window_count(n) == expected
            if n >= 2:
                assert len(make_windows(make_recording(n, fill=0.0))) == expected

    def test_label_and_subject_inherited(self):
        rec = make_recording(90, subject="alice", label="jogging")
        for w in make_windows(rec):
            assert w.subject_id == "alice"
            assert w.label == "jogging"

    def test_wrong_rate_rejected(self):
        with pytest.raises(ValueError):
            make_windows(make_recording(100, rate_hz=25.0))


class TestChannelStats:
    def test_zero_window(self):
        stats = fit_channel_stats([make_window(0.0)])
        assert np.all(stats.mean == 0.0)
        assert np.all(stats.std == EPSILON_STD)

    def test_plus_minus_one(self):
        stats = fit_channel_stats([make_window(-1.0), make_window(1.0)])
        assert stats.mean == pytest.approx(np.zeros(6))
        assert stats.std == pytest.approx(np.ones(6))  # population std

    def test_order_invariant(self):
        rng = np.random.default_rng(1)
        wins = [make_window(rng.normal(size=(60, 6))) for _ in range(8)]
        a = fit_channel_stats(wins)
        b = fit_channel_stats(wins[::-1])
        assert np.allclose(a.mean, b.mean, rtol=1e-12, atol=1e-15)
        assert np.allclose(a.std, b.std, rtol=1e-12, atol=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(EmptyDataset):
            fit_channel_stats([])


class TestNormalize:
    def test_mean_window_becomes_zero(self):
        stats = ChannelStats(mean=np.arange(6.0), std=np.full(6, 2.0))
        w = make_window(np.broadcast_to(np.arange(6.0), (60, 6)))
        out = normalize(w, stats)
        assert np.all(out.data == 0.0)
        assert out.label == w.label and out.subject_id == w.subject_id

    def test_roundtrip(self):
        rng = np.random.default_rng(2)
        stats = ChannelStats(mean=rng.normal(size=6), std=rng.uniform(0.5, 2.0, 6))
        w = make_window(rng.normal(size=(60, 6)))
        out = normalize(w, stats)
        back = out.data * stats.std + stats.mean
        assert np.allclose(back, w.data, rtol=1e-6)

    def test_epsilon_floor_no_infinities(self):
        stats = fit_channel_stats([make_window(5.0)])  # constant -> floored std
        out = normalize(make_window(6.0), stats)
        assert np.all(np.isfinite(out.data))


class TestWindowInvariants:
    def test_shape_enforced(self):
        with pytest.raises(ValueError):
            Window(data=np.zeros((59, 6)), subject_id="s")
        with pytest.raises(ValueError):
            Window(data=np.zeros((60, 5)), subject_id="s")

    def test_nan_rejected(self):
        data = np.zeros((60, 6))
        data[13, 2] = np.nan
        with pytest.raises(ValueError):
            Window(data=data, subject_id="s")

    def test_corrupt_rows_never_reach_windows(self):
        # fuzz: recordings whose channels contain NaN cannot even be built
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(60, 200))
            rec = make_recording(n, seed=int(rng.integers(1 << 30)))
            for w in make_windows(rec):
                assert w.data.shape == (60, 6)
                assert np.all(np.isfinite(w.data))


class TestSliceDataset:
    @staticmethod
    def _corpus(n_subjects: int, per_subject: int = 3):
        return [
            make_window(float(s), subject=f"s{s:02d}")
            for s in range(n_subjects)
            for _ in range(per_subject)
        ]

    def test_deterministic(self):
        wins = self._corpus(9)
        a = slice_dataset(wins, seed=42)
        b = slice_dataset(wins, seed=42)
        assert a.personalized_subjects == b.personalized_subjects

    def test_partition(self):
        wins = self._corpus(11)
        split = slice_dataset(wins, seed=7)
        all_subjects = {w.subject_id for w in wins}
        assert len(split.personalized) == 4
        assert split.generalized_subjects | split.personalized_subjects == all_subjects
        assert split.generalized_subjects & split.personalized_subjects == set()
        total = len(split.generalized) + sum(map(len, split.personalized.values()))
        assert total == len(wins)

    def test_wisdm_sized_pool_keeps_47(self):
        wins = self._corpus(51, per_subject=1)
        for seed in (0, 1, 42, 1234):
            split = slice_dataset(wins, seed=seed)
            assert len(split.generalized_subjects) == 47

    def test_too_few_subjects(self):
        with pytest.raises(TooFewSubjects):
            slice_dataset(self._corpus(4), seed=0)
        slice_dataset(self._corpus(5), seed=0)
