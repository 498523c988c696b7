import numpy as np
import pytest
from scipy.signal import welch

from pcgdenoise.signal_core import CLASS_LABELS
from pcgdenoise.synth import TOY_PROFILES, make_toy_corpus, synth_heart_signal


def band_power(samples: np.ndarray, rate_hz: int, lo: float, hi: float) -> float:
    freqs, psd = welch(samples, fs=rate_hz, nperseg=min(1024, len(samples)))
    band = (freqs >= lo) & (freqs <= hi)
    return float(np.trapezoid(psd[band], freqs[band]))


class TestSynthHeartSignal:
    def test_basic_properties(self):
        rng = np.random.default_rng(0)
        seg = synth_heart_signal(800, 2.0, rng, profile=TOY_PROFILES["N"], label="N")
        assert seg.sample_rate_hz == 800
        assert len(seg.samples) == 1600
        assert np.max(np.abs(seg.samples)) == pytest.approx(1.0)
        assert seg.label == "N"

    def test_deterministic_given_rng(self):
        a = synth_heart_signal(800, 1.0, np.random.default_rng(7), profile=TOY_PROFILES["AS"])
        b = synth_heart_signal(800, 1.0, np.random.default_rng(7), profile=TOY_PROFILES["AS"])
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_murmur_raises_band_power(self):
        # AS adds systolic energy in 150-320 Hz that a normal signal lacks
        normal = synth_heart_signal(800, 4.0, np.random.default_rng(1), profile=TOY_PROFILES["N"])
        stenosis = synth_heart_signal(800, 4.0, np.random.default_rng(1), profile=TOY_PROFILES["AS"])
        lo, hi = TOY_PROFILES["AS"].murmur_band_hz
        ratio_n = band_power(normal.samples, 800, lo, hi) / band_power(normal.samples, 800, 10, 400)
        ratio_as = band_power(stenosis.samples, 800, lo, hi) / band_power(stenosis.samples, 800, 10, 400)
        assert ratio_as > 2 * ratio_n


class TestMakeToyCorpus:
    def test_counts_labels_ids(self):
        corpus = make_toy_corpus(2, 800, 1.0, seed=3)
        assert len(corpus) == 10
        assert {seg.label for seg in corpus} == set(CLASS_LABELS)
        ids = [seg.source_id for seg in corpus]
        assert len(set(ids)) == len(ids)

    def test_seeded(self):
        a = make_toy_corpus(1, 800, 1.0, seed=3, classes=("N",))
        b = make_toy_corpus(1, 800, 1.0, seed=3, classes=("N",))
        c = make_toy_corpus(1, 800, 1.0, seed=4, classes=("N",))
        np.testing.assert_array_equal(a[0].samples, b[0].samples)
        assert not np.array_equal(a[0].samples, c[0].samples)

    def test_profiles_cover_all_classes(self):
        assert set(TOY_PROFILES) == set(CLASS_LABELS)
