import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import welch

from pcgdenoise.errors import DataError
from pcgdenoise.noise import (
    SYNTHETIC_KINDS,
    NoiseSpec,
    draw_bank_noise,
    fit_noise_length,
    gen_colored,
    load_noise_bank,
    mix_at_snr,
)
from pcgdenoise.signal_core import AudioSegment, snr_db, write_wav

# ideal power-law exponents: S(f) ~ f^slope
EXPECTED_SLOPE = {"white": 0.0, "pink": -1.0, "red": -2.0}


def psd_slope_db_per_decade(samples: np.ndarray, rate_hz: int) -> float:
    """Log-log regression of the Welch PSD between 20 Hz and 0.4*rate."""
    freqs, psd = welch(samples, fs=rate_hz, nperseg=4096)
    band = (freqs >= 20.0) & (freqs <= 0.4 * rate_hz)
    coeffs = np.polyfit(np.log10(freqs[band]), 10.0 * np.log10(psd[band]), 1)
    return float(coeffs[0])


class TestGenColored:
    @pytest.mark.parametrize("kind", SYNTHETIC_KINDS)
    def test_unit_rms_and_zero_mean(self, kind):
        seg = gen_colored(kind, 2**14, 2000, seed=3)
        assert np.sqrt(np.mean(seg.samples**2)) == pytest.approx(1.0, abs=1e-12)
        assert np.mean(seg.samples) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("kind", SYNTHETIC_KINDS)
    def test_seed_determinism(self, kind):
        a = gen_colored(kind, 4096, 2000, seed=7)
        b = gen_colored(kind, 4096, 2000, seed=7)
        c = gen_colored(kind, 4096, 2000, seed=8)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    @pytest.mark.parametrize("kind", SYNTHETIC_KINDS)
    def test_psd_slope_near_ideal(self, kind):
        # per-kind slope in dB/decade: white 0, pink -10, red -20
        slope = psd_slope_db_per_decade(gen_colored(kind, 2**15, 2000, seed=1).samples, 2000)
        assert slope == pytest.approx(10.0 * EXPECTED_SLOPE[kind], abs=1.5)

    def test_rejects_bad_args(self):
        with pytest.raises(DataError):
            gen_colored("blue", 100, 2000, seed=0)
        with pytest.raises(DataError):
            gen_colored("white", 0, 2000, seed=0)


class TestNoiseSpec:
    def test_file_kind_requires_ref(self):
        with pytest.raises(DataError):
            NoiseSpec(kind="file", target_snr_db=0.0)
        spec = NoiseSpec(kind="file", target_snr_db=0.0, file_ref="hospital")
        assert spec.display_kind == "hospital"
        assert NoiseSpec(kind="pink", target_snr_db=5.0).display_kind == "pink"

    def test_unknown_kind(self):
        with pytest.raises(DataError):
            NoiseSpec(kind="brown", target_snr_db=0.0)


class TestFitNoiseLength:
    def test_equal_length_passthrough(self):
        x = np.arange(8.0)
        assert fit_noise_length(x, 8, np.random.default_rng(0)) is x

    @given(m=st.integers(min_value=1, max_value=50), n=st.integers(min_value=1, max_value=200))
    @settings(max_examples=60, deadline=None)
    def test_output_length_and_content(self, m, n):
        rng = np.random.default_rng(5)
        noise = np.random.default_rng(m).standard_normal(m)
        out = fit_noise_length(noise, n, rng)
        assert len(out) == n
        # every output sample comes from the tiled source
        tiled = np.tile(noise, -(-max(n, m) // m) + 1)
        assert all(np.isin(out, tiled))


class TestMixAtSnr:
    @given(
        target=st.floats(min_value=-20.0, max_value=30.0),
        seed=st.integers(min_value=0, max_value=1000),
    )
    @settings(max_examples=100, deadline=None)
    def test_achieved_snr_matches_target(self, target, seed):
        rng = np.random.default_rng(seed)
        sig = AudioSegment(samples=rng.standard_normal(800) + 0.5, sample_rate_hz=800)
        noise = gen_colored("pink", 800, 800, seed=seed + 1)
        mixed = mix_at_snr(sig, noise, target)
        assert snr_db(sig, mixed) == pytest.approx(target, abs=1e-9)

    def test_length_mismatch_needs_rng(self, toy_segment):
        short = gen_colored("white", 100, toy_segment.sample_rate_hz, seed=0)
        with pytest.raises(DataError):
            mix_at_snr(toy_segment, short, 5.0)
        mixed = mix_at_snr(toy_segment, short, 5.0, rng=np.random.default_rng(2))
        assert snr_db(toy_segment, mixed) == pytest.approx(5.0, abs=1e-9)

    def test_zero_signal_or_noise(self, toy_segment):
        n = len(toy_segment.samples)
        rate = toy_segment.sample_rate_hz
        zero = AudioSegment(samples=np.zeros(n), sample_rate_hz=rate)
        with pytest.raises(DataError):
            mix_at_snr(zero, toy_segment, 0.0)
        with pytest.raises(DataError):
            mix_at_snr(toy_segment, zero, 0.0)


class TestNoiseBank:
    @pytest.fixture
    def bank_root(self, tmp_path):
        kind_dir = tmp_path / "hospital"
        kind_dir.mkdir()
        for i in range(3):
            seg = gen_colored("white", 1600, 800, seed=i)
            write_wav(kind_dir / f"amb_{i}.wav", seg.with_samples(seg.samples / 4.0))
        (kind_dir / "broken.wav").write_bytes(b"not a wav file")
        return tmp_path

    def test_load_and_skip(self, bank_root):
        bank, skipped = load_noise_bank(bank_root, "hospital", 800)
        assert len(bank) == 3
        assert len(skipped) == 1 and "broken.wav" in skipped[0]
        # loaded segments are normalized to the pipeline rate and peak 1
        assert all(seg.sample_rate_hz == 800 for seg in bank)
        assert all(np.max(np.abs(seg.samples)) == pytest.approx(1.0) for seg in bank)

    def test_resamples_to_target(self, bank_root):
        bank, _ = load_noise_bank(bank_root, "hospital", 2000)
        assert all(seg.sample_rate_hz == 2000 for seg in bank)
        assert all(len(seg.samples) == 4000 for seg in bank)

    def test_missing_dir_and_empty_dir(self, tmp_path):
        with pytest.raises(DataError):
            load_noise_bank(tmp_path, "lung", 800)
        (tmp_path / "lung").mkdir()
        with pytest.raises(DataError):
            load_noise_bank(tmp_path, "lung", 800)

    def test_draw_is_seeded(self, bank_root):
        bank, _ = load_noise_bank(bank_root, "hospital", 800)
        a = draw_bank_noise(bank, 500, np.random.default_rng(9))
        b = draw_bank_noise(bank, 500, np.random.default_rng(9))
        np.testing.assert_array_equal(a.samples, b.samples)
        assert len(a.samples) == 500
        with pytest.raises(DataError):
            draw_bank_noise([], 10, np.random.default_rng(0))
