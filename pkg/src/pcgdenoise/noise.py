"""Calibrated noise: colored-noise synthesis, noise banks, and exact-SNR mixing."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .signal_core import AudioSegment, FloatArray, normalize, read_wav, resample

log = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("white", "pink", "red")


@dataclass(frozen=True)
class NoiseSpec:
    """Declarative noise injection: what kind, how loud, and which seed."""

    kind: str
    target_snr_db: float
    seed: int = 0
    file_ref: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "file":
            if not self.file_ref:
                raise DataError("file noise requires a file_ref")
        elif self.kind not in SYNTHETIC_KINDS:
            raise DataError(f"unknown noise kind {self.kind!r}")

    @property
    def display_kind(self) -> str:
        """Row label used in reports: the bank label for file noise."""
        return self.file_ref if self.kind == "file" else self.kind


def gen_colored(kind: str, n: int, rate_hz: int, seed: int) -> AudioSegment:
    """Seeded zero-mean colored noise with unit RMS.

    Spectral shaping of white Gaussian noise: flat for white, 1/sqrt(f)
    amplitude for pink (1/f power), 1/f amplitude for red (1/f^2 power).
    The DC bin is zeroed. Output is a pure function of (kind, n, rate, seed).
    """
    if n <= 0:
        raise DataError(f"sample count must be positive, got {n}")
    if kind not in SYNTHETIC_KINDS:
        raise DataError(f"unknown noise kind {kind!r}")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    if kind == "white":
        mask = np.ones_like(freqs)
    elif kind == "pink":
        with np.errstate(divide="ignore"):
            mask = 1.0 / np.sqrt(freqs)
    else:  # red
        with np.errstate(divide="ignore"):
            mask = 1.0 / freqs
    mask[0] = 0.0  # zero mean
    samples = np.fft.irfft(spectrum * mask, n)
    rms = float(np.sqrt(np.mean(samples**2)))
    if rms > 0:
        samples = samples / rms
    return AudioSegment(
        samples=samples,
        sample_rate_hz=rate_hz,
        source_id=f"{kind}-noise seed={seed}",
    )


def fit_noise_length(
    noise: FloatArray, n: int, rng: np.random.Generator
) -> FloatArray:
    """Tile noise shorter than n, then crop n samples at a seeded offset."""
    if len(noise) == n:
        return noise
    if len(noise) < n:
        reps = -(-n // len(noise))
        noise = np.tile(noise, reps)
    offset = int(rng.integers(0, len(noise) - n + 1))
    return noise[offset : offset + n]


def mix_at_snr(
    signal: AudioSegment,
    noise: AudioSegment,
    target_snr_db: float,
    rng: np.random.Generator | None = None,
) -> AudioSegment:
    """signal + alpha*noise with alpha chosen so the realized SNR equals target.

    alpha = sqrt((sum s^2 / sum n^2) * 10^(-target/10)). Noise of a different
    length is tiled/cropped at an offset drawn from rng; equal lengths need
    no rng.
    """
    sig = signal.samples
    nz = noise.samples
    if len(nz) != len(sig):
        if rng is None:
            raise DataError(
                "noise length differs from signal length and no rng was provided "
                "for seeded crop/loop alignment"
            )
        nz = fit_noise_length(nz, len(sig), rng)
    sig_power = float(np.sum(sig * sig))
    noise_power = float(np.sum(nz * nz))
    if sig_power == 0.0:
        raise DataError("cannot mix noise into an all-zero signal")
    if noise_power == 0.0:
        raise DataError("cannot mix all-zero noise")
    alpha = float(np.sqrt(sig_power / noise_power * 10.0 ** (-target_snr_db / 10.0)))
    return signal.with_samples(sig + alpha * nz)


def load_noise_bank(
    root, kind_label: str, target_rate_hz: int
) -> tuple[list[AudioSegment], list[str]]:
    """Load every WAV under <root>/<kind_label>/ at the pipeline rate.

    Unreadable files are skipped with a warning; the skip report (one line
    per skipped file) is returned alongside the loaded segments.
    """
    bank_dir = Path(root) / kind_label
    if not bank_dir.is_dir():
        raise DataError(f"noise bank directory not found: {bank_dir}")
    paths = sorted(bank_dir.glob("*.wav"))
    if not paths:
        raise DataError(f"no noise files found in {bank_dir}")
    segments: list[AudioSegment] = []
    skipped: list[str] = []
    for path in paths:
        try:
            seg = read_wav(path, source_id=f"{kind_label}/{path.name}")
        except DataError as exc:
            log.warning("skipping noise file %s: %s", path, exc)
            skipped.append(f"{path}: {exc}")
            continue
        seg = normalize(resample(seg, target_rate_hz))
        segments.append(seg)
    if not segments:
        raise DataError(f"no readable noise files in {bank_dir}")
    return segments, skipped


def draw_bank_noise(
    bank: list[AudioSegment], n: int, rng: np.random.Generator
) -> AudioSegment:
    """Pick one bank recording and fit it to n samples, all seeded by rng."""
    if not bank:
        raise DataError("noise bank is empty")
    idx = int(rng.integers(0, len(bank)))
    chosen = bank[idx]
    samples = fit_noise_length(chosen.samples, n, rng)
    if not np.any(samples):
        # pathological silent slice; fall back to the full recording tiled
        samples = fit_noise_length(chosen.samples, n, np.random.default_rng(0))
    return AudioSegment(
        samples=samples.copy(),
        sample_rate_hz=chosen.sample_rate_hz,
        source_id=chosen.source_id,
    )
