"""Synthetic heart-sound-like signals for desk-scale benchmarks and tests.

Each class is a periodic train of two windowed tone bursts (the S1/S2
analogue) plus an optional murmur-like component that distinguishes the
abnormal classes. Nothing here is clinical; the point is a controllable,
labelled corpus with the right gross structure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import AudioSegment, CLASS_LABELS, normalize


@dataclass(frozen=True)
class PulseProfile:
    s1_freq_hz: float = 45.0
    s1_width_s: float = 0.10
    s2_freq_hz: float = 70.0
    s2_width_s: float = 0.08
    systole_s: float = 0.30
    cycle_s: float = 0.80
    murmur: str | None = None  # systolic | diastolic | holosystolic | click
    murmur_band_hz: tuple[float, float] = (120.0, 280.0)
    murmur_level: float = 0.5


TOY_PROFILES: dict[str, PulseProfile] = {
    "N": PulseProfile(),
    "AS": PulseProfile(murmur="systolic", murmur_band_hz=(150.0, 320.0), murmur_level=0.7),
    "MS": PulseProfile(murmur="diastolic", murmur_band_hz=(25.0, 90.0), murmur_level=0.6),
    "MR": PulseProfile(murmur="holosystolic", murmur_band_hz=(100.0, 240.0), murmur_level=0.5),
    "MVP": PulseProfile(murmur="click", murmur_band_hz=(180.0, 260.0), murmur_level=0.9),
}


def _burst(t: np.ndarray, center_s: float, width_s: float, freq_hz: float, phase: float) -> np.ndarray:
    """Hann-windowed tone burst centered at center_s."""
    half = width_s / 2.0
    window = np.where(
        np.abs(t - center_s) <= half,
        0.5 * (1.0 + np.cos(np.pi * (t - center_s) / half)),
        0.0,
    )
    return window * np.sin(2.0 * np.pi * freq_hz * (t - center_s) + phase)


def _tone_cluster(
    t: np.ndarray, band: tuple[float, float], rng: np.random.Generator
) -> np.ndarray:
    """Three random-phase tones spread across the band, unit RMS.

    A tonal carrier (rather than band-limited noise) keeps the murmur
    distinguishable after denoising, which is what the degradation study
    needs to measure.
    """
    freqs = np.linspace(band[0], band[1], 5)[1:-1]
    out = np.zeros(len(t))
    for f in freqs:
        out += np.sin(2.0 * np.pi * f * t + float(rng.uniform(0, 2 * np.pi)))
    rms = float(np.sqrt(np.mean(out**2)))
    return out / rms if rms > 0 else out


def synth_heart_signal(
    rate_hz: int,
    duration_s: float,
    rng: np.random.Generator,
    profile: PulseProfile = TOY_PROFILES["N"],
    label: str | None = None,
    source_id: str = "synthetic",
) -> AudioSegment:
    """One peak-normalized recording: jittered S1/S2 bursts plus murmur."""
    n = round(duration_s * rate_hz)
    t = np.arange(n) / rate_hz
    x = np.zeros(n)
    start = -float(rng.uniform(0.0, profile.cycle_s))  # random cycle phase
    while start < duration_s:
        cycle = profile.cycle_s * float(rng.uniform(0.95, 1.05))
        s1_amp = float(rng.uniform(0.8, 1.0))
        s2_amp = float(rng.uniform(0.55, 0.8))
        s1_center = start + 0.05
        s2_center = start + 0.05 + profile.systole_s
        x += s1_amp * _burst(t, s1_center, profile.s1_width_s, profile.s1_freq_hz, float(rng.uniform(0, 2 * np.pi)))
        x += s2_amp * _burst(t, s2_center, profile.s2_width_s, profile.s2_freq_hz, float(rng.uniform(0, 2 * np.pi)))
        if profile.murmur is not None:
            x += _murmur(t, start, cycle, profile, rng)
        start += cycle
    seg = AudioSegment(samples=x, sample_rate_hz=rate_hz, source_id=source_id, label=label)
    return normalize(seg)


def _murmur(
    t: np.ndarray,
    cycle_start: float,
    cycle_s: float,
    profile: PulseProfile,
    rng: np.random.Generator,
) -> np.ndarray:
    n = len(t)
    s1_end = cycle_start + 0.05 + profile.s1_width_s / 2
    s2_center = cycle_start + 0.05 + profile.systole_s
    if profile.murmur == "click":
        center = (s1_end + s2_center) / 2.0
        return profile.murmur_level * _burst(
            t, center, 0.03, sum(profile.murmur_band_hz) / 2.0, float(rng.uniform(0, 2 * np.pi))
        )
    if profile.murmur == "systolic":
        span = (s1_end, s2_center - profile.s2_width_s / 2)
        shape = "diamond"
    elif profile.murmur == "diastolic":
        span = (s2_center + profile.s2_width_s / 2, cycle_start + cycle_s)
        shape = "decay"
    else:  # holosystolic
        span = (s1_end, s2_center)
        shape = "flat"
    lo = np.searchsorted(t, span[0])
    hi = np.searchsorted(t, span[1])
    if hi - lo < 8:
        return np.zeros(n)
    carrier = _tone_cluster(t[lo:hi], profile.murmur_band_hz, rng)
    w = np.linspace(0.0, 1.0, hi - lo)
    if shape == "diamond":
        envelope = 1.0 - np.abs(2.0 * w - 1.0)
    elif shape == "decay":
        envelope = np.exp(-3.0 * w)
    else:
        envelope = np.ones(hi - lo)
    out = np.zeros(n)
    out[lo:hi] = profile.murmur_level * 0.4 * envelope * carrier
    return out


def make_toy_corpus(
    n_per_class: int,
    rate_hz: int,
    duration_s: float,
    seed: int,
    classes: tuple[str, ...] = CLASS_LABELS,
) -> list[AudioSegment]:
    """Labelled synthetic recordings, n_per_class for each requested class."""
    rng = np.random.default_rng(seed)
    out = []
    for label in classes:
        profile = TOY_PROFILES[label]
        for i in range(n_per_class):
            out.append(
                synth_heart_signal(
                    rate_hz,
                    duration_s,
                    rng,
                    profile=profile,
                    label=label,
                    source_id=f"toy/{label}/{i:03d}",
                )
            )
    return out
