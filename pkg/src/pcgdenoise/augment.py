"""Non-additive distortions and the multi-view generator for noisy-target training.

Views are built op by op in a fixed order (additive noise, then gain
transition, then time mask) so the masked regions are exactly zero in the
final output and the additive part alone hits its SNR target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .noise import draw_bank_noise, gen_colored, SYNTHETIC_KINDS
from .signal_core import AudioSegment, FloatArray


@dataclass(frozen=True)
class AugmentPolicy:
    """Distortion policy: which ops run, how strong, and the master seed."""

    noise_kinds: tuple[str, ...] = ("white", "pink", "red")
    noise_snr_range_db: tuple[float, float] = (0.0, 10.0)
    noise_prob: float = 1.0
    sustained_fraction_range: tuple[float, float] = (0.3, 1.0)
    mask_count: int = 1
    mask_max_fraction: float = 0.1
    mask_prob: float = 0.3
    gain_min_db: float = -6.0
    gain_max_db: float = 6.0
    gain_min_duration_s: float = 0.25
    gain_prob: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("noise_prob", "mask_prob", "gain_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {p}")
        low, high = self.noise_snr_range_db
        if low > high:
            raise DataError(f"noise SNR range is inverted: ({low}, {high})")
        f_low, f_high = self.sustained_fraction_range
        if not (0.0 < f_low <= f_high <= 1.0):
            raise DataError(
                f"sustained fraction range must satisfy 0 < low <= high <= 1, "
                f"got ({f_low}, {f_high})"
            )
        if self.mask_count < 0:
            raise DataError(f"mask_count must be non-negative, got {self.mask_count}")
        if self.mask_count * self.mask_max_fraction > 0.5:
            raise DataError(
                "total maskable fraction exceeds 0.5 "
                f"({self.mask_count} x {self.mask_max_fraction})"
            )
        if self.gain_min_db > self.gain_max_db:
            raise DataError(
                f"gain range is inverted: ({self.gain_min_db}, {self.gain_max_db})"
            )


def time_mask(
    seg: AudioSegment, policy: AugmentPolicy, rng: np.random.Generator
) -> AudioSegment:
    """Zero out policy.mask_count seeded contiguous runs of the segment."""
    out = _mask_array(seg.samples.copy(), policy, rng)
    return seg.with_samples(out)


def _mask_array(
    x: FloatArray, policy: AugmentPolicy, rng: np.random.Generator
) -> FloatArray:
    n = len(x)
    max_len = int(policy.mask_max_fraction * n)
    if policy.mask_count == 0 or max_len < 1:
        return x
    for _ in range(policy.mask_count):
        length = int(rng.integers(1, max_len + 1))
        start = int(rng.integers(0, n - length + 1))
        x[start : start + length] = 0.0
    return x


def gain_transition(
    seg: AudioSegment, policy: AugmentPolicy, rng: np.random.Generator
) -> AudioSegment:
    """Ramp the gain linearly in dB between two seeded levels over a seeded window.

    Samples before the window get the start gain, samples after it the end
    gain. With gain_min_db == gain_max_db == 0 this is the identity.
    """
    out = _gain_array(seg.samples.copy(), seg.sample_rate_hz, policy, rng)
    return seg.with_samples(out)


def _gain_array(
    x: FloatArray, rate_hz: int, policy: AugmentPolicy, rng: np.random.Generator
) -> FloatArray:
    n = len(x)
    g0, g1 = rng.uniform(policy.gain_min_db, policy.gain_max_db, size=2)
    duration_s = n / rate_hz
    win_s = float(rng.uniform(min(policy.gain_min_duration_s, duration_s), duration_s))
    win = max(1, round(win_s * rate_hz))
    win = min(win, n)
    start = int(rng.integers(0, n - win + 1))
    gains_db = np.empty(n)
    gains_db[:start] = g0
    gains_db[start : start + win] = np.linspace(g0, g1, win)
    gains_db[start + win :] = g1
    return x * 10.0 ** (gains_db / 20.0)


def _inject_noise(
    x: FloatArray,
    rate_hz: int,
    policy: AugmentPolicy,
    rng: np.random.Generator,
    noise_bank: dict[str, list[AudioSegment]] | None,
) -> FloatArray:
    """Add a sustained noise burst scaled so the whole-segment SNR equals
    a target drawn from the policy's range."""
    n = len(x)
    kind = policy.noise_kinds[int(rng.integers(0, len(policy.noise_kinds)))]
    target = float(rng.uniform(*policy.noise_snr_range_db))
    fraction = float(rng.uniform(*policy.sustained_fraction_range))
    burst_len = max(1, round(fraction * n))
    burst_start = int(rng.integers(0, n - burst_len + 1))

    if kind in SYNTHETIC_KINDS:
        noise_seed = int(rng.integers(0, 2**63 - 1))
        burst = gen_colored(kind, burst_len, rate_hz, noise_seed).samples
    else:
        if not noise_bank or kind not in noise_bank:
            raise DataError(f"policy requires noise bank for kind {kind!r}")
        burst = draw_bank_noise(noise_bank[kind], burst_len, rng).samples

    noise_full = np.zeros(n)
    noise_full[burst_start : burst_start + burst_len] = burst
    sig_power = float(np.sum(x * x))
    noise_power = float(np.sum(noise_full * noise_full))
    if sig_power == 0.0 or noise_power == 0.0:
        return x
    alpha = float(np.sqrt(sig_power / noise_power * 10.0 ** (-target / 10.0)))
    return x + alpha * noise_full


def distort(
    seg: AudioSegment,
    policy: AugmentPolicy,
    rng: np.random.Generator,
    noise_bank: dict[str, list[AudioSegment]] | None = None,
) -> AudioSegment:
    """One distorted version of seg: noise, then gain transition, then mask."""
    x = seg.samples.copy()
    if policy.noise_kinds and rng.random() < policy.noise_prob:
        x = _inject_noise(x, seg.sample_rate_hz, policy, rng, noise_bank)
    if rng.random() < policy.gain_prob:
        x = _gain_array(x, seg.sample_rate_hz, policy, rng)
    if rng.random() < policy.mask_prob:
        x = _mask_array(x, policy, rng)
    return seg.with_samples(x)


def make_views(
    seg: AudioSegment,
    policy: AugmentPolicy,
    k: int = 2,
    rng: np.random.Generator | None = None,
    noise_bank: dict[str, list[AudioSegment]] | None = None,
) -> list[AudioSegment]:
    """k independently distorted versions of seg, deterministic given the rng.

    With rng omitted, the stream starts from policy.seed, so the same
    (segment, policy) pair always yields the same views.
    """
    if k < 1:
        raise DataError(f"view count must be at least 1, got {k}")
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    return [distort(seg, policy, rng, noise_bank) for _ in range(k)]
