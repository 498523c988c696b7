"""Core audio types, resampling, segmentation, normalization, and the SNR metric.

All operations are pure functions of their inputs and safe to call from
multiple workers. Samples are float64 numpy arrays normalized to [-1, 1].
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import numpy.typing as npt
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError

CLASS_LABELS = ("N", "AS", "MS", "MR", "MVP")

FloatArray = npt.NDArray[np.float64]


def derive_seed(*parts: int) -> int:
    """Deterministic 63-bit seed from an integer tuple (platform independent).

    Used to give every random consumer (augmentation, dropout, shuffling,
    splits) its own substream of the single master seed.
    """
    ss = np.random.SeedSequence(list(parts))
    return int(ss.generate_state(1, np.uint64)[0] & np.uint64(0x7FFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class AudioSegment:
    """A fixed-rate mono amplitude sequence with provenance.

    samples are dimensionless amplitudes; after normalization the peak
    magnitude is at most 1. offset_s records the position of this segment
    inside its source recording.
    """

    samples: FloatArray
    sample_rate_hz: int
    source_id: str = ""
    offset_s: float = 0.0
    label: str | None = None

    def __post_init__(self) -> None:
        samples = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise DataError("segment must contain a non-empty 1D sample array")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"segment {self.source_id!r} contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.offset_s < 0:
            raise DataError(f"offset must be non-negative, got {self.offset_s}")
        if self.label is not None and self.label not in CLASS_LABELS:
            raise DataError(f"unknown class label {self.label!r}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def with_samples(self, samples: FloatArray) -> "AudioSegment":
        return replace(self, samples=samples)


@dataclass(frozen=True)
class SegmentationParams:
    """Sliding-window segmentation: window length, hop, and pipeline rate."""

    segment_len_s: float = 1.5
    hop_s: float = 0.08
    target_rate_hz: int = 2000

    def __post_init__(self) -> None:
        if not (0 < self.hop_s <= self.segment_len_s):
            raise DataError(
                f"hop must satisfy 0 < hop <= segment length, got hop={self.hop_s}, "
                f"length={self.segment_len_s}"
            )
        if self.target_rate_hz <= 0:
            raise DataError(f"target rate must be positive, got {self.target_rate_hz}")


def resampled_length(n: int, rate_hz: int, target_rate_hz: int) -> int:
    """Output length of resample() for an n-sample input, without resampling."""
    if rate_hz == target_rate_hz:
        return n
    g = math.gcd(target_rate_hz, rate_hz)
    up, down = target_rate_hz // g, rate_hz // g
    return -(-n * up // down)  # ceil division, matches polyphase output length


def resample(seg: AudioSegment, target_rate_hz: int) -> AudioSegment:
    """Band-limited polyphase resampling to target_rate_hz.

    An anti-aliasing low-pass is applied before decimation, so no content
    above the target Nyquist survives. Identity when rates already match.
    """
    if target_rate_hz <= 0:
        raise DataError(f"target rate must be positive, got {target_rate_hz}")
    if seg.sample_rate_hz == target_rate_hz:
        return seg
    g = math.gcd(target_rate_hz, seg.sample_rate_hz)
    up, down = target_rate_hz // g, seg.sample_rate_hz // g
    out = resample_poly(seg.samples, up, down)
    return AudioSegment(
        samples=np.asarray(out, dtype=np.float64),
        sample_rate_hz=target_rate_hz,
        source_id=seg.source_id,
        offset_s=seg.offset_s,
        label=seg.label,
    )


def segment_layout(
    n_samples: int, rate_hz: int, p: SegmentationParams
) -> list[tuple[int, int]]:
    """(start, length) sample windows for a recording already at the target rate.

    Count follows floor((duration - window) / hop) + 1; the trailing
    remainder shorter than a full window is discarded.
    """
    duration_s = n_samples / rate_hz
    win = round(p.segment_len_s * rate_hz)
    if win <= 0 or duration_s + 1e-9 < p.segment_len_s:
        return []
    count = math.floor((duration_s - p.segment_len_s) / p.hop_s + 1e-9) + 1
    out = []
    for i in range(count):
        start = round(i * p.hop_s * rate_hz)
        start = min(start, n_samples - win)  # guard against rounding past the end
        out.append((start, win))
    return out


def segment(seg: AudioSegment, p: SegmentationParams) -> list[AudioSegment]:
    """Slice a recording into fixed-length overlapping windows.

    A recording shorter than one window yields an empty list and a warning,
    not an exception.
    """
    layout = segment_layout(len(seg.samples), seg.sample_rate_hz, p)
    if not layout:
        warnings.warn(
            f"recording {seg.source_id!r} ({seg.duration_s:.3f} s) is shorter than "
            f"one {p.segment_len_s} s window; skipped",
            stacklevel=2,
        )
        return []
    rate = seg.sample_rate_hz
    return [
        AudioSegment(
            samples=seg.samples[start : start + win].copy(),
            sample_rate_hz=rate,
            source_id=seg.source_id,
            offset_s=seg.offset_s + start / rate,
            label=seg.label,
        )
        for start, win in layout
    ]


def normalize(seg: AudioSegment) -> AudioSegment:
    """Peak-normalize so max |sample| == 1.0; all-zero input stays all-zero."""
    peak = float(np.max(np.abs(seg.samples)))
    if peak == 0.0:
        return seg.with_samples(seg.samples.copy())
    return seg.with_samples(seg.samples / peak)


def pad_center(x: FloatArray, target_len: int) -> tuple[FloatArray, tuple[int, int]]:
    """Zero-pad symmetrically to target_len; returns (padded, (left, right))."""
    n = len(x)
    if n > target_len:
        raise DataError(f"cannot pad length {n} down to {target_len}")
    left = (target_len - n) // 2
    right = target_len - n - left
    return np.pad(x, (left, right)), (left, right)


def crop_center(y: FloatArray, pads: tuple[int, int]) -> FloatArray:
    """Inverse of pad_center: strip the (left, right) zero padding."""
    left, right = pads
    return y[left : len(y) - right] if right else y[left:]


def snr_db(reference: AudioSegment, test: AudioSegment) -> float:
    """10*log10(sum(ref^2) / sum((test - ref)^2)); +inf when test == ref."""
    if len(reference.samples) != len(test.samples):
        raise DataError(
            f"length mismatch: reference {len(reference.samples)} vs "
            f"test {len(test.samples)}"
        )
    if reference.sample_rate_hz != test.sample_rate_hz:
        raise DataError(
            f"sample rate mismatch: {reference.sample_rate_hz} vs {test.sample_rate_hz}"
        )
    ref = reference.samples
    sig_power = float(np.sum(ref * ref))
    if sig_power == 0.0:
        raise DataError("reference signal is all-zero")
    residual = test.samples - ref
    noise_power = float(np.sum(residual * residual))
    if noise_power == 0.0:
        return math.inf
    return 10.0 * math.log10(sig_power / noise_power)


def read_wav(path, source_id: str | None = None, label: str | None = None) -> AudioSegment:
    """Read a mono WAV file (16-bit PCM or 32-bit float) into an AudioSegment."""
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise DataError(f"cannot decode WAV file {path}: {exc}") from exc
    data = np.asarray(data)
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported WAV sample format {data.dtype}")
    return AudioSegment(
        samples=samples,
        sample_rate_hz=int(rate),
        source_id=source_id if source_id is not None else str(path),
        label=label,
    )


def write_wav(path, seg: AudioSegment, fmt: str = "float32") -> None:
    """Write a segment as mono WAV, either 32-bit float or 16-bit PCM."""
    if fmt == "float32":
        data = seg.samples.astype(np.float32)
    elif fmt == "int16":
        clipped = np.clip(seg.samples, -1.0, 1.0)
        data = np.round(clipped * 32767.0).astype(np.int16)
    else:
        raise DataError(f"unsupported WAV output format {fmt!r}")
    wavfile.write(path, seg.sample_rate_hz, data)
