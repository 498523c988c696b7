"""Dataset inventory, split manifests, and the decoded-recording cache.

Splits are stratified per class and assigned per recording, so no source
file contributes segments to more than one split. Manifests are JSON-lines
files (one header object, then one object per segment) and are byte-stable
for a given dataset, parameters, and seed.

The cache is content-addressed: entries are keyed on the source file's
SHA-256 plus the target rate, and they store the decoded, resampled,
peak-normalized recording as raw float64. Enabling or disabling the cache
never changes any downstream value.
"""
from __future__ import annotations

import hashlib
import json
import logging
import struct
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, IntegrityError
from .signal_core import (
    CLASS_LABELS,
    AudioSegment,
    FloatArray,
    SegmentationParams,
    derive_seed,
    normalize,
    read_wav,
    resample,
    resampled_length,
    segment_layout,
)

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "pcgdenoise-manifest"
MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")

_CACHE_MAGIC = b"PCGCACHE"
_CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<8sII Q 64s")


def file_checksum(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class DatasetSpec:
    """Where the corpus lives: one subdirectory of WAV files per class."""

    root: Path
    class_labels: tuple[str, ...] = CLASS_LABELS
    expected_per_class: int | None = None


@dataclass(frozen=True)
class RecordingInfo:
    source_id: str
    path: str  # relative to the dataset root
    label: str
    checksum: str
    n_samples: int
    sample_rate_hz: int


def scan(spec: DatasetSpec) -> list[RecordingInfo]:
    """Inventory every recording under the dataset root.

    Class directories must exist; a class count differing from
    expected_per_class is only a warning.
    """
    root = Path(spec.root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    out: list[RecordingInfo] = []
    for label in spec.class_labels:
        class_dir = root / label
        if not class_dir.is_dir():
            raise DataError(f"missing class directory {class_dir}")
        files = sorted(class_dir.glob("*.wav"))
        if spec.expected_per_class is not None and len(files) != spec.expected_per_class:
            warnings.warn(
                f"class {label!r} has {len(files)} recordings, "
                f"expected {spec.expected_per_class}",
                stacklevel=2,
            )
        for path in files:
            seg = read_wav(path)
            out.append(
                RecordingInfo(
                    source_id=f"{label}/{path.stem}",
                    path=str(path.relative_to(root)),
                    label=label,
                    checksum=file_checksum(path),
                    n_samples=len(seg.samples),
                    sample_rate_hz=seg.sample_rate_hz,
                )
            )
    if not out:
        raise DataError(f"no recordings found under {root}")
    return out


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    path: str
    label: str
    split: str
    checksum: str
    offset_s: float
    duration_s: float


@dataclass(frozen=True)
class Manifest:
    root: str
    target_rate_hz: int
    segment_len_s: float
    hop_s: float
    seed: int
    ratios: tuple[float, float, float]
    entries: tuple[ManifestEntry, ...]

    def entries_for(self, split: str) -> list[ManifestEntry]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def validate(self) -> None:
        """Reject split leakage and malformed entries."""
        seen: dict[str, str] = {}
        for e in self.entries:
            if e.split not in SPLITS:
                raise DataError(f"entry {e.source_id!r} has unknown split {e.split!r}")
            prior = seen.setdefault(e.source_id, e.split)
            if prior != e.split:
                raise DataError(
                    f"split leakage: {e.source_id!r} appears in both "
                    f"{prior!r} and {e.split!r}"
                )
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise DataError(f"split ratios {self.ratios} do not sum to 1")


def _largest_remainder_counts(n: int, ratios: tuple[float, float, float]) -> list[int]:
    raw = [r * n for r in ratios]
    counts = [int(v) for v in raw]
    order = sorted(range(len(ratios)), key=lambda i: (raw[i] - counts[i], -i), reverse=True)
    for i in range(n - sum(counts)):
        counts[order[i % len(ratios)]] += 1
    return counts


def build_manifest(
    recordings: list[RecordingInfo],
    root: str | Path,
    params: SegmentationParams,
    ratios: tuple[float, float, float],
    seed: int,
) -> Manifest:
    """Stratified per-recording split, then expansion into segment windows."""
    if not recordings:
        raise DataError("cannot build a manifest from an empty inventory")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios {ratios} must sum to 1")
    by_label: dict[str, list[RecordingInfo]] = {}
    for rec in recordings:
        by_label.setdefault(rec.label, []).append(rec)
    split_of: dict[str, str] = {}
    for label_index, label in enumerate(sorted(by_label)):
        group = sorted(by_label[label], key=lambda r: r.source_id)
        rng = np.random.default_rng(derive_seed(seed, label_index, 23))
        order = rng.permutation(len(group))
        counts = _largest_remainder_counts(len(group), ratios)
        cursor = 0
        for split, count in zip(SPLITS, counts):
            for idx in order[cursor : cursor + count]:
                split_of[group[idx].source_id] = split
            cursor += count
    entries: list[ManifestEntry] = []
    for rec in recordings:
        n_resampled = resampled_length(rec.n_samples, rec.sample_rate_hz, params.target_rate_hz)
        layout = segment_layout(n_resampled, params.target_rate_hz, params)
        if not layout:
            warnings.warn(
                f"recording {rec.source_id!r} is shorter than one window; skipped",
                stacklevel=2,
            )
            continue
        for start, _win in layout:
            entries.append(
                ManifestEntry(
                    source_id=rec.source_id,
                    path=rec.path,
                    label=rec.label,
                    split=split_of[rec.source_id],
                    checksum=rec.checksum,
                    offset_s=start / params.target_rate_hz,
                    duration_s=params.segment_len_s,
                )
            )
    entries.sort(key=lambda e: (e.source_id, e.offset_s))
    manifest = Manifest(
        root=str(Path(root).resolve()),
        target_rate_hz=params.target_rate_hz,
        segment_len_s=params.segment_len_s,
        hop_s=params.hop_s,
        seed=seed,
        ratios=tuple(ratios),
        entries=tuple(entries),
    )
    manifest.validate()
    return manifest


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "root": manifest.root,
        "target_rate_hz": manifest.target_rate_hz,
        "segment_len_s": manifest.segment_len_s,
        "hop_s": manifest.hop_s,
        "seed": manifest.seed,
        "ratios": list(manifest.ratios),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for e in manifest.entries:
            fh.write(json.dumps(e.__dict__, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    try:
        with open(path) as fh:
            lines = [line.strip() for line in fh if line.strip()]
        header = json.loads(lines[0])
        if header.get("format") != MANIFEST_FORMAT:
            raise DataError(f"{path} is not a {MANIFEST_FORMAT} file")
        if header.get("version") != MANIFEST_VERSION:
            raise DataError(
                f"manifest version {header.get('version')!r} is not supported "
                f"(expected {MANIFEST_VERSION})"
            )
        entries = tuple(ManifestEntry(**json.loads(line)) for line in lines[1:])
        manifest = Manifest(
            root=header["root"],
            target_rate_hz=int(header["target_rate_hz"]),
            segment_len_s=float(header["segment_len_s"]),
            hop_s=float(header["hop_s"]),
            seed=int(header["seed"]),
            ratios=tuple(header["ratios"]),
            entries=entries,
        )
    except DataError:
        raise
    except (IndexError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from exc
    manifest.validate()
    return manifest


class SegmentCache:
    """Content-addressed store of decoded recordings at a given rate.

    Each entry holds the float64 samples of one resampled, peak-normalized
    recording. Entries are written atomically (temp file + rename), so a
    crashed writer never leaves a partial entry visible. An unreadable
    entry is treated as a miss and rebuilt.
    """

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _entry_path(self, checksum: str, rate_hz: int) -> Path:
        return self.directory / f"{checksum}_{rate_hz}.f64"

    def get(self, checksum: str, rate_hz: int) -> FloatArray | None:
        path = self._entry_path(checksum, rate_hz)
        if not path.exists():
            return None
        try:
            blob = path.read_bytes()
            magic, version, rate, n, stored = _CACHE_HEADER.unpack_from(blob)
            if (
                magic != _CACHE_MAGIC
                or version != _CACHE_VERSION
                or rate != rate_hz
                or stored.decode("ascii") != checksum
            ):
                raise ValueError("header mismatch")
            data = np.frombuffer(blob, dtype="<f8", offset=_CACHE_HEADER.size)
            if len(data) != n:
                raise ValueError(f"expected {n} samples, found {len(data)}")
            return data.copy()
        except (ValueError, struct.error, UnicodeDecodeError) as exc:
            log.warning("discarding unreadable cache entry %s: %s", path, exc)
            return None

    def put(self, checksum: str, rate_hz: int, samples: FloatArray) -> None:
        samples = np.ascontiguousarray(samples, dtype="<f8")
        header = _CACHE_HEADER.pack(
            _CACHE_MAGIC, _CACHE_VERSION, rate_hz, len(samples), checksum.encode("ascii")
        )
        fd, tmp_name = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        tmp = Path(tmp_name)
        try:
            with open(fd, "wb") as fh:
                fh.write(header)
                fh.write(samples.tobytes())
            tmp.replace(self._entry_path(checksum, rate_hz))
        finally:
            tmp.unlink(missing_ok=True)


def load_recording(
    path: str | Path,
    target_rate_hz: int,
    expected_checksum: str | None = None,
    cache: SegmentCache | None = None,
) -> FloatArray:
    """Decoded, resampled, peak-normalized samples of one recording.

    On a cache hit the source file is not touched: the checksum in the
    manifest pins the exact content the entry was built from. On a miss the
    file's checksum is verified first, so a modified file raises an
    integrity error instead of silently flowing downstream.
    """
    if cache is not None and expected_checksum is not None:
        hit = cache.get(expected_checksum, target_rate_hz)
        if hit is not None:
            return hit
    path = Path(path)
    if not path.exists():
        raise DataError(f"recording not found: {path}")
    if expected_checksum is not None:
        actual = file_checksum(path)
        if actual != expected_checksum:
            raise IntegrityError(
                f"checksum mismatch for {path}: manifest has {expected_checksum[:12]}..., "
                f"file is {actual[:12]}... (was the file modified after prepare?)"
            )
    seg = read_wav(path)
    seg = normalize(resample(seg, target_rate_hz))
    if cache is not None and expected_checksum is not None:
        cache.put(expected_checksum, target_rate_hz, seg.samples)
    return seg.samples


def load_segment(
    manifest: Manifest, entry: ManifestEntry, cache: SegmentCache | None = None
) -> AudioSegment:
    """Materialize one manifest entry as a peak-normalized segment."""
    rate = manifest.target_rate_hz
    samples = load_recording(
        Path(manifest.root) / entry.path,
        rate,
        expected_checksum=entry.checksum,
        cache=cache,
    )
    win = round(manifest.segment_len_s * rate)
    if len(samples) < win:
        raise DataError(
            f"recording {entry.source_id!r} is shorter than one window "
            f"({len(samples)} < {win} samples)"
        )
    start = min(max(round(entry.offset_s * rate), 0), len(samples) - win)
    seg = AudioSegment(
        samples=samples[start : start + win].copy(),
        sample_rate_hz=rate,
        source_id=entry.source_id,
        offset_s=entry.offset_s,
        label=entry.label,
    )
    return normalize(seg)


def load_split(
    manifest: Manifest,
    split: str,
    cache: SegmentCache | None = None,
    limit: int | None = None,
) -> list[AudioSegment]:
    entries = manifest.entries_for(split)
    if limit is not None:
        entries = entries[:limit]
    return [load_segment(manifest, e, cache=cache) for e in entries]
