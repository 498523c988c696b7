"""Evaluation: SNR grids over noise kind and level, spectrograms, embedding
export, and the classifier degradation study.

A "denoiser" here is any callable mapping a list of segments to a list of
segments of the same lengths and rates; the identity denoiser is the
calibration reference (its output SNR must equal the input SNR by
construction).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from scipy.signal import spectrogram as _scipy_spectrogram
from sklearn.manifold import TSNE
from torch import nn

from .errors import ConfigError, DataError
from .model import init_module_params
from .noise import SYNTHETIC_KINDS, draw_bank_noise, gen_colored, mix_at_snr
from .signal_core import (
    CLASS_LABELS,
    AudioSegment,
    FloatArray,
    derive_seed,
    pad_center,
    snr_db,
)

log = logging.getLogger(__name__)

Denoiser = Callable[[list[AudioSegment]], list[AudioSegment]]

# Substream tags, disjoint from the ones used in training.
_SUBSAMPLE_TAG = 31
_GRID_TAG = 37
_DEGRADE_TAG = 41
_CLASSIFIER_TAG = 43


@dataclass(frozen=True)
class SnrCell:
    """One (noise kind, target SNR) cell of the evaluation grid."""

    kind: str
    target_snr_db: float
    unseen: bool
    n: int
    mean_input_snr_db: float
    mean_output_snr_db: float
    std_output_snr_db: float


def subsample_segments(
    segments: Sequence[AudioSegment], max_segments: int, seed: int
) -> list[AudioSegment]:
    """Deterministic subsample (order-preserving) when the set is too large."""
    if len(segments) <= max_segments:
        return list(segments)
    rng = np.random.default_rng(derive_seed(seed, _SUBSAMPLE_TAG))
    idx = np.sort(rng.choice(len(segments), size=max_segments, replace=False))
    return [segments[int(i)] for i in idx]


def _noise_for(
    kind: str,
    n: int,
    rate_hz: int,
    rng: np.random.Generator,
    noise_bank: dict[str, list[AudioSegment]] | None,
) -> AudioSegment:
    if kind in SYNTHETIC_KINDS:
        return gen_colored(kind, n, rate_hz, seed=int(rng.integers(0, 2**63 - 1)))
    if noise_bank is None or kind not in noise_bank:
        raise DataError(f"noise kind {kind!r} is not synthetic and no bank provides it")
    return draw_bank_noise(noise_bank[kind], n, rng)


def degrade_segments(
    segments: Sequence[AudioSegment],
    kind: str,
    target_snr_db: float,
    seed: int,
    noise_bank: dict[str, list[AudioSegment]] | None = None,
) -> list[AudioSegment]:
    """Mix every segment with fresh noise of one kind at an exact SNR."""
    rng = np.random.default_rng(seed)
    out = []
    for seg in segments:
        noise = _noise_for(kind, len(seg.samples), seg.sample_rate_hz, rng, noise_bank)
        out.append(mix_at_snr(seg, noise, target_snr_db))
    return out


def snr_grid(
    denoiser: Denoiser,
    segments: Sequence[AudioSegment],
    kinds: Sequence[str],
    snr_points_db: Sequence[float],
    *,
    noise_bank: dict[str, list[AudioSegment]] | None = None,
    unseen_kinds: Sequence[str] = (),
    max_segments: int = 500,
    seed: int = 0,
) -> list[SnrCell]:
    """Mean output SNR of the denoiser over every (kind, level) cell.

    The same subsampled clean segments are reused for every cell; the noise
    realizations differ per cell but are fixed by the seed.
    """
    if not segments:
        raise DataError("no evaluation segments given")
    chosen = subsample_segments(segments, max_segments, seed)
    cells = []
    for kind_index, kind in enumerate(kinds):
        for target in snr_points_db:
            cell_seed = derive_seed(seed, kind_index, int(round(target * 1000)), _GRID_TAG)
            noisy = degrade_segments(chosen, kind, target, cell_seed, noise_bank)
            denoised = denoiser(noisy)
            if len(denoised) != len(noisy):
                raise DataError("denoiser returned a different number of segments")
            in_snrs = [snr_db(c, x) for c, x in zip(chosen, noisy)]
            out_snrs = [snr_db(c, y) for c, y in zip(chosen, denoised)]
            cells.append(
                SnrCell(
                    kind=kind,
                    target_snr_db=float(target),
                    unseen=kind in unseen_kinds,
                    n=len(chosen),
                    mean_input_snr_db=float(np.mean(in_snrs)),
                    mean_output_snr_db=float(np.mean(out_snrs)),
                    std_output_snr_db=float(np.std(out_snrs)),
                )
            )
            log.info(
                "snr grid %s @ %+.1f dB: in %.2f dB -> out %.2f dB (n=%d)",
                kind, target, cells[-1].mean_input_snr_db,
                cells[-1].mean_output_snr_db, len(chosen),
            )
    return cells


def write_snr_csv(cells: Sequence[SnrCell], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "target_snr_db", "unseen", "n",
             "mean_input_snr_db", "mean_output_snr_db", "std_output_snr_db"]
        )
        for c in cells:
            writer.writerow(
                [c.kind, repr(c.target_snr_db), int(c.unseen), c.n,
                 repr(c.mean_input_snr_db), repr(c.mean_output_snr_db),
                 repr(c.std_output_snr_db)]
            )


@dataclass(frozen=True)
class Spectrogram:
    freqs_hz: FloatArray
    times_s: FloatArray
    power_db: FloatArray  # [freq, time]


def spectrogram(
    seg: AudioSegment,
    window_s: float = 0.064,
    hop_s: float = 0.008,
    floor_db: float = -100.0,
) -> Spectrogram:
    """Hann-windowed power spectrogram in dB, floored to avoid log(0)."""
    nperseg = round(window_s * seg.sample_rate_hz)
    hop = round(hop_s * seg.sample_rate_hz)
    if not 0 < hop <= nperseg:
        raise DataError(f"invalid spectrogram geometry: window {nperseg}, hop {hop} samples")
    if nperseg > len(seg.samples):
        raise DataError("segment is shorter than one spectrogram window")
    freqs, times, sxx = _scipy_spectrogram(
        seg.samples,
        fs=seg.sample_rate_hz,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg - hop,
        mode="psd",
    )
    floor = 10.0 ** (floor_db / 10.0)
    return Spectrogram(
        freqs_hz=freqs,
        times_s=times,
        power_db=10.0 * np.log10(np.maximum(sxx, floor)),
    )


def embed_segments(state, segments: Sequence[AudioSegment], batch_size: int = 64) -> FloatArray:
    """Unit-norm projection-head embeddings, dropout off, shape [n, d]."""
    if not segments:
        raise DataError("no segments to embed")
    input_len = state.config.input_len
    rows = [pad_center(seg.samples, input_len)[0] for seg in segments]
    x = torch.from_numpy(np.stack(rows)).to(torch.float32)
    out = []
    with torch.no_grad():
        for start in range(0, len(rows), batch_size):
            _, hb = state.net(x[start : start + batch_size])
            out.append(state.net.project(hb))
    return torch.cat(out).double().numpy()


@dataclass
class EmbeddingExport:
    ids: tuple[str, ...]
    labels: tuple[str, ...]
    embeddings: FloatArray  # [n, d] unit-norm
    coords: FloatArray  # [n, 2] t-SNE plane
    perplexity: float
    iterations: int
    seed: int


def export_embeddings(
    state,
    segments: Sequence[AudioSegment],
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
) -> EmbeddingExport:
    """Embeddings plus a 2D t-SNE projection for visual inspection.

    Perplexity is clamped below (n - 1) / 3 for small sets, since the
    projection is undefined otherwise.
    """
    z = embed_segments(state, segments)
    n = len(z)
    if n < 4:
        raise DataError(f"need at least 4 segments for a 2D projection, got {n}")
    effective = min(perplexity, max(1.0, (n - 1) / 3.0))
    if effective != perplexity:
        log.info("perplexity reduced from %s to %s for n=%d", perplexity, effective, n)
    tsne = TSNE(
        n_components=2,
        perplexity=effective,
        max_iter=iterations,
        random_state=seed,
        init="pca",
        n_jobs=1,
    )
    coords = tsne.fit_transform(z).astype(np.float64)
    return EmbeddingExport(
        ids=tuple(f"{s.source_id}@{s.offset_s:.3f}" for s in segments),
        labels=tuple(s.label or "" for s in segments),
        embeddings=z,
        coords=coords,
        perplexity=effective,
        iterations=iterations,
        seed=seed,
    )


def write_embedding_csv(export: EmbeddingExport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = export.embeddings.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "tsne_x", "tsne_y"] + [f"e{i}" for i in range(dim)])
        for i in range(len(export.ids)):
            writer.writerow(
                [export.ids[i], export.labels[i],
                 repr(float(export.coords[i, 0])), repr(float(export.coords[i, 1]))]
                + [repr(float(v)) for v in export.embeddings[i]]
            )


def read_snr_csv(path: str | Path) -> list[SnrCell]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"SNR grid CSV not found: {path}")
    cells = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            cells.append(
                SnrCell(
                    kind=row["kind"],
                    target_snr_db=float(row["target_snr_db"]),
                    unseen=bool(int(row["unseen"])),
                    n=int(row["n"]),
                    mean_input_snr_db=float(row["mean_input_snr_db"]),
                    mean_output_snr_db=float(row["mean_output_snr_db"]),
                    std_output_snr_db=float(row["std_output_snr_db"]),
                )
            )
    if not cells:
        raise DataError(f"SNR grid CSV {path} has no rows")
    return cells


def read_embedding_csv(path: str | Path) -> EmbeddingExport:
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding CSV not found: {path}")
    ids, labels, coords, embeddings = [], [], [], []
    with open(path) as fh:
        reader = csv.DictReader(fh)
        dims = sorted(
            (k for k in reader.fieldnames or [] if k.startswith("e")),
            key=lambda k: int(k[1:]),
        )
        for row in reader:
            ids.append(row["id"])
            labels.append(row["label"])
            coords.append([float(row["tsne_x"]), float(row["tsne_y"])])
            embeddings.append([float(row[d]) for d in dims])
    if not ids:
        raise DataError(f"embedding CSV {path} has no rows")
    return EmbeddingExport(
        ids=tuple(ids),
        labels=tuple(labels),
        embeddings=np.asarray(embeddings),
        coords=np.asarray(coords),
        perplexity=0.0,
        iterations=0,
        seed=0,
    )


@dataclass(frozen=True)
class ClassifierConfig:
    """Conv + BiLSTM classifier used only to measure label degradation."""

    class_labels: tuple[str, ...] = CLASS_LABELS
    base_channels: int = 16
    kernel_size: int = 7
    lstm_hidden: int = 32
    dense_hidden: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.class_labels) < 2:
            raise ConfigError("classifier needs at least two classes")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("classifier kernel_size must be odd")
        if min(self.base_channels, self.lstm_hidden, self.dense_hidden) < 1:
            raise ConfigError("classifier layer sizes must be >= 1")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("classifier training parameters must be positive")


class _ConvBiLstmNet(nn.Module):
    """Three strided conv blocks, a BiLSTM over the reduced sequence, then a
    dense softmax head."""

    def __init__(self, config: ClassifierConfig) -> None:
        super().__init__()
        c = config.base_channels
        pad = config.kernel_size // 2
        self.blocks = nn.ModuleList()
        prev = 1
        for ch in (c, 2 * c, 4 * c):
            self.blocks.append(nn.Conv1d(prev, ch, config.kernel_size, padding=pad))
            prev = ch
        self.pool = nn.MaxPool1d(4)
        self.lstm = nn.LSTM(
            input_size=prev,
            hidden_size=config.lstm_hidden,
            batch_first=True,
            bidirectional=True,
        )
        self.fc1 = nn.Linear(2 * config.lstm_hidden, config.dense_hidden)
        self.fc2 = nn.Linear(config.dense_hidden, len(config.class_labels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x.unsqueeze(1)
        for block in self.blocks:
            h = self.pool(torch.relu(block(h)))
        h, _ = self.lstm(h.transpose(1, 2))
        h = h.mean(dim=1)
        return self.fc2(torch.relu(self.fc1(h)))


@dataclass
class ClassifierState:
    config: ClassifierConfig
    net: _ConvBiLstmNet


def _label_indices(segments: Sequence[AudioSegment], labels: tuple[str, ...]) -> np.ndarray:
    idx = []
    for seg in segments:
        if seg.label is None or seg.label not in labels:
            raise DataError(f"segment {seg.source_id!r} has no usable label ({seg.label!r})")
        idx.append(labels.index(seg.label))
    return np.asarray(idx, dtype=np.int64)


def _stack_inputs(segments: Sequence[AudioSegment]) -> torch.Tensor:
    lengths = {len(s.samples) for s in segments}
    if len(lengths) != 1:
        raise DataError(f"classifier batch mixes segment lengths: {sorted(lengths)}")
    n = lengths.pop()
    target = max(64, -(-n // 64) * 64)  # conv pooling shrinks by 64x
    rows = [pad_center(s.samples, target)[0] for s in segments]
    return torch.from_numpy(np.stack(rows)).to(torch.float32)


def train_classifier(
    segments: Sequence[AudioSegment], config: ClassifierConfig
) -> ClassifierState:
    """Supervised training on labelled (clean) segments."""
    if not segments:
        raise DataError("classifier training set is empty")
    y = _label_indices(segments, config.class_labels)
    if len(np.unique(y)) < 2:
        raise DataError("classifier training set contains fewer than two classes")
    x = _stack_inputs(segments)
    targets = torch.from_numpy(y)
    net = _ConvBiLstmNet(config)
    generator = torch.Generator().manual_seed(derive_seed(config.seed, _CLASSIFIER_TAG))
    for module in net.modules():
        init_module_params(module, generator)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    n = len(segments)
    for epoch in range(config.epochs):
        perm = np.random.default_rng(
            derive_seed(config.seed, epoch, _CLASSIFIER_TAG)
        ).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            logits = net(x[idx])
            loss = loss_fn(logits, targets[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        log.debug(
            "classifier epoch %d/%d: loss %.4f", epoch + 1, config.epochs, float(loss.detach())
        )
    net.eval()
    return ClassifierState(config=config, net=net)


def predict(state: ClassifierState, segments: Sequence[AudioSegment]) -> np.ndarray:
    """Predicted class indices, batched."""
    x = _stack_inputs(segments)
    out = []
    with torch.no_grad():
        for start in range(0, len(segments), state.config.batch_size):
            logits = state.net(x[start : start + state.config.batch_size])
            out.append(logits.argmax(dim=1))
    return torch.cat(out).numpy()


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    sensitivity: float
    specificity: float
    accuracy: float


@dataclass(frozen=True)
class ConditionMetrics:
    condition: str
    n: int
    overall_accuracy: float
    macro_sensitivity: float
    macro_specificity: float
    macro_accuracy: float
    per_class: tuple[ClassMetrics, ...]


def metrics_from_predictions(
    truth: np.ndarray, predicted: np.ndarray, labels: tuple[str, ...], condition: str
) -> ConditionMetrics:
    """One-vs-rest sensitivity/specificity/accuracy per class plus macro means."""
    if len(truth) != len(predicted) or len(truth) == 0:
        raise DataError("truth and prediction arrays must be non-empty and equal length")
    k = len(labels)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (truth, predicted), 1)
    total = cm.sum()
    per_class = []
    for i, label in enumerate(labels):
        tp = cm[i, i]
        fn = cm[i].sum() - tp
        fp = cm[:, i].sum() - tp
        tn = total - tp - fn - fp
        se = tp / (tp + fn) if tp + fn > 0 else 0.0
        sp = tn / (tn + fp) if tn + fp > 0 else 0.0
        per_class.append(
            ClassMetrics(
                label=label,
                sensitivity=float(se),
                specificity=float(sp),
                accuracy=float((tp + tn) / total),
            )
        )
    return ConditionMetrics(
        condition=condition,
        n=int(total),
        overall_accuracy=float(np.trace(cm) / total),
        macro_sensitivity=float(np.mean([m.sensitivity for m in per_class])),
        macro_specificity=float(np.mean([m.specificity for m in per_class])),
        macro_accuracy=float(np.mean([m.accuracy for m in per_class])),
        per_class=tuple(per_class),
    )


def degradation_study(
    classifier: ClassifierState,
    denoiser: Denoiser,
    clean_segments: Sequence[AudioSegment],
    noise_kind: str = "white",
    noise_snr_db: float = 0.0,
    seed: int = 0,
    noise_bank: dict[str, list[AudioSegment]] | None = None,
) -> list[ConditionMetrics]:
    """Classifier metrics on clean, noisy, and denoised versions of one set.

    The expected ordering (clean >= denoised >= noisy) is what justifies the
    denoiser as a front end; this function measures it, it does not assert it.
    """
    if not clean_segments:
        raise DataError("degradation study needs a non-empty evaluation set")
    labels = classifier.config.class_labels
    truth = _label_indices(clean_segments, labels)
    noisy = degrade_segments(
        clean_segments, noise_kind, noise_snr_db,
        derive_seed(seed, _DEGRADE_TAG), noise_bank,
    )
    denoised = denoiser(noisy)
    out = []
    for condition, segs in (("clean", clean_segments), ("noisy", noisy), ("denoised", denoised)):
        preds = predict(classifier, segs)
        out.append(metrics_from_predictions(truth, preds, labels, condition))
        log.info(
            "degradation %s: macro Se %.3f, overall acc %.3f",
            condition, out[-1].macro_sensitivity, out[-1].overall_accuracy,
        )
    return out


def write_degradation_csv(reports: Sequence[ConditionMetrics], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["condition", "class", "n", "sensitivity", "specificity", "accuracy"]
        )
        for report in reports:
            writer.writerow(
                [report.condition, "macro", report.n,
                 repr(report.macro_sensitivity), repr(report.macro_specificity),
                 repr(report.macro_accuracy)]
            )
            writer.writerow(
                [report.condition, "overall", report.n, "", "", repr(report.overall_accuracy)]
            )
            for m in report.per_class:
                writer.writerow(
                    [report.condition, m.label, report.n,
                     repr(m.sensitivity), repr(m.specificity), repr(m.accuracy)]
                )


def read_degradation_csv(path: str | Path) -> list[ConditionMetrics]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"degradation CSV not found: {path}")
    grouped: dict[str, dict] = {}
    order: list[str] = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            condition = row["condition"]
            if condition not in grouped:
                grouped[condition] = {"per_class": []}
                order.append(condition)
            bucket = grouped[condition]
            bucket["n"] = int(row["n"])
            if row["class"] == "macro":
                bucket["macro"] = (
                    float(row["sensitivity"]), float(row["specificity"]), float(row["accuracy"])
                )
            elif row["class"] == "overall":
                bucket["overall"] = float(row["accuracy"])
            else:
                bucket["per_class"].append(
                    ClassMetrics(
                        label=row["class"],
                        sensitivity=float(row["sensitivity"]),
                        specificity=float(row["specificity"]),
                        accuracy=float(row["accuracy"]),
                    )
                )
    if not grouped:
        raise DataError(f"degradation CSV {path} has no rows")
    out = []
    for condition in order:
        bucket = grouped[condition]
        try:
            macro = bucket["macro"]
            out.append(
                ConditionMetrics(
                    condition=condition,
                    n=bucket["n"],
                    overall_accuracy=bucket["overall"],
                    macro_sensitivity=macro[0],
                    macro_specificity=macro[1],
                    macro_accuracy=macro[2],
                    per_class=tuple(bucket["per_class"]),
                )
            )
        except KeyError as exc:
            raise DataError(f"degradation CSV {path} is missing {exc} rows") from exc
    return out
