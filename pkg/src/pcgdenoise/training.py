"""Self-supervised training loop: noisy-to-noisy reconstruction plus a
contrastive term over projection-head embeddings.

The trainer only ever sees noisy segments. Each step re-degrades the batch
into two views; both views are mapped back toward the original noisy
segment, and the contrastive loss pulls views of the same segment together.

Determinism contract: every random draw comes from a substream derived from
(config.seed, step or epoch), so two runs with the same seed produce
byte-identical logs and checkpoints.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentPolicy, make_views
from .errors import CheckpointError, ConfigError, DataError, NumericalError
from .model import (
    ModelConfig,
    ModelState,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .signal_core import AudioSegment, derive_seed, pad_center

log = logging.getLogger(__name__)

# Substream tags keep augmentation, dropout, shuffling, and validation
# draws independent of each other while staying tied to the master seed.
_AUG_TAG = 11
_DROPOUT_TAG = 13
_SHUFFLE_TAG = 17
_VAL_TAG = 19

LOG_COLUMNS = ("step", "epoch", "recon_loss", "contra_loss", "total_loss", "learning_rate")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.6e-3
    batch_size: int = 16
    epochs: int = 60
    contrastive_weight: float = 0.1
    temperature: float = 0.5
    include_positive_in_denominator: bool = False
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.contrastive_weight < 0:
            raise ConfigError("contrastive_weight must be >= 0")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class TrainRecord:
    step: int
    epoch: int
    recon_loss: float
    contra_loss: float
    total_loss: float
    learning_rate: float
    wall_time_s: float


@dataclass
class Augmenter:
    """Bundles the augmentation policy with an optional recorded-noise bank."""

    policy: AugmentPolicy
    noise_bank: dict[str, list[AudioSegment]] | None = None

    def batch_views(
        self, batch: np.ndarray, sample_rate_hz: int, k: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Distort a [m, L] batch into k views, shape [k, m, L]."""
        m, n = batch.shape
        out = np.empty((k, m, n))
        for i in range(m):
            seg = AudioSegment(samples=batch[i], sample_rate_hz=sample_rate_hz)
            for j, view in enumerate(make_views(seg, self.policy, k=k, rng=rng, noise_bank=self.noise_bank)):
                out[j, i] = view.samples
        return out


@dataclass
class NoisyDataset:
    """The training-set abstraction: noisy segments only, no clean targets.

    Segments are pre-padded to the model input length; ids exist solely for
    error reporting.
    """

    segments: np.ndarray
    sample_rate_hz: int
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.segments = np.asarray(self.segments, dtype=np.float64)
        if self.segments.ndim != 2:
            raise DataError(f"expected [n, length] segment array, got shape {self.segments.shape}")
        if self.ids and len(self.ids) != len(self.segments):
            raise DataError("ids length does not match segment count")
        if not np.all(np.isfinite(self.segments)):
            raise DataError("non-finite samples in dataset")

    def __len__(self) -> int:
        return len(self.segments)

    def id_of(self, index: int) -> str:
        return self.ids[index] if self.ids else f"segment-{index}"


def dataset_from_segments(
    segments: list[AudioSegment], input_len: int, sample_rate_hz: int | None = None
) -> NoisyDataset:
    """Stack segments into a NoisyDataset, center-padding each to input_len."""
    if not segments:
        raise DataError("no segments given")
    rate = sample_rate_hz or segments[0].sample_rate_hz
    rows = []
    ids = []
    for seg in segments:
        if seg.sample_rate_hz != rate:
            raise DataError(
                f"segment {seg.source_id!r} rate {seg.sample_rate_hz} != {rate}"
            )
        padded, _ = pad_center(seg.samples, input_len)
        rows.append(padded)
        ids.append(f"{seg.source_id}@{seg.offset_s:.3f}")
    return NoisyDataset(segments=np.stack(rows), sample_rate_hz=rate, ids=tuple(ids))


def recon_loss(y: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error between a denoised batch and its noisy target."""
    if y.shape != target.shape:
        raise DataError(f"shape mismatch: output {tuple(y.shape)} vs target {tuple(target.shape)}")
    return ((y - target) ** 2).mean()


def contrastive_loss(
    z: torch.Tensor,
    temperature: float,
    include_positive_in_denominator: bool = False,
) -> torch.Tensor:
    """Multi-view contrastive loss over embeddings z of shape [m, k, d].

    For each ordered pair of views (j, k_pos) of the same sample, the score
    of the positive is compared against all views of the *other* samples.
    By default the positive itself is excluded from the denominator; the
    flag switches to the convention that includes it.
    """
    if z.dim() != 3:
        raise DataError(f"expected embeddings of shape [m, k, d], got {tuple(z.shape)}")
    m, k, _ = z.shape
    if m < 2:
        raise DataError("contrastive loss needs at least two samples in the batch")
    if k < 2:
        raise DataError("contrastive loss needs at least two views per sample")
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    zn = z / z.norm(dim=2, keepdim=True).clamp_min(1e-12)
    flat = zn.reshape(m * k, -1)
    scores = flat @ flat.T / temperature
    sample_ids = torch.arange(m, device=z.device).repeat_interleave(k)
    other = sample_ids.unsqueeze(0) != sample_ids.unsqueeze(1)
    # log-sum-exp over views of other samples only (row-wise)
    neg = scores.masked_fill(~other, float("-inf"))
    row_lse = torch.logsumexp(neg, dim=1)
    pos_mask = (~other) & ~torch.eye(m * k, dtype=torch.bool, device=z.device)
    anchor_idx, pos_idx = pos_mask.nonzero(as_tuple=True)
    pos_scores = scores[anchor_idx, pos_idx]
    denominators = row_lse[anchor_idx]
    if include_positive_in_denominator:
        denominators = torch.logaddexp(denominators, pos_scores)
    return (denominators - pos_scores).mean()


def total_loss(
    recon: torch.Tensor, contra: torch.Tensor, contrastive_weight: float
) -> torch.Tensor:
    return recon + contrastive_weight * contra


def compute_losses(
    state: ModelState,
    target: torch.Tensor,
    views: torch.Tensor,
    config: TrainConfig,
    dropout_generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(recon, contra, total) for a batch target [m, L] and its views [k, m, L].

    Pure function of the model parameters given fixed inputs, which makes it
    usable both by the training step and by finite-difference checks.
    """
    recons = []
    embeddings = []
    for j in range(views.shape[0]):
        y, hb = state.net(views[j], dropout_generator=dropout_generator)
        recons.append(recon_loss(y, target))
        if config.contrastive_weight > 0:
            embeddings.append(state.net.project(hb))
    recon = torch.stack(recons).mean()
    if config.contrastive_weight > 0:
        z = torch.stack(embeddings, dim=1)  # [m, k, d]
        contra = contrastive_loss(
            z, config.temperature, config.include_positive_in_denominator
        )
    else:
        contra = torch.zeros((), dtype=recon.dtype)
    return recon, contra, total_loss(recon, contra, config.contrastive_weight)


def make_optimizer(state: ModelState, config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer == "adam":
        return torch.optim.Adam(state.net.parameters(), lr=config.learning_rate)
    return torch.optim.SGD(state.net.parameters(), lr=config.learning_rate)


def train_step(
    state: ModelState,
    batch: np.ndarray,
    augmenter: Augmenter,
    config: TrainConfig,
    optimizer: torch.optim.Optimizer,
    sample_rate_hz: int,
    batch_ids: tuple[str, ...] = (),
) -> TrainRecord:
    """One optimizer update on a [m, L] batch of noisy segments."""
    t0 = time.perf_counter()
    step_index = state.step  # 0-based substream index; the record is 1-based
    aug_rng = np.random.default_rng(derive_seed(config.seed, step_index, _AUG_TAG))
    views_np = augmenter.batch_views(batch, sample_rate_hz, k=2, rng=aug_rng)
    target = torch.from_numpy(np.ascontiguousarray(batch)).to(torch.float32)
    views = torch.from_numpy(views_np).to(torch.float32)
    dropout_generator = None
    if state.config.dropout_rate > 0:
        dropout_generator = torch.Generator().manual_seed(
            derive_seed(config.seed, step_index, _DROPOUT_TAG)
        )
    recon, contra, total = compute_losses(state, target, views, config, dropout_generator)
    if not torch.isfinite(total):
        ids = ", ".join(batch_ids) if batch_ids else "unknown"
        raise NumericalError(
            f"non-finite loss at step {step_index + 1} (batch: {ids}); "
            "lower the learning rate or inspect the listed segments"
        )
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    state.step += 1
    return TrainRecord(
        step=state.step,
        epoch=state.epoch + 1,
        recon_loss=float(recon.detach()),
        contra_loss=float(contra.detach()),
        total_loss=float(total.detach()),
        learning_rate=config.learning_rate,
        wall_time_s=time.perf_counter() - t0,
    )


def validation_loss(
    state: ModelState,
    data: NoisyDataset,
    config: TrainConfig,
    augmenter: Augmenter,
    epoch: int,
) -> float:
    """Mean total loss over the validation set, dropout disabled.

    Distortions are drawn from a per-epoch substream, so the same epoch of
    the same run always sees the same validation views.
    """
    rng = np.random.default_rng(derive_seed(config.seed, epoch, _VAL_TAG))
    total = 0.0
    count = 0
    with torch.no_grad():
        for start in range(0, len(data), config.batch_size):
            batch = data.segments[start : start + config.batch_size]
            if len(batch) < 2 and config.contrastive_weight > 0:
                break  # a trailing singleton cannot form contrastive pairs
            views_np = augmenter.batch_views(batch, data.sample_rate_hz, k=2, rng=rng)
            target = torch.from_numpy(np.ascontiguousarray(batch)).to(torch.float32)
            views = torch.from_numpy(views_np).to(torch.float32)
            _, _, batch_total = compute_losses(state, target, views, config, None)
            total += float(batch_total) * len(batch)
            count += len(batch)
    if count == 0:
        raise DataError("validation set is empty")
    return total / count


class TrainingLogWriter:
    """Appends per-step records to a CSV file (no wall-clock column, so two
    identical runs produce byte-identical logs)."""

    def __init__(self, path: str | Path, append: bool = False) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        mode = "a" if append and self.path.exists() else "w"
        self._fh = open(self.path, mode, newline="")
        self._writer = csv.writer(self._fh)
        if mode == "w":
            self._writer.writerow(LOG_COLUMNS)

    def append(self, record: TrainRecord) -> None:
        self._writer.writerow(
            [
                record.step,
                record.epoch,
                repr(record.recon_loss),
                repr(record.contra_loss),
                repr(record.total_loss),
                repr(record.learning_rate),
            ]
        )
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TrainingLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class FitResult:
    state: ModelState
    records: list[TrainRecord] = field(default_factory=list)
    best_checkpoint: Path | None = None
    last_checkpoint: Path | None = None
    log_path: Path | None = None


def fit(
    train_data: NoisyDataset,
    val_data: NoisyDataset | None,
    model_config: ModelConfig,
    config: TrainConfig,
    augmenter: Augmenter,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
) -> FitResult:
    """Run the full training loop and write logs plus best/last checkpoints."""
    if len(train_data) == 0:
        raise DataError("training set is empty")
    if len(train_data) < config.batch_size:
        raise DataError(
            f"training set has {len(train_data)} segments, fewer than "
            f"batch_size={config.batch_size}"
        )
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    best_path = ckpt_dir / "best.pt"
    last_path = ckpt_dir / "last.pt"

    if resume_from is not None:
        state, optimizer_state = load_checkpoint(resume_from)
        if state.config != model_config:
            raise CheckpointError(
                "checkpoint architecture does not match the requested ModelConfig"
            )
        optimizer = make_optimizer(state, config)
        if optimizer_state is not None:
            optimizer.load_state_dict(optimizer_state)
        append_log = True
    else:
        state = init_model(model_config, config.seed)
        optimizer = make_optimizer(state, config)
        append_log = False

    result = FitResult(state=state, log_path=out_dir / "training_log.csv")
    best_metric = state.extra.get("best_metric", float("inf"))
    n = len(train_data)
    with TrainingLogWriter(result.log_path, append=append_log) as writer:
        for epoch in range(state.epoch, config.epochs):
            perm = np.random.default_rng(
                derive_seed(config.seed, epoch, _SHUFFLE_TAG)
            ).permutation(n)
            epoch_total = 0.0
            steps_in_epoch = 0
            for start in range(0, n - config.batch_size + 1, config.batch_size):
                idx = perm[start : start + config.batch_size]
                batch = train_data.segments[idx]
                ids = tuple(train_data.id_of(int(i)) for i in idx)
                record = train_step(
                    state, batch, augmenter, config, optimizer,
                    train_data.sample_rate_hz, batch_ids=ids,
                )
                writer.append(record)
                result.records.append(record)
                epoch_total += record.total_loss
                steps_in_epoch += 1
            state.epoch = epoch + 1
            if val_data is not None and len(val_data) > 0:
                metric = validation_loss(state, val_data, config, augmenter, epoch)
            else:
                metric = epoch_total / max(steps_in_epoch, 1)
            if metric < best_metric:
                best_metric = metric
                state.extra["best_metric"] = best_metric
                save_checkpoint(state, best_path)
                result.best_checkpoint = best_path
            save_checkpoint(state, last_path, optimizer_state=optimizer.state_dict())
            result.last_checkpoint = last_path
            log.info(
                "epoch %d/%d: train total %.6f, selection metric %.6f",
                state.epoch, config.epochs, epoch_total / max(steps_in_epoch, 1), metric,
            )
    if result.last_checkpoint is None:  # epochs == 0: still leave usable checkpoints
        save_checkpoint(state, best_path)
        save_checkpoint(state, last_path, optimizer_state=optimizer.state_dict())
        result.best_checkpoint = best_path
        result.last_checkpoint = last_path
    if result.best_checkpoint is None:
        result.best_checkpoint = best_path if best_path.exists() else None
    return result
