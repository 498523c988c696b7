"""Static matplotlib renderings of run artifacts (headless backend)."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .evaluation import ConditionMetrics, EmbeddingExport, SnrCell, Spectrogram


def plot_training_curve(log_path: str | Path, out_path: str | Path) -> None:
    log_path = Path(log_path)
    if not log_path.exists():
        raise DataError(f"training log not found: {log_path}")
    steps, recon, contra, total = [], [], [], []
    with open(log_path) as fh:
        for row in csv.DictReader(fh):
            steps.append(int(row["step"]))
            recon.append(float(row["recon_loss"]))
            contra.append(float(row["contra_loss"]))
            total.append(float(row["total_loss"]))
    if not steps:
        raise DataError(f"training log {log_path} has no records")
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, total, label="total", lw=1.2)
    ax.plot(steps, recon, label="reconstruction", lw=0.9)
    ax.plot(steps, contra, label="contrastive", lw=0.9)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_snr_grid(cells: Sequence[SnrCell], out_path: str | Path) -> None:
    if not cells:
        raise DataError("no SNR cells to plot")
    kinds = sorted({c.kind for c in cells})
    fig, ax = plt.subplots(figsize=(7, 4))
    for kind in kinds:
        rows = sorted([c for c in cells if c.kind == kind], key=lambda c: c.target_snr_db)
        xs = [c.target_snr_db for c in rows]
        ys = [c.mean_output_snr_db for c in rows]
        errs = [c.std_output_snr_db for c in rows]
        style = "--" if rows[0].unseen else "-"
        ax.errorbar(xs, ys, yerr=errs, marker="o", linestyle=style, capsize=3, label=kind)
    lo = min(c.target_snr_db for c in cells)
    hi = max(c.target_snr_db for c in cells)
    ax.plot([lo, hi], [lo, hi], color="gray", lw=0.8, label="identity")
    ax.set_xlabel("input SNR (dB)")
    ax.set_ylabel("output SNR (dB)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_spectrogram_pair(
    before: Spectrogram, after: Spectrogram, out_path: str | Path,
    titles: tuple[str, str] = ("input", "denoised"),
) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, spec, title in zip(axes, (before, after), titles):
        mesh = ax.pcolormesh(spec.times_s, spec.freqs_hz, spec.power_db, shading="auto")
        ax.set_title(title)
        ax.set_xlabel("time (s)")
    axes[0].set_ylabel("frequency (Hz)")
    fig.colorbar(mesh, ax=axes, label="power (dB)")
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_embeddings(export: EmbeddingExport, out_path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    labels = sorted(set(export.labels))
    for label in labels:
        mask = np.asarray([l == label for l in export.labels])
        ax.scatter(
            export.coords[mask, 0], export.coords[mask, 1],
            s=12, alpha=0.7, label=label or "unlabelled",
        )
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("t-SNE 2")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_degradation(reports: Sequence[ConditionMetrics], out_path: str | Path) -> None:
    if not reports:
        raise DataError("no degradation reports to plot")
    conditions = [r.condition for r in reports]
    x = np.arange(len(conditions))
    width = 0.35
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - width / 2, [r.macro_sensitivity for r in reports], width, label="macro sensitivity")
    ax.bar(x + width / 2, [r.overall_accuracy for r in reports], width, label="overall accuracy")
    ax.set_xticks(x, conditions)
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
