"""Command-line interface: prepare, train, denoise, evaluate, embed, plot.

Exit codes: 0 success, 2 usage or configuration problems, 3 data problems
(missing files, integrity failures, bad checkpoints), 4 numerical failures.
Every command resolves its configuration first and echoes it to
<out>/resolved_config.ini before doing any work.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config, with_overrides, write_resolved
from .data_io import (
    DatasetSpec,
    Manifest,
    SegmentCache,
    build_manifest,
    load_manifest,
    load_split,
    save_manifest,
    scan,
)
from .errors import ConfigError, DataError, NumericalError
from .evaluation import (
    ClassifierConfig,
    degradation_study,
    export_embeddings,
    read_degradation_csv,
    read_embedding_csv,
    read_snr_csv,
    snr_grid,
    spectrogram,
    subsample_segments,
    train_classifier,
    write_degradation_csv,
    write_embedding_csv,
    write_snr_csv,
)
from .inference import denoise_segment, identity_denoiser, make_denoiser
from .model import load_checkpoint
from .noise import SYNTHETIC_KINDS, load_noise_bank
from .signal_core import AudioSegment, normalize, read_wav, resample, write_wav
from .training import Augmenter, dataset_from_segments, fit

log = logging.getLogger("pcgdenoise")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcgdenoise",
        description="Self-supervised heart-sound denoising: training, "
        "inference, and evaluation from one config file.",
    )
    parser.add_argument("--config", metavar="INI", help="configuration file")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", metavar="DIR", help="override the output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="scan the dataset and write the split manifest")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the denoiser on noisy data only")
    p.add_argument(
        "--lambda", dest="contrastive_weight", type=float, default=None,
        help="override the contrastive loss weight",
    )
    p.add_argument("--resume", metavar="CKPT", help="resume from a checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise a WAV file")
    p.add_argument("input", help="input WAV path")
    p.add_argument("--output", metavar="WAV", help="output path (default <out>/denoised.wav)")
    p.add_argument("--checkpoint", metavar="CKPT", help="model checkpoint (default best)")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("evaluate", help="SNR grid and classifier degradation study")
    p.add_argument("--checkpoint", metavar="CKPT", help="model checkpoint (default best)")
    p.add_argument(
        "--identity-denoiser", action="store_true",
        help="evaluate the pass-through denoiser (calibration reference)",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", help="export embeddings and a 2D projection")
    p.add_argument("--checkpoint", metavar="CKPT", help="model checkpoint (default best)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("plot", help="render figures from existing run artifacts")
    p.add_argument("--input", metavar="WAV", help="also plot input/denoised spectrograms")
    p.add_argument("--checkpoint", metavar="CKPT", help="model checkpoint for --input")
    p.set_defaults(func=cmd_plot)
    return parser


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest_path(config: RunConfig) -> Path:
    return _out_dir(config) / "manifest.jsonl"


def _require_manifest(config: RunConfig) -> Manifest:
    path = _manifest_path(config)
    if not path.exists():
        raise DataError(f"no manifest at {path}; run `pcgdenoise prepare` first")
    return load_manifest(path)


def _cache(config: RunConfig) -> SegmentCache | None:
    if not config.data.use_cache:
        return None
    return SegmentCache(_out_dir(config) / "cache")


def _checkpoint_path(args: argparse.Namespace, config: RunConfig) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    return _out_dir(config) / "checkpoints" / "best.pt"


def _noise_bank(config: RunConfig, kinds: set[str]) -> dict[str, list[AudioSegment]] | None:
    """Load recorded-noise classes for every requested non-synthetic kind."""
    needed = sorted(k for k in kinds if k not in SYNTHETIC_KINDS)
    if not needed:
        return None
    if config.data.noise_bank_root is None:
        raise ConfigError(
            f"noise kinds {needed} need [data] noise_bank_root, which is not set"
        )
    bank = {}
    for kind in needed:
        segments, skipped = load_noise_bank(
            config.data.noise_bank_root, kind, config.segmentation.target_rate_hz
        )
        if skipped:
            log.warning("noise bank %s: skipped %d unreadable files", kind, skipped)
        bank[kind] = segments
    return bank


def cmd_prepare(args: argparse.Namespace, config: RunConfig) -> int:
    if config.data.root is None:
        raise ConfigError("dataset root is not configured; set [data] root")
    spec = DatasetSpec(
        root=Path(config.data.root), expected_per_class=config.data.expected_per_class
    )
    recordings = scan(spec)
    manifest = build_manifest(
        recordings, spec.root, config.segmentation, config.data.split_ratios, config.seed
    )
    path = _manifest_path(config)
    save_manifest(manifest, path)
    counts = {split: len(manifest.entries_for(split)) for split in ("train", "val", "test")}
    print(f"manifest: {path}")
    print(
        f"{len(recordings)} recordings -> {len(manifest.entries)} segments "
        f"(train {counts['train']}, val {counts['val']}, test {counts['test']})"
    )
    return 0


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    config = with_overrides(config, args.contrastive_weight)
    manifest = _require_manifest(config)
    cache = _cache(config)
    train_segments = load_split(manifest, "train", cache=cache)
    val_segments = load_split(manifest, "val", cache=cache)
    if not train_segments:
        raise DataError("manifest train split is empty")
    train_data = dataset_from_segments(train_segments, config.model.input_len)
    val_data = (
        dataset_from_segments(val_segments, config.model.input_len) if val_segments else None
    )
    augmenter = Augmenter(
        policy=config.augment,
        noise_bank=_noise_bank(config, set(config.augment.noise_kinds)),
    )
    result = fit(
        train_data, val_data, config.model, config.train, augmenter,
        _out_dir(config), resume_from=args.resume,
    )
    final = result.records[-1] if result.records else None
    if final is not None:
        print(
            f"trained {final.step} steps over {result.state.epoch} epochs; "
            f"final total loss {final.total_loss:.6f}"
        )
    print(f"checkpoints: best={result.best_checkpoint} last={result.last_checkpoint}")
    print(f"log: {result.log_path}")
    return 0


def cmd_denoise(args: argparse.Namespace, config: RunConfig) -> int:
    state, _ = load_checkpoint(_checkpoint_path(args, config))
    seg = read_wav(args.input)
    rate = config.segmentation.target_rate_hz
    seg = normalize(resample(seg, rate))
    out_seg = denoise_segment(state, seg)
    output = Path(args.output) if args.output else _out_dir(config) / "denoised.wav"
    output.parent.mkdir(parents=True, exist_ok=True)
    write_wav(output, out_seg)
    print(f"denoised {args.input} -> {output} ({rate} Hz, {out_seg.duration_s:.2f} s)")
    return 0


def _eval_denoiser(args: argparse.Namespace, config: RunConfig):
    if args.identity_denoiser:
        return identity_denoiser, "identity"
    state, _ = load_checkpoint(_checkpoint_path(args, config))
    return make_denoiser(state), "model"


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    manifest = _require_manifest(config)
    cache = _cache(config)
    test_segments = load_split(manifest, "test", cache=cache)
    if not test_segments:
        raise DataError("manifest test split is empty")
    denoiser, denoiser_name = _eval_denoiser(args, config)
    bank = _noise_bank(
        config, set(config.eval.noise_kinds) | {config.eval.degradation_kind}
    )
    eval_dir = _out_dir(config) / "eval"
    cells = snr_grid(
        denoiser,
        test_segments,
        config.eval.noise_kinds,
        config.eval.snr_points_db,
        noise_bank=bank,
        unseen_kinds=config.eval.unseen_kinds,
        max_segments=config.eval.n_segments,
        seed=config.seed,
    )
    write_snr_csv(cells, eval_dir / "snr_grid.csv")
    print(f"snr grid ({denoiser_name} denoiser): {eval_dir / 'snr_grid.csv'}")
    for cell in cells:
        marker = " (unseen)" if cell.unseen else ""
        print(
            f"  {cell.kind:>8}{marker} @ {cell.target_snr_db:+5.1f} dB: "
            f"out {cell.mean_output_snr_db:+6.2f} dB (n={cell.n})"
        )
    train_segments = load_split(manifest, "train", cache=cache)
    classifier = train_classifier(
        subsample_segments(train_segments, config.eval.n_segments, config.seed),
        ClassifierConfig(epochs=config.eval.classifier_epochs, seed=config.seed),
    )
    reports = degradation_study(
        classifier,
        denoiser,
        subsample_segments(test_segments, config.eval.n_segments, config.seed),
        noise_kind=config.eval.degradation_kind,
        noise_snr_db=config.eval.degradation_snr_db,
        seed=config.seed,
        noise_bank=bank,
    )
    write_degradation_csv(reports, eval_dir / "degradation.csv")
    print(f"degradation study: {eval_dir / 'degradation.csv'}")
    for report in reports:
        print(
            f"  {report.condition:>8}: macro Se {report.macro_sensitivity:.3f}, "
            f"overall acc {report.overall_accuracy:.3f}"
        )
    return 0


def cmd_embed(args: argparse.Namespace, config: RunConfig) -> int:
    manifest = _require_manifest(config)
    state, _ = load_checkpoint(_checkpoint_path(args, config))
    segments = load_split(manifest, args.split, cache=_cache(config))
    if not segments:
        raise DataError(f"manifest {args.split} split is empty")
    segments = subsample_segments(segments, config.eval.n_segments, config.seed)
    export = export_embeddings(
        state,
        segments,
        perplexity=config.eval.tsne_perplexity,
        iterations=config.eval.tsne_iterations,
        seed=config.seed,
    )
    path = _out_dir(config) / "eval" / "embeddings.csv"
    write_embedding_csv(export, path)
    print(f"embeddings ({len(segments)} segments, dim {export.embeddings.shape[1]}): {path}")
    return 0


def cmd_plot(args: argparse.Namespace, config: RunConfig) -> int:
    # Imported lazily: pulling in matplotlib is only needed here.
    from . import plots

    out = _out_dir(config)
    eval_dir = out / "eval"
    rendered = []
    if (out / "training_log.csv").exists():
        plots.plot_training_curve(out / "training_log.csv", out / "training_curve.png")
        rendered.append(out / "training_curve.png")
    if (eval_dir / "snr_grid.csv").exists():
        plots.plot_snr_grid(read_snr_csv(eval_dir / "snr_grid.csv"), eval_dir / "snr_grid.png")
        rendered.append(eval_dir / "snr_grid.png")
    if (eval_dir / "degradation.csv").exists():
        plots.plot_degradation(
            read_degradation_csv(eval_dir / "degradation.csv"), eval_dir / "degradation.png"
        )
        rendered.append(eval_dir / "degradation.png")
    if (eval_dir / "embeddings.csv").exists():
        plots.plot_embeddings(
            read_embedding_csv(eval_dir / "embeddings.csv"), eval_dir / "embeddings.png"
        )
        rendered.append(eval_dir / "embeddings.png")
    if args.input:
        state, _ = load_checkpoint(_checkpoint_path(args, config))
        seg = normalize(resample(read_wav(args.input), config.segmentation.target_rate_hz))
        den = denoise_segment(state, seg)
        window_s = config.eval.spectrogram_window_s
        hop_s = config.eval.spectrogram_hop_s
        plots.plot_spectrogram_pair(
            spectrogram(seg, window_s, hop_s),
            spectrogram(den, window_s, hop_s),
            eval_dir / "spectrograms.png",
        )
        rendered.append(eval_dir / "spectrograms.png")
    if not rendered:
        raise DataError(
            f"nothing to plot under {out}; run train/evaluate/embed first or pass --input"
        )
    for path in rendered:
        print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, seed_override=args.seed, out_override=args.out)
        out = _out_dir(config)
        write_resolved(config, out / "resolved_config.ini")
        return int(args.func(args, config))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
