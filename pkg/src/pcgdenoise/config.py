"""Run configuration: one INI file, strict keys, one master seed.

Every tunable lives in a section mirroring the module it feeds. Unknown
sections or keys are hard errors, not warnings, so a typo cannot silently
fall back to a default. The resolved configuration (defaults plus file plus
command-line overrides) is echoed to disk before any work starts.

Sub-seeds (training, augmentation) are always derived from the single
[run] seed; config files do not carry per-module seeds.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

from .augment import AugmentPolicy
from .errors import ConfigError, DataError
from .model import ModelConfig
from .signal_core import SegmentationParams
from .training import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    root: str | None = None
    noise_bank_root: str | None = None
    expected_per_class: int | None = None
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    use_cache: bool = True

    def __post_init__(self) -> None:
        if len(self.split_ratios) != 3:
            raise ConfigError("split_ratios must have exactly three values")
        if any(r < 0 for r in self.split_ratios) or abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios {self.split_ratios} must be >= 0 and sum to 1")


@dataclass(frozen=True)
class EvalConfig:
    noise_kinds: tuple[str, ...] = ("white", "pink", "red")
    snr_points_db: tuple[float, ...] = (0.0, 5.0, 10.0)
    n_segments: int = 500
    unseen_kinds: tuple[str, ...] = ()
    tsne_perplexity: float = 30.0
    tsne_iterations: int = 1000
    spectrogram_window_s: float = 0.064
    spectrogram_hop_s: float = 0.008
    degradation_kind: str = "white"
    degradation_snr_db: float = 0.0
    classifier_epochs: int = 10

    def __post_init__(self) -> None:
        if not self.noise_kinds:
            raise ConfigError("eval noise_kinds must not be empty")
        if not self.snr_points_db:
            raise ConfigError("eval snr_points_db must not be empty")
        if self.n_segments < 1:
            raise ConfigError("eval n_segments must be >= 1")
        if self.tsne_perplexity <= 0:
            raise ConfigError("tsne_perplexity must be positive")
        if self.tsne_iterations < 250:
            raise ConfigError("tsne_iterations must be >= 250")
        if not 0 < self.spectrogram_hop_s <= self.spectrogram_window_s:
            raise ConfigError("spectrogram hop must satisfy 0 < hop <= window")
        if self.classifier_epochs < 1:
            raise ConfigError("classifier_epochs must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    data: DataConfig = DataConfig()
    segmentation: SegmentationParams = SegmentationParams()
    augment: AugmentPolicy = AugmentPolicy()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_str_tuple(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _opt(parser: Callable[[str], Any]) -> Callable[[str], Any]:
    def inner(text: str) -> Any:
        return None if not text.strip() else parser(text)

    return inner


# section -> key -> value parser. This is the complete config surface.
_SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "run": {"seed": int, "out_dir": str},
    "data": {
        "root": _opt(str),
        "noise_bank_root": _opt(str),
        "expected_per_class": _opt(int),
        "split_ratios": _parse_float_tuple,
        "use_cache": _parse_bool,
    },
    "segmentation": {
        "segment_len_s": float,
        "hop_s": float,
        "target_rate_hz": int,
    },
    "augment": {
        "noise_kinds": _parse_str_tuple,
        "snr_min_db": float,
        "snr_max_db": float,
        "noise_prob": float,
        "sustained_min_fraction": float,
        "sustained_max_fraction": float,
        "mask_count": int,
        "mask_max_fraction": float,
        "mask_prob": float,
        "gain_min_db": float,
        "gain_max_db": float,
        "gain_min_duration_s": float,
        "gain_prob": float,
    },
    "model": {
        "levels": int,
        "base_channels": int,
        "channel_multiplier": int,
        "kernel_size": int,
        "dropout_rate": float,
        "lstm_skips": _parse_bool,
        "lstm_hidden_per_direction": _opt(int),
        "skip_merge": str,
        "projection_hidden": int,
        "projection_dim": int,
        "input_len": int,
    },
    "train": {
        "learning_rate": float,
        "batch_size": int,
        "epochs": int,
        "contrastive_weight": float,
        "temperature": float,
        "include_positive_in_denominator": _parse_bool,
        "optimizer": str,
    },
    "eval": {
        "noise_kinds": _parse_str_tuple,
        "snr_points_db": _parse_float_tuple,
        "n_segments": int,
        "unseen_kinds": _parse_str_tuple,
        "tsne_perplexity": float,
        "tsne_iterations": int,
        "spectrogram_window_s": float,
        "spectrogram_hop_s": float,
        "degradation_kind": str,
        "degradation_snr_db": float,
        "classifier_epochs": int,
    },
}


def _read_ini(path: Path) -> dict[str, dict[str, Any]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown config section [{section}] "
                f"(known: {', '.join(sorted(_SCHEMA))})"
            )
        values[section] = {}
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}] "
                    f"(known: {', '.join(sorted(_SCHEMA[section]))})"
                )
            try:
                values[section][key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key} = {raw!r}: {exc}") from exc
    return values


def load_config(
    path: str | Path | None = None,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    """Defaults, overlaid with the INI file, then with CLI overrides."""
    values: dict[str, dict[str, Any]] = {}
    if path is not None:
        ini = Path(path)
        if not ini.exists():
            raise ConfigError(f"config file not found: {ini}")
        values = _read_ini(ini)
    run = values.get("run", {})
    seed = seed_override if seed_override is not None else run.get("seed", 0)
    out_dir = out_override if out_override is not None else run.get("out_dir", "runs/default")
    try:
        data = DataConfig(**values.get("data", {}))
        segmentation = SegmentationParams(**values.get("segmentation", {}))
        aug = values.get("augment", {})
        augment = AugmentPolicy(
            noise_kinds=aug.get("noise_kinds", ("white", "pink", "red")),
            noise_snr_range_db=(aug.get("snr_min_db", 0.0), aug.get("snr_max_db", 10.0)),
            noise_prob=aug.get("noise_prob", 1.0),
            sustained_fraction_range=(
                aug.get("sustained_min_fraction", 0.3),
                aug.get("sustained_max_fraction", 1.0),
            ),
            mask_count=aug.get("mask_count", 1),
            mask_max_fraction=aug.get("mask_max_fraction", 0.1),
            mask_prob=aug.get("mask_prob", 0.3),
            gain_min_db=aug.get("gain_min_db", -6.0),
            gain_max_db=aug.get("gain_max_db", 6.0),
            gain_min_duration_s=aug.get("gain_min_duration_s", 0.25),
            gain_prob=aug.get("gain_prob", 0.3),
            seed=seed,
        )
        model = ModelConfig(**values.get("model", {}))
        train = TrainConfig(**values.get("train", {}), seed=seed)
        eval_cfg = EvalConfig(**values.get("eval", {}))
    except (DataError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        data=data,
        segmentation=segmentation,
        augment=augment,
        model=model,
        train=train,
        eval=eval_cfg,
    )


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def resolved_sections(config: RunConfig) -> dict[str, dict[str, str]]:
    """Every effective setting, serialized; the inverse of load_config."""
    return {
        "run": {"seed": str(config.seed), "out_dir": config.out_dir},
        "data": {
            "root": _format_value(config.data.root),
            "noise_bank_root": _format_value(config.data.noise_bank_root),
            "expected_per_class": _format_value(config.data.expected_per_class),
            "split_ratios": _format_value(config.data.split_ratios),
            "use_cache": _format_value(config.data.use_cache),
        },
        "segmentation": {
            "segment_len_s": _format_value(config.segmentation.segment_len_s),
            "hop_s": _format_value(config.segmentation.hop_s),
            "target_rate_hz": _format_value(config.segmentation.target_rate_hz),
        },
        "augment": {
            "noise_kinds": _format_value(config.augment.noise_kinds),
            "snr_min_db": _format_value(config.augment.noise_snr_range_db[0]),
            "snr_max_db": _format_value(config.augment.noise_snr_range_db[1]),
            "noise_prob": _format_value(config.augment.noise_prob),
            "sustained_min_fraction": _format_value(config.augment.sustained_fraction_range[0]),
            "sustained_max_fraction": _format_value(config.augment.sustained_fraction_range[1]),
            "mask_count": _format_value(config.augment.mask_count),
            "mask_max_fraction": _format_value(config.augment.mask_max_fraction),
            "mask_prob": _format_value(config.augment.mask_prob),
            "gain_min_db": _format_value(config.augment.gain_min_db),
            "gain_max_db": _format_value(config.augment.gain_max_db),
            "gain_min_duration_s": _format_value(config.augment.gain_min_duration_s),
            "gain_prob": _format_value(config.augment.gain_prob),
        },
        "model": {
            "levels": _format_value(config.model.levels),
            "base_channels": _format_value(config.model.base_channels),
            "channel_multiplier": _format_value(config.model.channel_multiplier),
            "kernel_size": _format_value(config.model.kernel_size),
            "dropout_rate": _format_value(config.model.dropout_rate),
            "lstm_skips": _format_value(config.model.lstm_skips),
            "lstm_hidden_per_direction": _format_value(config.model.lstm_hidden_per_direction),
            "skip_merge": config.model.skip_merge,
            "projection_hidden": _format_value(config.model.projection_hidden),
            "projection_dim": _format_value(config.model.projection_dim),
            "input_len": _format_value(config.model.input_len),
        },
        "train": {
            "learning_rate": _format_value(config.train.learning_rate),
            "batch_size": _format_value(config.train.batch_size),
            "epochs": _format_value(config.train.epochs),
            "contrastive_weight": _format_value(config.train.contrastive_weight),
            "temperature": _format_value(config.train.temperature),
            "include_positive_in_denominator": _format_value(
                config.train.include_positive_in_denominator
            ),
            "optimizer": config.train.optimizer,
        },
        "eval": {
            "noise_kinds": _format_value(config.eval.noise_kinds),
            "snr_points_db": _format_value(config.eval.snr_points_db),
            "n_segments": _format_value(config.eval.n_segments),
            "unseen_kinds": _format_value(config.eval.unseen_kinds),
            "tsne_perplexity": _format_value(config.eval.tsne_perplexity),
            "tsne_iterations": _format_value(config.eval.tsne_iterations),
            "spectrogram_window_s": _format_value(config.eval.spectrogram_window_s),
            "spectrogram_hop_s": _format_value(config.eval.spectrogram_hop_s),
            "degradation_kind": config.eval.degradation_kind,
            "degradation_snr_db": _format_value(config.eval.degradation_snr_db),
            "classifier_epochs": _format_value(config.eval.classifier_epochs),
        },
    }


def write_resolved(config: RunConfig, path: str | Path) -> None:
    """Echo the fully resolved configuration before any work starts."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, keys in resolved_sections(config).items():
        parser[section] = keys
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)


def with_overrides(
    config: RunConfig, contrastive_weight: float | None = None
) -> RunConfig:
    """Apply targeted command-line overrides that bypass the config file."""
    if contrastive_weight is None:
        return config
    return replace(config, train=replace(config.train, contrastive_weight=contrastive_weight))
