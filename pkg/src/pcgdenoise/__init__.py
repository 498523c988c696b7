"""Self-supervised denoising for heart-sound recordings.

A 1D U-Net with recurrent skip connections is trained on noisy recordings
only: each training example is re-degraded into two views that are mapped
back toward the original, with a contrastive term tying views of the same
segment together in embedding space.
"""
from .augment import AugmentPolicy, distort, gain_transition, make_views, time_mask
from .config import DataConfig, EvalConfig, RunConfig, load_config, write_resolved
from .data_io import (
    DatasetSpec,
    Manifest,
    ManifestEntry,
    SegmentCache,
    build_manifest,
    load_manifest,
    load_segment,
    load_split,
    save_manifest,
    scan,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    IntegrityError,
    NumericalError,
    PcgDenoiseError,
)
from .evaluation import (
    ClassifierConfig,
    ConditionMetrics,
    EmbeddingExport,
    SnrCell,
    Spectrogram,
    degradation_study,
    embed_segments,
    export_embeddings,
    snr_grid,
    spectrogram,
    train_classifier,
)
from .inference import denoise_samples, denoise_segment, identity_denoiser, make_denoiser
from .model import (
    ModelConfig,
    ModelState,
    UNet1d,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .noise import NoiseSpec, gen_colored, load_noise_bank, mix_at_snr
from .signal_core import (
    CLASS_LABELS,
    AudioSegment,
    SegmentationParams,
    normalize,
    read_wav,
    resample,
    segment,
    snr_db,
    write_wav,
)
from .training import (
    Augmenter,
    NoisyDataset,
    TrainConfig,
    TrainRecord,
    contrastive_loss,
    dataset_from_segments,
    fit,
    recon_loss,
    total_loss,
    train_step,
)

__version__ = "0.1.0"
