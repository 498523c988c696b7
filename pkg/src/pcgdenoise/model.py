"""1D U-Net denoiser with recurrent skip connections and a projection head.

The encoder halves the time axis at each level with a strided convolution;
the decoder mirrors it with transposed convolutions. Each skip connection
passes through a bidirectional LSTM sized so the feature width is preserved,
and the bottleneck feeds a small projection head that produces unit-norm
embeddings for the contrastive objective.

All stochastic behaviour (weight init, dropout) draws from explicit
torch.Generator objects so that runs are reproducible without touching
global RNG state.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import torch
from torch import nn

from .errors import CheckpointError, ConfigError, NumericalError

CHECKPOINT_FORMAT = "pcgdenoise-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    lstm_hidden_per_direction=None sizes each skip LSTM to half the level's
    channel count, so the bidirectional output width equals the input width.
    """

    levels: int = 4
    base_channels: int = 16
    channel_multiplier: int = 2
    kernel_size: int = 15
    dropout_rate: float = 0.1
    lstm_skips: bool = True
    lstm_hidden_per_direction: int | None = None
    skip_merge: str = "concat"
    projection_hidden: int = 64
    projection_dim: int = 32
    input_len: int = 3008

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.base_channels < 1 or self.channel_multiplier < 1:
            raise ConfigError("base_channels and channel_multiplier must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be odd so convolutions preserve length")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.skip_merge not in ("concat", "sum"):
            raise ConfigError(f"unknown skip_merge {self.skip_merge!r}")
        if self.projection_hidden < 1 or self.projection_dim < 1:
            raise ConfigError("projection head dimensions must be >= 1")
        if self.lstm_hidden_per_direction is not None and self.lstm_hidden_per_direction < 1:
            raise ConfigError("lstm_hidden_per_direction must be >= 1 when given")
        divisor = 2**self.levels
        if self.input_len < divisor or self.input_len % divisor != 0:
            raise ConfigError(
                f"input_len={self.input_len} must be divisible by 2^levels={divisor}"
            )
        if self.skip_merge == "sum":
            for level, c in enumerate(self.channels()):
                if self.skip_width(level) != c:
                    raise ConfigError(
                        "sum merge requires skip output width == channel count; "
                        "use even channel counts with lstm_hidden_per_direction=None"
                    )

    def channels(self) -> list[int]:
        return [self.base_channels * self.channel_multiplier**i for i in range(self.levels)]

    def bottleneck_channels(self) -> int:
        return self.base_channels * self.channel_multiplier**self.levels

    def lstm_hidden(self, level: int) -> int:
        if self.lstm_hidden_per_direction is not None:
            return self.lstm_hidden_per_direction
        return max(1, self.channels()[level] // 2)

    def skip_width(self, level: int) -> int:
        if not self.lstm_skips:
            return self.channels()[level]
        return 2 * self.lstm_hidden(level)


class UNet1d(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        chans = config.channels()
        pad = config.kernel_size // 2
        self.enc_convs = nn.ModuleList()
        self.downs = nn.ModuleList()
        prev = 1
        for c in chans:
            self.enc_convs.append(nn.Conv1d(prev, c, config.kernel_size, padding=pad))
            self.downs.append(nn.Conv1d(c, c, kernel_size=2, stride=2))
            prev = c
        self.skip_lstms = nn.ModuleList()
        if config.lstm_skips:
            for level, c in enumerate(chans):
                self.skip_lstms.append(
                    nn.LSTM(
                        input_size=c,
                        hidden_size=config.lstm_hidden(level),
                        batch_first=True,
                        bidirectional=True,
                    )
                )
        cb = config.bottleneck_channels()
        self.bottleneck = nn.Conv1d(chans[-1], cb, config.kernel_size, padding=pad)
        self.ups = nn.ModuleList()
        self.dec_convs = nn.ModuleList()
        above = cb
        for level in reversed(range(config.levels)):
            c = chans[level]
            self.ups.append(nn.ConvTranspose1d(above, c, kernel_size=2, stride=2))
            merged = c + config.skip_width(level) if config.skip_merge == "concat" else c
            self.dec_convs.append(nn.Conv1d(merged, c, config.kernel_size, padding=pad))
            above = c
        self.head = nn.Conv1d(chans[0], 1, config.kernel_size, padding=pad)
        self.proj_fc1 = nn.Linear(cb, config.projection_hidden)
        self.proj_fc2 = nn.Linear(config.projection_hidden, config.projection_dim)

    def forward(
        self, x: torch.Tensor, dropout_generator: torch.Generator | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Map a batch [m, input_len] to (denoised [m, input_len], bottleneck)."""
        if x.dim() != 2:
            raise NumericalError(f"expected a 2D batch, got shape {tuple(x.shape)}")
        if x.shape[1] != self.config.input_len:
            raise NumericalError(
                f"input length {x.shape[1]} does not match config.input_len={self.config.input_len}"
            )
        if not torch.isfinite(x).all():
            raise NumericalError("non-finite values in model input")
        h = x.unsqueeze(1)
        skips: list[torch.Tensor] = []
        for level in range(self.config.levels):
            h = torch.relu(self.enc_convs[level](h))
            h = _dropout(h, self.config.dropout_rate, dropout_generator)
            skips.append(h)
            h = torch.relu(self.downs[level](h))
        hb = torch.relu(self.bottleneck(h))
        h = hb
        for i, level in enumerate(reversed(range(self.config.levels))):
            h = torch.relu(self.ups[i](h))
            skip = skips[level]
            if self.config.lstm_skips:
                # LSTM wants [batch, time, features]; skips are [batch, ch, time].
                skip, _ = self.skip_lstms[level](skip.transpose(1, 2))
                skip = skip.transpose(1, 2)
            if self.config.skip_merge == "concat":
                h = torch.cat([h, skip], dim=1)
            else:
                h = h + skip
            h = torch.relu(self.dec_convs[i](h))
        y = self.head(h).squeeze(1)
        return y, hb

    def project(self, hb: torch.Tensor) -> torch.Tensor:
        """Bottleneck activations to L2-normalized embeddings [m, projection_dim]."""
        pooled = hb.mean(dim=2)
        z = self.proj_fc2(torch.relu(self.proj_fc1(pooled)))
        return z / z.norm(dim=1, keepdim=True).clamp_min(1e-12)


def _dropout(h: torch.Tensor, rate: float, generator: torch.Generator | None) -> torch.Tensor:
    """Inverted dropout from an explicit generator; identity when disabled."""
    if generator is None or rate <= 0.0:
        return h
    keep = 1.0 - rate
    mask = torch.rand(h.shape, generator=generator, dtype=h.dtype, device=h.device) < keep
    return h * mask.to(h.dtype) / keep


@dataclass
class ModelState:
    config: ModelConfig
    seed: int
    net: UNet1d
    step: int = 0
    epoch: int = 0
    extra: dict[str, Any] = field(default_factory=dict)


def init_model(config: ModelConfig, seed: int, dtype: torch.dtype = torch.float32) -> ModelState:
    """Build the network and initialize every parameter from the seed."""
    net = UNet1d(config)
    generator = torch.Generator().manual_seed(seed)
    for module in net.modules():
        init_module_params(module, generator)
    if dtype is not torch.float32:
        net = net.to(dtype)
    return ModelState(config=config, seed=seed, net=net)


def init_module_params(module: nn.Module, generator: torch.Generator) -> None:
    """Seeded re-initialization for conv / linear / LSTM layers."""
    if isinstance(module, (nn.Conv1d, nn.ConvTranspose1d)):
        w = module.weight
        if isinstance(module, nn.ConvTranspose1d):
            fan_in = w.shape[0] * w.shape[2]  # weight is [in, out, k]
        else:
            fan_in = w.shape[1] * w.shape[2]  # weight is [out, in, k]
        bound = 1.0 / math.sqrt(fan_in)
        with torch.no_grad():
            w.uniform_(-bound, bound, generator=generator)
            if module.bias is not None:
                module.bias.uniform_(-bound, bound, generator=generator)
    elif isinstance(module, nn.Linear):
        bound = 1.0 / math.sqrt(module.weight.shape[1])
        with torch.no_grad():
            module.weight.uniform_(-bound, bound, generator=generator)
            if module.bias is not None:
                module.bias.uniform_(-bound, bound, generator=generator)
    elif isinstance(module, nn.LSTM):
        hidden = module.hidden_size
        bound = 1.0 / math.sqrt(hidden)
        with torch.no_grad():
            for name, param in module.named_parameters():
                if name.startswith("weight_ih"):
                    param.uniform_(-bound, bound, generator=generator)
                elif name.startswith("weight_hh"):
                    # Orthogonal per gate block keeps recurrence well conditioned.
                    for g in range(4):
                        param[g * hidden : (g + 1) * hidden].copy_(_orthogonal(hidden, generator))
                elif name.startswith("bias"):
                    param.zero_()
                    if name.startswith("bias_ih"):
                        param[hidden : 2 * hidden].fill_(1.0)  # forget gate


def _orthogonal(n: int, generator: torch.Generator) -> torch.Tensor:
    a = torch.randn(n, n, generator=generator)
    q, r = torch.linalg.qr(a)
    return q * torch.sign(torch.diagonal(r)).unsqueeze(0)


def forward(
    state: ModelState, x: torch.Tensor, dropout_generator: torch.Generator | None = None
) -> tuple[torch.Tensor, torch.Tensor]:
    return state.net(x, dropout_generator=dropout_generator)


def project(state: ModelState, hb: torch.Tensor) -> torch.Tensor:
    return state.net.project(hb)


def parameter_count(state: ModelState) -> int:
    return sum(p.numel() for p in state.net.parameters())


def lstm_parameter_count(state: ModelState) -> int:
    return sum(p.numel() for m in state.net.skip_lstms for p in m.parameters())


def parameter_groups(state: ModelState) -> dict[str, list[tuple[str, nn.Parameter]]]:
    """Named parameters bucketed into conv / bilstm / projection groups."""
    groups: dict[str, list[tuple[str, nn.Parameter]]] = {"conv": [], "bilstm": [], "projection": []}
    for name, param in state.net.named_parameters():
        if name.startswith("skip_lstms"):
            groups["bilstm"].append((name, param))
        elif name.startswith("proj_"):
            groups["projection"].append((name, param))
        else:
            groups["conv"].append((name, param))
    return groups


def save_checkpoint(
    state: ModelState,
    path: str | Path,
    optimizer_state: dict[str, Any] | None = None,
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "seed": state.seed,
        "step": state.step,
        "epoch": state.epoch,
        "extra": dict(state.extra),
        "state_dict": state.net.state_dict(),
        "optimizer_state": optimizer_state,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[ModelState, dict[str, Any] | None]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')!r} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        config = ModelConfig(**payload["config"])
        net = UNet1d(config)
        net.load_state_dict(payload["state_dict"])
        state = ModelState(
            config=config,
            seed=int(payload["seed"]),
            net=net,
            step=int(payload["step"]),
            epoch=int(payload["epoch"]),
            extra=dict(payload.get("extra") or {}),
        )
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    return state, payload.get("optimizer_state")
