import dataclasses

import pytest
import torch

from pcgdenoise.errors import CheckpointError, ConfigError, NumericalError
from pcgdenoise.model import (
    CHECKPOINT_VERSION,
    ModelConfig,
    forward,
    init_model,
    load_checkpoint,
    lstm_parameter_count,
    parameter_count,
    parameter_groups,
    project,
    save_checkpoint,
)


def micro(**overrides) -> ModelConfig:
    base = dict(
        levels=2, base_channels=4, kernel_size=3, input_len=64,
        dropout_rate=0.0, projection_hidden=8, projection_dim=4,
    )
    base.update(overrides)
    return ModelConfig(**base)


class TestModelConfig:
    def test_channel_schedule(self):
        cfg = ModelConfig(levels=4, base_channels=16, channel_multiplier=2)
        assert cfg.channels() == [16, 32, 64, 128]
        assert cfg.bottleneck_channels() == 256
        assert cfg.lstm_hidden(0) == 8
        assert cfg.skip_width(0) == 16

    def test_rejects_indivisible_input_len(self):
        # 1.5 s at 2000 Hz is 3000 samples; 3000 % 2**4 != 0, hence the
        # padded default of 3008
        with pytest.raises(ConfigError, match="divisible"):
            ModelConfig(levels=4, input_len=3000)
        ModelConfig(levels=4, input_len=3008)

    def test_rejects_bad_fields(self):
        with pytest.raises(ConfigError):
            micro(levels=0)
        with pytest.raises(ConfigError):
            micro(dropout_rate=1.0)
        with pytest.raises(ConfigError):
            micro(skip_merge="average")
        with pytest.raises(ConfigError):
            micro(kernel_size=4)  # same-padding needs odd kernels

    def test_sum_merge_width_constraint(self):
        micro(skip_merge="sum")
        with pytest.raises(ConfigError):
            micro(skip_merge="sum", base_channels=5, lstm_skips=True)


class TestForward:
    @pytest.mark.parametrize("input_len", [32, 64, 160])
    def test_output_matches_input_shape(self, input_len):
        state = init_model(micro(input_len=input_len), seed=0)
        x = torch.randn(3, input_len, generator=torch.Generator().manual_seed(1))
        y, hb = forward(state, x)
        assert y.shape == (3, input_len)
        assert hb.shape == (3, 16, input_len // 4)

    def test_rejects_wrong_length_and_rank(self, micro_state):
        with pytest.raises(NumericalError):
            forward(micro_state, torch.zeros(2, 65))
        with pytest.raises(NumericalError):
            forward(micro_state, torch.zeros(64))

    def test_rejects_non_finite_input(self, micro_state):
        x = torch.zeros(1, 64)
        x[0, 3] = float("nan")
        with pytest.raises(NumericalError):
            forward(micro_state, x)

    def test_identity_skips_and_sum_merge_run(self):
        x = torch.randn(2, 64, generator=torch.Generator().manual_seed(2))
        for cfg in (micro(lstm_skips=False), micro(skip_merge="sum")):
            y, _ = forward(init_model(cfg, seed=0), x)
            assert y.shape == (2, 64)

    def test_projection_rows_unit_norm(self, micro_state):
        x = torch.randn(5, 64, generator=torch.Generator().manual_seed(3))
        _, hb = forward(micro_state, x)
        z = project(micro_state, hb)
        assert z.shape == (5, 4)
        torch.testing.assert_close(z.norm(dim=1), torch.ones(5))


class TestInit:
    def test_same_seed_same_weights(self):
        a = init_model(micro(), seed=42)
        b = init_model(micro(), seed=42)
        c = init_model(micro(), seed=43)
        for (name, pa), (_, pb) in zip(
            a.net.named_parameters(), b.net.named_parameters()
        ):
            assert torch.equal(pa, pb), name
        assert any(
            not torch.equal(pa, pc)
            for (_, pa), (_, pc) in zip(a.net.named_parameters(), c.net.named_parameters())
        )

    def test_lstm_toggle_parameter_delta(self):
        with_lstm = init_model(micro(lstm_skips=True), seed=0)
        without = init_model(micro(lstm_skips=False), seed=0)
        delta = parameter_count(with_lstm) - parameter_count(without)
        assert delta == lstm_parameter_count(with_lstm) > 0

    def test_lstm_forget_gate_bias(self, micro_state):
        lstm = micro_state.net.skip_lstms[0]
        h = lstm.hidden_size
        bias = lstm.bias_ih_l0
        assert torch.all(bias[h : 2 * h] == 1.0)
        assert torch.all(bias[:h] == 0.0)
        assert torch.all(lstm.bias_hh_l0 == 0.0)

    def test_lstm_recurrent_blocks_orthogonal(self, micro_state):
        w = micro_state.net.skip_lstms[0].weight_hh_l0
        h = micro_state.net.skip_lstms[0].hidden_size
        for g in range(4):
            block = w[g * h : (g + 1) * h].double()
            torch.testing.assert_close(
                block @ block.T, torch.eye(h, dtype=torch.float64), atol=1e-5, rtol=0
            )

    def test_parameter_groups_partition(self, micro_state):
        groups = parameter_groups(micro_state)
        names = [name for group in groups.values() for name, _ in group]
        assert sorted(names) == sorted(n for n, _ in micro_state.net.named_parameters())
        assert all(groups[key] for key in ("conv", "bilstm", "projection"))


class TestDropout:
    def test_generator_determinism(self):
        state = init_model(micro(dropout_rate=0.5), seed=0)
        x = torch.randn(2, 64, generator=torch.Generator().manual_seed(4))
        y1, _ = forward(state, x, dropout_generator=torch.Generator().manual_seed(9))
        y2, _ = forward(state, x, dropout_generator=torch.Generator().manual_seed(9))
        y3, _ = forward(state, x, dropout_generator=torch.Generator().manual_seed(10))
        assert torch.equal(y1, y2)
        assert not torch.equal(y1, y3)

    def test_no_generator_means_no_dropout(self):
        state = init_model(micro(dropout_rate=0.5), seed=0)
        x = torch.randn(2, 64, generator=torch.Generator().manual_seed(4))
        y1, _ = forward(state, x)
        y2, _ = forward(state, x)
        assert torch.equal(y1, y2)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, micro_state):
        micro_state.step = 17
        micro_state.epoch = 3
        micro_state.extra["best_metric"] = 0.125
        path = tmp_path / "ckpt.pt"
        opt_state = {"lr": 1e-3}
        save_checkpoint(micro_state, path, optimizer_state=opt_state)
        loaded, loaded_opt = load_checkpoint(path)
        assert loaded.config == micro_state.config
        assert (loaded.seed, loaded.step, loaded.epoch) == (1, 17, 3)
        assert loaded.extra == {"best_metric": 0.125}
        assert loaded_opt == opt_state
        for key, value in micro_state.net.state_dict().items():
            assert torch.equal(loaded.net.state_dict()[key], value), key
        assert not (tmp_path / "ckpt.pt.tmp").exists()

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "nope.pt")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.pt"
        path.write_bytes(b"\x00" * 64)
        with pytest.raises(CheckpointError, match="unreadable"):
            load_checkpoint(path)

    def test_foreign_payload(self, tmp_path):
        path = tmp_path / "foreign.pt"
        torch.save({"weights": torch.zeros(3)}, path)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path, micro_state):
        path = tmp_path / "ckpt.pt"
        save_checkpoint(micro_state, path)
        payload = torch.load(path, weights_only=True)
        payload["version"] = CHECKPOINT_VERSION + 1
        torch.save(payload, path)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path, micro_state):
        path = tmp_path / "ckpt.pt"
        save_checkpoint(micro_state, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_config_is_frozen(micro_config):
    with pytest.raises(dataclasses.FrozenInstanceError):
        micro_config.levels = 3
