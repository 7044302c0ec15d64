import numpy as np
import pytest
import torch

from dualstyle.errors import ConfigError, DecodeError, NumericError, ShapeError, VersionError
from dualstyle.model import (
    CHECKPOINT_VERSION,
    ModelConfig,
    dump_feature_maps,
    forward_dual,
    init_params,
    load_checkpoint,
    parameter_count,
    receptive_field,
    save_checkpoint,
)


def params_equal(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    return all(torch.equal(sa[k], sb[k]) for k in sa)


class TestConfig:
    def test_color_must_be_shallower(self):
        with pytest.raises(ConfigError):
            ModelConfig(color_branch_convs=5, texture_branch_convs=5)
        with pytest.raises(ConfigError):
            ModelConfig(color_branch_convs=6, texture_branch_convs=5)

    def test_counts_positive(self):
        with pytest.raises(ConfigError):
            ModelConfig(stem_channels=0)


class TestReceptiveField:
    def test_values(self):
        cfg = ModelConfig(color_branch_convs=1, texture_branch_convs=2)
        # stem + 1 conv -> depth 2 -> RF 5; stem alone would be 3.
        assert receptive_field(cfg, "color") == 5
        assert receptive_field(cfg, "texture") == 7

    def test_default_ordering(self):
        cfg = ModelConfig()
        assert receptive_field(cfg, "color") < receptive_field(cfg, "texture")

    def test_defaults(self):
        cfg = ModelConfig()
        assert receptive_field(cfg, "color") == 7
        assert receptive_field(cfg, "texture") == 13


class TestInit:
    def test_deterministic(self):
        a = init_params(ModelConfig(), seed=3)
        b = init_params(ModelConfig(), seed=3)
        assert params_equal(a, b)
        c = init_params(ModelConfig(), seed=4)
        assert not params_equal(a, c)

    def test_parameter_count_formula(self):
        cfg = ModelConfig()
        net = init_params(cfg, 0)
        assert sum(p.numel() for p in net.parameters()) == parameter_count(cfg)

    def test_all_finite(self):
        net = init_params(ModelConfig(), 0)
        for p in net.parameters():
            assert torch.isfinite(p).all()


class TestForward:
    def test_outputs_in_unit_range(self, rng):
        net = init_params(ModelConfig(), 0)
        color, texture = forward_dual(net, rng.random((32, 32, 3)))
        for out in (color, texture):
            assert out.shape == (32, 32, 3)
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_fully_convolutional(self, rng):
        net = init_params(ModelConfig(), 0)
        for size in (64, 128):
            color, texture = forward_dual(net, rng.random((size, size, 3)))
            assert color.shape == (size, size, 3)

    def test_unconstrained_input_stays_bounded(self, rng):
        net = init_params(ModelConfig(), 0)
        noisy = rng.random((32, 32, 3)) + rng.normal(0, 0.5, (32, 32, 3))
        color, texture = forward_dual(net, noisy)
        assert color.min() >= 0.0 and color.max() <= 1.0

    def test_undersized_input(self, rng):
        net = init_params(ModelConfig(), 0)
        with pytest.raises(ShapeError):
            forward_dual(net, rng.random((8, 8, 3)))

    def test_non_finite_input(self):
        net = init_params(ModelConfig(), 0)
        bad = np.full((32, 32, 3), np.nan)
        with pytest.raises(NumericError):
            forward_dual(net, bad)

    def test_deterministic(self, rng):
        net = init_params(ModelConfig(), 0)
        img = rng.random((32, 32, 3))
        a, _ = forward_dual(net, img)
        b, _ = forward_dual(net, img)
        np.testing.assert_array_equal(a, b)

    def test_shift_equivariance_interior(self, rng):
        net = init_params(ModelConfig(), 0)
        img = rng.random((64, 64, 3))
        shift = 8
        rolled = np.roll(img, shift, axis=1)
        base, _ = forward_dual(net, img)
        moved, _ = forward_dual(net, rolled)
        # Compare away from borders so padding effects cannot leak in.
        m = 16
        a = base[m:-m, m:-m - shift]
        b = moved[m:-m, m + shift:-m]
        assert np.abs(a - b).max() < 1e-5


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = init_params(ModelConfig(color_branch_convs=1, texture_branch_convs=3,
                                      channel_width=8, stem_channels=4), 7)
        path = tmp_path / "m.ckpt"
        save_checkpoint(net, path)
        loaded, config, extra = load_checkpoint(path)
        assert config == net.config
        assert params_equal(net, loaded)
        assert extra == {}

    def test_truncated_file(self, tmp_path):
        net = init_params(ModelConfig(), 0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(net, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(DecodeError):
            load_checkpoint(path)

    def test_future_version(self, tmp_path):
        net = init_params(ModelConfig(), 0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(net, path)
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        arrays["format_version"] = np.array(CHECKPOINT_VERSION + 1, dtype=np.int64)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
        with pytest.raises(VersionError):
            load_checkpoint(path)


class TestFeatureDump:
    def test_one_file_per_layer(self, tmp_path, rng):
        cfg = ModelConfig(color_branch_convs=2, texture_branch_convs=3,
                          stem_channels=4, channel_width=4)
        net = init_params(cfg, 0)
        paths = dump_feature_maps(net, rng.random((32, 32, 3)), tmp_path)
        assert len(paths) == 1 + cfg.color_branch_convs + cfg.texture_branch_convs
        for p in paths:
            assert (tmp_path / p.split("/")[-1]).exists()

    def test_constant_input_zero_bias(self, tmp_path):
        from dualstyle.image import load_image

        net = init_params(ModelConfig(stem_channels=4, channel_width=4,
                                      color_branch_convs=1, texture_branch_convs=2), 0)
        with torch.no_grad():
            for name, p in net.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
        paths = dump_feature_maps(net, np.full((32, 32, 3), 0.5), tmp_path)
        for p in paths:
            grid = load_image(p)
            assert grid.std() < 1e-6
