from __future__ import annotations

import numpy as np
import pytest

from src.core.errors import ConfigError, ShapeError
from src.core.rng import Rng
from src.autodiff import ops
from src.autodiff.tensor import Tensor, default_dtype
from src.cagan import blocks
from src.cagan.complexity import count_flops, count_params, describe
from src.cagan.config import BlockConfig, NetConfig
from src.cagan.discriminator import discriminator_forward, init_discriminator
from src.cagan.generator import generator_forward, init_generator
from src.cagan.layers import conv_spec, init_params
from src.trainer.ablation import DEFAULT_VARIANTS
from src.trainer.gradcheck_suite import TOY_NET


def _block_params(plan, seed: int = 0):
    with default_dtype(np.float64):
        return init_params("blk", plan, Rng(seed))


def _zero(params) -> None:
    for _, t in params:
        t.data = np.zeros_like(t.data)


class TestBlocks:
    def test_ca_zero_weights_quarter_gate(self, rng):
        cfg = BlockConfig(gn_groups=2, reduction=2)
        params = _block_params(blocks.plan_ca_block("b", 8, cfg, 1))
        _zero(params)
        x = rng.normal(size=(1, 8, 5, 4))
        y = blocks.ca_block(Tensor(x), params.scope("b"), cfg)
        np.testing.assert_allclose(y.data, 0.25 * x)

    def test_se_zero_weights_half_gate(self, rng):
        cfg = BlockConfig(attention="SE", reduction=2)
        params = _block_params(blocks.plan_se_block("b", 8, cfg, 1))
        _zero(params)
        x = rng.normal(size=(2, 8, 3, 3))
        np.testing.assert_allclose(blocks.se_block(Tensor(x), params.scope("b"), cfg).data, 0.5 * x)

    @pytest.mark.parametrize("attention", ["CA", "SE"])
    def test_gates_shrink_magnitudes(self, rng, attention):
        cfg = BlockConfig(gn_groups=2, reduction=2, attention=attention)
        params = _block_params(blocks.plan_attention("b", 8, cfg, 1), seed=4)
        x = rng.normal(size=(2, 8, 6, 6))
        y = blocks.attention(Tensor(x), params.scope("b"), cfg).data
        assert np.all(np.abs(y) <= np.abs(x))

    def test_ca_reduction_larger_than_channels(self, rng):
        cfg = BlockConfig(gn_groups=1, reduction=16)
        params = _block_params(blocks.plan_ca_block("b", 8, cfg, 1))
        with pytest.raises(ConfigError):
            blocks.ca_block(Tensor(rng.normal(size=(1, 8, 4, 4))), params.scope("b"), cfg)

    def test_s1_zero_branch_is_shuffled_identity(self, rng):
        cfg = BlockConfig(gn_groups=2, shuffle_groups=2, attention="none")
        params = _block_params(blocks.plan_shuffle_s1("b", 8, cfg, 1))
        params["b.n3.gamma"].data[:] = 0.0
        params["b.n3.beta"].data[:] = 0.0
        x = rng.normal(size=(1, 8, 4, 4))
        y = blocks.shuffle_block_s1(Tensor(x), params.scope("b"), cfg)
        expected = ops.channel_shuffle(Tensor(np.concatenate([x[:, :4], np.zeros((1, 4, 4, 4))], axis=1)), 2)
        np.testing.assert_array_equal(y.data, expected.data)

    def test_s1_needs_even_channels(self, rng):
        cfg = BlockConfig(gn_groups=1, shuffle_groups=1, attention="none")
        params = _block_params(blocks.plan_shuffle_s1("b", 6, cfg, 1))
        with pytest.raises(ShapeError):
            blocks.shuffle_block_s1(Tensor(rng.normal(size=(1, 7, 4, 4))), params.scope("b"), cfg)

    def test_s2_halves_resolution_and_sets_width(self, rng):
        cfg = BlockConfig()
        params = _block_params(blocks.plan_two_branch("b", 32, 64, cfg, 2, stride=2))
        y = blocks.shuffle_block_s2(Tensor(rng.normal(size=(1, 32, 16, 16))), params.scope("b"), cfg, 64)
        assert y.shape == (1, 64, 8, 8)


class TestNetworks:
    def test_generator_shape_and_determinism(self, rng):
        with default_dtype(np.float64):
            params = init_generator(TOY_NET, Rng(1)).eval()
        for shape in [(1, 1, 16, 16), (2, 1, 32, 48)]:
            x = Tensor(rng.normal(size=shape))
            a = generator_forward(x, params, TOY_NET)
            b = generator_forward(x, params, TOY_NET)
            assert a.shape == shape
            np.testing.assert_array_equal(a.data, b.data)

    def test_generator_rejects_indivisible_input(self, rng):
        with default_dtype(np.float64):
            params = init_generator(TOY_NET, Rng(1))
        with pytest.raises(ShapeError):
            generator_forward(Tensor(rng.normal(size=(1, 1, 24, 16))), params, TOY_NET)

    def test_discriminator_probabilities(self, rng):
        with default_dtype(np.float64):
            params = init_discriminator(TOY_NET, Rng(2))
        p = discriminator_forward(Tensor(rng.normal(size=(2, 1, 16, 16))), params, TOY_NET)
        assert p.shape == (2, 1)
        assert np.all((p.data > 0.0) & (p.data < 1.0))

    @pytest.mark.parametrize("variant", DEFAULT_VARIANTS, ids=lambda v: v.name)
    def test_every_ablation_variant_builds(self, rng, variant):
        block = BlockConfig(gn_groups=4, shuffle_groups=8, reduction=4)
        updates = {k.rsplit(".", 1)[1]: v for k, v in variant.overrides.items() if k.startswith("net.block.")}
        cfg = NetConfig(stage_channels=[16, 32, 32, 32], bottleneck_channels=64, block=block.model_copy(update=updates))
        with default_dtype(np.float64):
            params = init_generator(cfg, Rng(0))
        y = generator_forward(Tensor(rng.normal(size=(2, 1, 32, 32))), params, cfg)
        assert y.shape == (2, 1, 32, 32)
        assert params.numel() == count_params(cfg)


class TestComplexity:
    def test_single_pointwise_conv(self):
        spec = conv_spec("c", 32, 64, bias=True)
        assert spec.param_count == 2112
        assert spec.macs(16, 32) == 2 * spec.macs(16, 16)

    def test_default_generator_bracket(self):
        assert 1_500_000 <= count_params(NetConfig()) <= 2_500_000

    def test_plan_matches_allocated_parameters(self):
        cfg = NetConfig()
        assert init_generator(cfg, Rng(0)).numel() == count_params(cfg)
        assert init_discriminator(cfg, Rng(0)).numel() == count_params(cfg, "discriminator")

    def test_vanilla_is_at_least_four_times_larger(self):
        shuffle = count_params(NetConfig())
        vanilla = count_params(NetConfig(block=BlockConfig(conv_kind="vanilla")))
        assert vanilla / shuffle >= 4.0

    def test_attention_overhead_is_small(self):
        with_ca = count_params(NetConfig())
        without = count_params(NetConfig(block=BlockConfig(attention="none")))
        assert 0.0 < (with_ca - without) / without < 0.08

    def test_macs_scale_with_area(self):
        # attention layers run over H+W positions; without them every layer is per pixel
        cfg = TOY_NET.model_copy(update={"block": TOY_NET.block.model_copy(update={"attention": "none"})})
        assert count_flops(cfg, 32, 32) == 4 * count_flops(cfg, 16, 16)

    def test_describe_tables(self):
        tables = describe(TOY_NET, 16, 16)
        assert [t.title for t in tables] == ["generator @ 16x16", "discriminator @ 16x16"]
