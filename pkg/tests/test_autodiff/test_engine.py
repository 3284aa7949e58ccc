from __future__ import annotations

import numpy as np
import pytest

from src.core.errors import DegenerateBatchError, ShapeError, UsageError
from src.autodiff import ops
from src.autodiff.conv import conv2d, conv_transpose2d, maxpool2d
from src.autodiff.gradcheck import grad_check
from src.autodiff.norm import batch_norm, group_norm
from src.autodiff.optim import AdamState, adam_step
from src.autodiff.params import ModelParams
from src.autodiff.tensor import Tensor, default_dtype, no_grad


def _naive_conv(x, w, b, stride, padding, groups):
    n, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    cout_g = cout // groups
    for s in range(n):
        for o in range(cout):
            g = o // cout_g
            for i in range(ho):
                for j in range(wo):
                    patch = xp[s, g * cin_g:(g + 1) * cin_g, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[s, o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return out


class TestTensorGraph:
    def test_mean_gradient(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        ops.mean(x).backward()
        np.testing.assert_allclose(x.grad, np.full((2, 3), 1.0 / 6.0))

    def test_sum_of_squares_gradient(self):
        data = np.array([1.0, -2.0, 3.0])
        x = Tensor(data, requires_grad=True)
        ops.sum_(ops.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, 2.0 * data)

    def test_fan_out_accumulates(self):
        x = Tensor(np.array([1.5]), requires_grad=True)
        ops.sum_(ops.add(x, x)).backward()
        np.testing.assert_allclose(x.grad, [2.0])

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = ops.square(x)
        assert not y.requires_grad and y.is_leaf

    def test_backward_needs_scalar_root(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(UsageError):
            ops.square(x).backward()

    def test_default_dtype_scope(self):
        with default_dtype(np.float32):
            assert Tensor([1, 2]).dtype == np.float32
        assert Tensor(np.ones(2, dtype=np.float32)).dtype == np.float32
        with pytest.raises(UsageError):
            with default_dtype(np.int32):
                pass

    def test_elementwise_values(self):
        assert ops.relu(Tensor([-1.0])).item() == 0.0
        assert ops.sigmoid(Tensor([0.0])).item() == 0.5
        assert ops.mean(Tensor([1.0, 2.0, 3.0])).item() == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.add(Tensor(np.ones(2)), Tensor(np.ones(3)))


class TestStructural:
    def test_channel_split_and_concat_gradient(self, rng):
        x = Tensor(rng.normal(size=(1, 6, 2, 2)), requires_grad=True)
        a, b = ops.channel_split(x)
        assert a.shape == b.shape == (1, 3, 2, 2)
        upstream = rng.normal(size=(1, 6, 2, 2))
        ops.sum_(ops.mul(ops.concat([a, b], axis=1), Tensor(upstream))).backward()
        np.testing.assert_allclose(x.grad, upstream)

    def test_channel_shuffle_is_permutation(self, rng):
        x = Tensor(rng.normal(size=(2, 8, 3, 3)))
        y = ops.channel_shuffle(x, 4)
        np.testing.assert_array_equal(np.sort(y.data.ravel()), np.sort(x.data.ravel()))
        np.testing.assert_array_equal(y.data[:, 1], x.data[:, 2])

    def test_pool_axis(self):
        x = Tensor(np.array([[1.0, 3.0], [5.0, 7.0]]).reshape(1, 1, 2, 2))
        np.testing.assert_allclose(ops.pool_axis(x, "W").data.ravel(), [2.0, 6.0])
        np.testing.assert_allclose(ops.pool_axis(x, "H").data.ravel(), [3.0, 5.0])

    def test_global_avg_pool_impulse(self):
        data = np.zeros((1, 1, 4, 5))
        data[0, 0, 1, 2] = 1.0
        assert ops.global_avg_pool(Tensor(data)).item() == pytest.approx(1.0 / 20.0)

    def test_maxpool_values_and_tie_rule(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        assert maxpool2d(x).item() == 4.0
        tie = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        ops.sum_(maxpool2d(tie)).backward()
        np.testing.assert_array_equal(tie.grad.reshape(2, 2), [[1.0, 0.0], [0.0, 0.0]])


class TestConvolution:
    @pytest.mark.parametrize("stride,padding,groups", [(1, 1, 1), (2, 1, 1), (1, 0, 2), (1, 1, 4)])
    def test_matches_loop_oracle(self, rng, stride, padding, groups):
        x = rng.normal(size=(2, 4, 5, 6))
        w = rng.normal(size=(4, 4 // groups, 3, 3))
        b = rng.normal(size=4)
        out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding, groups=groups)
        np.testing.assert_allclose(out.data, _naive_conv(x, w, b, stride, padding, groups), atol=1e-10)

    def test_transpose_is_adjoint_of_strided_conv(self, rng):
        x = rng.normal(size=(1, 3, 4, 4))
        w = rng.normal(size=(3, 2, 2, 2))
        y = conv_transpose2d(Tensor(x), Tensor(w), stride=2).data
        assert y.shape == (1, 2, 8, 8)
        z = rng.normal(size=y.shape)
        # <T x, z> == <x, C z> with C the stride-2 conv using the same kernel
        cz = conv2d(Tensor(z), Tensor(w), stride=2).data
        assert float(np.sum(y * z)) == pytest.approx(float(np.sum(x * cz)), rel=1e-10)

    def test_single_conv_gradcheck(self, rng):
        report = grad_check(lambda x, w: conv2d(x, w, padding=1), [rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(3, 2, 3, 3))])
        assert report.passed, report.failures

    def test_groups_must_divide(self, rng):
        with pytest.raises(ShapeError):
            conv2d(Tensor(rng.normal(size=(1, 3, 4, 4))), Tensor(rng.normal(size=(4, 1, 3, 3))), groups=2)


class TestNormalization:
    def test_group_norm_matches_direct_stats(self, rng):
        x = rng.normal(size=(2, 4, 3, 3)) * 3.0 + 1.0
        gamma, beta = rng.normal(size=4), rng.normal(size=4)
        out = group_norm(Tensor(x), 2, Tensor(gamma), Tensor(beta)).data
        expected = np.empty_like(x)
        for s in range(2):
            for g in range(2):
                chunk = x[s, 2 * g:2 * g + 2]
                expected[s, 2 * g:2 * g + 2] = (chunk - chunk.mean()) / np.sqrt(chunk.var() + 1e-5)
        expected = expected * gamma[None, :, None, None] + beta[None, :, None, None]
        np.testing.assert_allclose(out, expected, atol=1e-10)

    def test_batch_norm_constant_batch_is_zero(self):
        x = Tensor(np.full((2, 3, 2, 2), 4.0))
        out = batch_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), np.zeros(3), np.ones(3), training=True)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_batch_norm_eval_uses_running_stats(self):
        mu = np.array([1.0, -2.0])
        x = Tensor(np.broadcast_to(mu[None, :, None, None], (1, 2, 2, 2)).copy())
        out = batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), mu.copy(), np.ones(2), training=False)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_batch_norm_training_needs_two_samples(self):
        with pytest.raises(DegenerateBatchError):
            batch_norm(Tensor(np.ones((1, 2, 2, 2))), Tensor(np.ones(2)), Tensor(np.zeros(2)), np.zeros(2), np.ones(2), training=True)

    def test_group_norm_gradcheck(self, rng):
        report = grad_check(lambda x, g, b: group_norm(x, 2, g, b), [rng.normal(size=(2, 4, 3, 3)), rng.normal(size=4), rng.normal(size=4)])
        assert report.passed, report.failures


class TestAdam:
    def test_first_step_is_signed_lr(self):
        params = ModelParams("m")
        w = params.add("w", np.array([0.5, -0.5, 2.0]))
        w.grad = np.array([0.3, -4.0, 1e-3])
        state = AdamState.for_params(params)
        adam_step(params, state, lr=0.01)
        g = np.array([0.3, -4.0, 1e-3])
        np.testing.assert_allclose(w.data, np.array([0.5, -0.5, 2.0]) - 0.01 * g / (np.abs(g) + 1e-8))
        assert w.grad is None and state.t == 1

    def test_missing_gradient(self):
        params = ModelParams("m")
        params.add("w", np.zeros(2))
        with pytest.raises(UsageError):
            adam_step(params, AdamState.for_params(params), lr=0.1)

    def test_state_entries_round_trip(self):
        params = ModelParams("m")
        w = params.add("w", np.ones(2))
        state = AdamState.for_params(params)
        w.grad = np.array([1.0, 2.0])
        adam_step(params, state, lr=0.1)
        fresh = AdamState.for_params(params)
        fresh.load_entries("adam.m", dict(state.state_entries("adam.m")))
        assert fresh.t == 1
        np.testing.assert_array_equal(fresh.m["w"], state.m["w"])
        np.testing.assert_array_equal(fresh.v["w"], state.v["w"])
