"""Core op semantics and gradient correctness."""

import numpy as np
import pytest

from conftest import conv2d_oracle
from nrsr.gradcheck import grad_check
from nrsr.tensor import (ConvSpec, ShapeMismatchError, Tensor, UnsupportedConfigError,
                         concat_channels, conv2d, deconv2d, mse_loss, prelu, take_channels)


def t(arr, grad=False):
    return Tensor(np.asarray(arr), requires_grad=grad)


class TestConv2d:
    def test_identity_kernel_passthrough(self):
        x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        out = conv2d(t(x), t(w), None, ConvSpec(1, 1))
        assert np.array_equal(out.data, x)

    def test_sum_of_ones(self):
        x = np.ones((1, 1, 2, 2), dtype=np.float32)
        w = np.ones((1, 1, 2, 2), dtype=np.float32)
        out = conv2d(t(x), t(w), None, ConvSpec(2, 2, 2, 2))
        assert out.shape == (1, 1, 1, 1)
        assert out.data.reshape(()) == 4.0

    def test_centered_identity_is_bit_exact(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 6, 7)).astype(np.float32)
        w = np.zeros((3, 3, 3, 3), dtype=np.float32)
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        spec = ConvSpec(3, 3, pad=1, in_channels=3, out_channels=3)
        out = conv2d(t(x), t(w), None, spec)
        assert np.array_equal(out.data, x)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        for seed in range(6):
            r = np.random.default_rng(seed)
            cin, cout = int(r.integers(1, 4)), int(r.integers(1, 4))
            kh, kw = int(r.integers(1, 4)), int(r.integers(1, 4))
            sh, sw = int(r.integers(1, 3)), int(r.integers(1, 3))
            pad = int(r.integers(0, 3))
            h = int(r.integers(kh, kh + 5))
            w = int(r.integers(kw, kw + 5))
            x = rng.standard_normal((2, cin, h, w))
            wt = rng.standard_normal((cout, cin, kh, kw))
            b = rng.standard_normal(cout)
            spec = ConvSpec(kh, kw, sh, sw, pad=pad, in_channels=cin, out_channels=cout)
            got = conv2d(t(x), t(wt), t(b), spec).data
            want = conv2d_oracle(x, wt, b, (sh, sw), pad)
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        spec = ConvSpec(3, 3, in_channels=2, out_channels=3)
        leaves = [rng.standard_normal((1, 2, 4, 4)), rng.standard_normal((3, 2, 3, 3)),
                  rng.standard_normal(3)]
        err = grad_check(lambda ts: conv2d(ts[0], ts[1], ts[2], spec), leaves)
        assert err <= 1e-4

    def test_shape_mismatch_rejected(self):
        x = t(np.zeros((1, 2, 4, 4), dtype=np.float32))
        w = t(np.zeros((3, 1, 3, 3), dtype=np.float32))
        spec = ConvSpec(3, 3, in_channels=1, out_channels=3)
        with pytest.raises(ShapeMismatchError, match="channels"):
            conv2d(x, w, None, spec)
        with pytest.raises(ShapeMismatchError, match="weights shape"):
            conv2d(t(np.zeros((1, 1, 4, 4), dtype=np.float32)),
                   t(np.zeros((3, 1, 2, 2), dtype=np.float32)), None, spec)


class TestDeconv2d:
    def test_single_value_broadcast(self):
        x = np.full((1, 1, 1, 1), 3.5, dtype=np.float32)
        w = np.ones((1, 1, 8, 8), dtype=np.float32)
        spec = ConvSpec(8, 8, 8, 8, in_channels=1, out_channels=1)
        out = deconv2d(t(x), t(w), None, spec)
        assert out.shape == (1, 1, 8, 8)
        assert np.all(out.data == 3.5)

    def test_disjoint_blocks(self):
        x = np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2) + 1
        w = np.ones((1, 1, 8, 8), dtype=np.float32)
        spec = ConvSpec(8, 8, 8, 8, in_channels=1, out_channels=1)
        out = deconv2d(t(x), t(w), None, spec).data
        assert out.shape == (1, 1, 16, 16)
        for i in range(2):
            for j in range(2):
                block = out[0, 0, 8 * i : 8 * i + 8, 8 * j : 8 * j + 8]
                assert np.all(block == x[0, 0, i, j])

    def test_zeroing_one_input_zeroes_one_block(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 2, 3, 3)).astype(np.float32)
        w = rng.standard_normal((2, 1, 4, 4)).astype(np.float32)
        spec = ConvSpec(4, 4, 4, 4, in_channels=2, out_channels=1)
        base = deconv2d(t(x), t(w), None, spec).data
        x2 = x.copy()
        x2[0, :, 1, 2] = 0.0
        out = deconv2d(t(x2), t(w), None, spec).data
        diff = np.abs(base - out) > 0
        changed = np.argwhere(diff)
        assert np.all(changed[:, 2] // 4 == 1)
        assert np.all(changed[:, 3] // 4 == 2)
        out[0, 0, 4:8, 8:12] = base[0, 0, 4:8, 8:12]
        assert np.array_equal(out, base)

    def test_general_stride_unsupported(self):
        spec = ConvSpec(4, 4, 2, 2, in_channels=1, out_channels=1)
        with pytest.raises(UnsupportedConfigError, match="stride"):
            deconv2d(t(np.zeros((1, 1, 2, 2), dtype=np.float32)),
                     t(np.zeros((1, 1, 4, 4), dtype=np.float32)), None, spec)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        spec = ConvSpec(4, 4, 4, 4, in_channels=2, out_channels=2)
        leaves = [rng.standard_normal((1, 2, 2, 2)), rng.standard_normal((2, 2, 4, 4)),
                  rng.standard_normal(2)]
        err = grad_check(lambda ts: deconv2d(ts[0], ts[1], ts[2], spec), leaves)
        assert err <= 1e-4


class TestPrelu:
    def test_positive_passthrough(self):
        x = np.full((1, 1, 1, 1), 2.0, dtype=np.float32)
        out = prelu(t(x), t(np.array([0.7], dtype=np.float32)))
        assert out.data.reshape(()) == 2.0

    def test_negative_scaled(self):
        x = np.full((1, 1, 1, 1), -2.0, dtype=np.float32)
        out = prelu(t(x), t(np.array([0.25], dtype=np.float32)))
        assert out.data.reshape(()) == -0.5

    def test_slope_gradient_value(self):
        # d out / d slope at x = -2 is -2, checked against finite differences
        x = np.full((1, 1, 1, 1), -2.0)
        slopes = np.array([0.25])
        xt, st = t(x), t(np.array([0.25]), grad=True)
        prelu(xt, st).backward()
        assert st.grad.reshape(()) == -2.0
        err = grad_check(lambda ts: prelu(ts[0], ts[1]), [x, slopes])
        assert err <= 1e-6

    def test_slope_count_validated(self):
        with pytest.raises(ShapeMismatchError):
            prelu(t(np.zeros((1, 3, 2, 2), dtype=np.float32)),
                  t(np.array([0.1, 0.2], dtype=np.float32)))


class TestConcat:
    def test_channel_counts_match_network_geometry(self):
        a = t(np.zeros((1, 192, 4, 4), dtype=np.float32))
        b = t(np.zeros((1, 16, 4, 4), dtype=np.float32))
        assert concat_channels(a, b).shape == (1, 208, 4, 4)

    def test_zero_channel_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((1, 3, 2, 2)).astype(np.float32)
        empty = np.zeros((1, 0, 2, 2), dtype=np.float32)
        assert np.array_equal(concat_channels(t(a), t(empty)).data, a)

    def test_backward_restores_split_gradients(self):
        rng = np.random.default_rng(1)
        a = t(rng.standard_normal((2, 3, 2, 2)), grad=True)
        b = t(rng.standard_normal((2, 2, 2, 2)), grad=True)
        cat = concat_channels(a, b)
        front = take_channels(cat, list(range(3)))
        seed = rng.standard_normal(front.data.shape)
        front.backward(seed)
        assert np.array_equal(a.grad, seed)
        assert np.array_equal(b.grad, np.zeros_like(b.data))

    def test_spatial_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            concat_channels(t(np.zeros((1, 1, 2, 2), dtype=np.float32)),
                            t(np.zeros((1, 1, 3, 2), dtype=np.float32)))

    def test_gradient(self):
        rng = np.random.default_rng(17)
        leaves = [rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((1, 3, 3, 3))]
        assert grad_check(lambda ts: concat_channels(ts[0], ts[1]), leaves) <= 1e-4


class TestMseLoss:
    def test_identical_zero(self):
        x = np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2)
        assert mse_loss(t(x), t(x.copy())).data.reshape(()) == 0.0

    def test_uniform_difference(self):
        pred = np.full((1, 1, 3, 3), 2.0, dtype=np.float32)
        target = np.zeros((1, 1, 3, 3), dtype=np.float32)
        assert mse_loss(t(pred), t(target)).data.reshape(()) == 4.0

    def test_gradient_closed_form_and_fd(self):
        rng = np.random.default_rng(19)
        pred = rng.standard_normal((2, 1, 3, 3))
        target = rng.standard_normal((2, 1, 3, 3))
        pt = t(pred, grad=True)
        mse_loss(pt, t(target)).backward()
        np.testing.assert_allclose(pt.grad, 2.0 * (pred - target) / pred.size, rtol=1e-12)
        assert grad_check(lambda ts: mse_loss(ts[0], ts[1]), [pred, target]) <= 1e-4

    def test_nonnegative_and_zero_iff_equal(self, rng):
        for seed in range(10):
            r = np.random.default_rng(seed)
            a = r.standard_normal((1, 1, 4, 4))
            b = a + r.standard_normal((1, 1, 4, 4)) * (seed % 2)
            v = float(mse_loss(t(a), t(b)).data.reshape(()))
            assert v >= 0.0
            assert (v == 0.0) == np.array_equal(a, b)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            mse_loss(t(np.zeros((1, 1, 2, 2), dtype=np.float32)),
                     t(np.zeros((1, 1, 2, 3), dtype=np.float32)))


class TestGradCheckInvariants:
    OPS = ("conv2d", "deconv2d", "prelu", "concat", "mse")

    @pytest.mark.parametrize("seed", range(20))
    def test_all_ops_randomized(self, seed):
        rng = np.random.default_rng(100 + seed)
        spec = ConvSpec(2, 2, in_channels=2, out_channels=2)
        leaves = [rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((2, 2, 2, 2)),
                  rng.standard_normal(2)]
        assert grad_check(lambda ts: conv2d(ts[0], ts[1], ts[2], spec), leaves,
                          rng=rng) <= 1e-4
        dspec = ConvSpec(2, 2, 2, 2, in_channels=2, out_channels=1)
        leaves = [rng.standard_normal((1, 2, 2, 2)), rng.standard_normal((2, 1, 2, 2)),
                  rng.standard_normal(1)]
        assert grad_check(lambda ts: deconv2d(ts[0], ts[1], ts[2], dspec), leaves,
                          rng=rng) <= 1e-4
        x = rng.standard_normal((1, 2, 3, 3))
        x = np.where(np.abs(x) < 0.05, 0.3, x)
        assert grad_check(lambda ts: prelu(ts[0], ts[1]),
                          [x, rng.uniform(0.1, 0.9, 2)], rng=rng) <= 1e-4
        leaves = [rng.standard_normal((1, 1, 2, 2)), rng.standard_normal((1, 2, 2, 2))]
        assert grad_check(lambda ts: concat_channels(ts[0], ts[1]), leaves, rng=rng) <= 1e-4
        leaves = [rng.standard_normal((1, 1, 3, 3)), rng.standard_normal((1, 1, 3, 3))]
        assert grad_check(lambda ts: mse_loss(ts[0], ts[1]), leaves, rng=rng) <= 1e-4

    def test_linear_layer_near_exact(self):
        rng = np.random.default_rng(23)
        spec = ConvSpec(1, 1, in_channels=3, out_channels=2)
        leaves = [rng.standard_normal((1, 3, 2, 2)), rng.standard_normal((2, 3, 1, 1)),
                  rng.standard_normal(2)]
        assert grad_check(lambda ts: conv2d(ts[0], ts[1], ts[2], spec), leaves) <= 1e-7
