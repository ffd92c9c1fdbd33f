import numpy as np
import pytest

from plifnet.errors import ShapeError
from plifnet.tensor import conv2d, conv2d_grads, conv2d_out_hw, matmul

from conftest import central_diff, max_rel_err


def brute_conv2d(x, k, stride, padding):
    """Sliding-window reference, independent of the im2col path."""
    b, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh, ow = conv2d_out_hw(h, w, kh, kw, stride, padding)
    out = np.zeros((b, cout, oh, ow))
    for bi in range(b):
        for co in range(cout):
            for i in range(oh):
                for j in range(ow):
                    window = xp[bi, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[bi, co, i, j] = np.sum(window * k[co])
    return out


class TestMatmul:
    def test_identity(self):
        x = np.arange(6.0).reshape(3, 2)
        assert np.array_equal(matmul(np.eye(3), x), x)

    def test_hand_example(self):
        out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
        assert np.array_equal(out, [[3.0], [7.0]])

    def test_zero(self):
        a = np.random.default_rng(0).random((3, 4))
        assert np.array_equal(matmul(a, np.zeros((4, 2))), np.zeros((3, 2)))

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((4, 2)))

    def test_pure(self):
        a = np.ones((2, 2))
        b = np.ones((2, 2))
        matmul(a, b)
        assert np.array_equal(a, np.ones((2, 2)))
        assert np.array_equal(b, np.ones((2, 2)))


class TestConv2d:
    def test_identity_kernel(self):
        x = np.ones((1, 1, 3, 3))
        k = np.ones((1, 1, 1, 1))
        assert np.array_equal(conv2d(x, k, 1, 0), x)

    def test_identity_kernel_random_channelwise(self, rng):
        x = rng.random((2, 3, 5, 5))
        k = np.zeros((3, 3, 1, 1))
        for c in range(3):
            k[c, c, 0, 0] = 1.0
        assert np.allclose(conv2d(x, k, 1, 0), x)

    def test_window_sum(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        k = np.ones((1, 1, 2, 2))
        assert conv2d(x, k, 1, 0).reshape(()) == 10.0

    def test_padded_matches_bruteforce(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        k = np.ones((1, 1, 2, 2))
        out = conv2d(x, k, 1, 1)
        assert out.shape == (1, 1, 3, 3)
        assert out[0, 0, 1, 1] == 10.0
        assert np.allclose(out, brute_conv2d(x, k, 1, 1))

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 0), (2, 1)])
    def test_random_matches_bruteforce(self, rng, stride, padding):
        x = rng.normal(size=(2, 3, 6, 5))
        k = rng.normal(size=(4, 3, 3, 3))
        assert np.allclose(conv2d(x, k, stride, padding),
                           brute_conv2d(x, k, stride, padding))

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 2, 2)))

    def test_oversized_kernel(self):
        with pytest.raises(ShapeError):
            conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 5, 5)))


class TestConv2dGrads:
    def test_zero_upstream(self, rng):
        x = rng.random((1, 2, 4, 4))
        k = rng.random((3, 2, 2, 2))
        gi, gk = conv2d_grads(x, k, np.zeros((1, 3, 3, 3)))
        assert not gi.any() and not gk.any()

    def test_1x1_kernel_grad(self, rng):
        x = rng.random((1, 1, 3, 3))
        k = rng.random((1, 1, 1, 1))
        up = rng.random((1, 1, 3, 3))
        _, gk = conv2d_grads(x, k, up)
        assert np.isclose(gk.reshape(()), np.sum(x * up))

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
    def test_matches_finite_differences(self, rng, stride, padding):
        x = rng.normal(size=(1, 2, 4, 4))
        k = rng.normal(size=(2, 2, 3, 3))
        up = rng.normal(size=conv2d(x, k, stride, padding).shape)

        def loss():
            return float(np.sum(conv2d(x, k, stride, padding) * up))

        gi, gk = conv2d_grads(x, k, up, stride, padding)
        fd_x, fd_k = central_diff(loss, [x, k])
        assert max_rel_err(gi, fd_x, floor=1e-6) <= 1e-6
        assert max_rel_err(gk, fd_k, floor=1e-6) <= 1e-6

    def test_pure(self, rng):
        x = rng.random((1, 1, 3, 3))
        k = rng.random((1, 1, 2, 2))
        x0, k0 = x.copy(), k.copy()
        conv2d_grads(x, k, np.ones((1, 1, 2, 2)))
        assert np.array_equal(x, x0) and np.array_equal(k, k0)
