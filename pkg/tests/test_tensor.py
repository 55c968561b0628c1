import numpy as np
import pytest

from ler import tensor as T
from ler.lten import save_lten, load_lten


def t(a, rg=False):
    return T.Tensor(np.asarray(a, dtype=np.float32), requires_grad=rg)


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        out = T.matmul(t(np.eye(2)), t(a))
        assert np.allclose(out.data, a, atol=1e-6)

    def test_hand_expansion(self):
        out = T.matmul(t([[1.0, 2.0]]), t([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_matmul_identity_elementwise(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((5, 7)).astype(np.float32)
        out = T.matmul(t(a), t(np.eye(7)))
        assert np.max(np.abs(out.data - a)) <= 1e-6

    def test_grad_of_sum_is_transpose(self):
        rng = np.random.default_rng(1)
        a = t(rng.standard_normal((3, 4)), rg=True)
        b = t(rng.standard_normal((4, 5)))
        T.backward(T.tsum(T.matmul(a, b)))
        # d sum(AB) / dA = B summed over columns, broadcast over rows
        expect = np.tile(b.data.sum(axis=1), (3, 1))
        assert np.allclose(a.grad, expect, atol=1e-5)
        # and against the finite-difference oracle
        fd = T.finite_diff_grad(lambda x: T.tsum(T.matmul(x, b)), a)
        assert T.max_rel_err(a.grad, fd) <= 1e-3

    def test_shape_mismatch_message(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(t(np.ones((2, 3))), t(np.ones((2, 3))))


class TestSoftmax:
    def test_uniform(self):
        out = T.softmax(t([0.0, 0.0, 0.0]), axis=-1)
        assert np.allclose(out.data, [1 / 3] * 3, atol=1e-7)

    def test_mask_annihilation(self):
        out = T.softmax(t([-np.inf, 0.0]), axis=-1)
        assert out.data.tolist() == [0.0, 1.0]

    def test_against_float64_oracle(self):
        x = np.array([1.0, 2.0, 3.0], dtype=np.float32)
        e = np.exp(x.astype(np.float64))
        want = e / e.sum()
        out = T.softmax(t(x), axis=-1)
        assert np.max(np.abs(out.data - want)) <= 1e-6

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        x = t(rng.standard_normal((4, 6, 5)) * 3)
        out = T.softmax(x, axis=-1)
        assert np.all(out.data >= 0)
        assert np.max(np.abs(out.data.sum(-1) - 1)) <= 1e-5


class TestLayerNorm:
    def test_constant_input(self):
        g, b = t(np.ones(8), rg=True), t(np.zeros(8), rg=True)
        out = T.layer_norm(t(np.full((3, 8), 2.5)), g, b)
        assert np.allclose(out.data, 0.0, atol=1e-4)

    def test_gamma_zero_gives_beta(self):
        g = t(np.zeros(8))
        b = t(np.arange(8, dtype=np.float32))
        out = T.layer_norm(t(np.random.default_rng(0).standard_normal((2, 8))), g, b)
        assert np.allclose(out.data, np.tile(b.data, (2, 1)), atol=1e-6)

    def test_statistics(self):
        rng = np.random.default_rng(3)
        x = t(rng.standard_normal((10, 16)) * 4 + 1)
        out = T.layer_norm(x, t(np.ones(16)), t(np.zeros(16)))
        assert np.max(np.abs(out.data.mean(-1))) <= 1e-4
        assert np.max(np.abs(out.data.var(-1) - 1)) <= 1e-2


class TestConvAndFriends:
    def test_identity_kernel(self):
        rng = np.random.default_rng(4)
        x = t(rng.random((2, 5, 6, 3)))
        k = t(np.eye(3, dtype=np.float32).reshape(1, 1, 3, 3))
        out = T.conv2d(x, k)
        assert np.allclose(out.data, x.data, atol=1e-6)

    def test_cross_entropy_uniform(self):
        for n in (2, 5, 13):
            logits = t(np.zeros((4, n)))
            loss = T.cross_entropy(logits, np.zeros(4, dtype=np.int64))
            assert abs(loss.item() - np.log(n)) <= 1e-6

    def test_cross_entropy_target_range(self):
        with pytest.raises(ValueError, match="out of range"):
            T.cross_entropy(t(np.zeros((2, 3))), np.array([1, 3]))

    def test_global_mean_pool_constant(self):
        out = T.global_mean_pool(t(np.full((2, 7, 4), 3.25)), axis=1)
        assert np.allclose(out.data, 3.25, atol=1e-6)

    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="channels"):
            T.conv2d(t(np.ones((1, 4, 4, 2))), t(np.ones((3, 3, 3, 5))))


class TestBackwardSemantics:
    def test_sum_grad_ones(self):
        x = t(np.arange(6).reshape(2, 3), rg=True)
        T.backward(T.tsum(x))
        assert np.array_equal(x.grad, np.ones((2, 3), dtype=np.float32))

    def test_sum_of_squares(self):
        x = t([1.0, 2.0], rg=True)
        T.backward(T.tsum(T.mul(x, x)))
        assert np.allclose(x.grad, [2.0, 4.0], atol=1e-6)

    def test_backward_twice_is_error(self):
        x = t([1.0, 2.0], rg=True)
        loss = T.tsum(x)
        T.backward(loss)
        with pytest.raises(RuntimeError, match="already ran"):
            T.backward(loss)

    def test_non_scalar_loss(self):
        x = t([1.0, 2.0], rg=True)
        with pytest.raises(ValueError, match="scalar"):
            T.backward(T.mul(x, x))

    def test_detached_graph(self):
        with pytest.raises(RuntimeError, match="no computation graph"):
            T.backward(t([3.0], rg=True))

    def test_grad_accumulates_over_shared_input(self):
        x = t([1.0, 2.0], rg=True)
        T.backward(T.tsum(x + x))
        assert np.allclose(x.grad, [2.0, 2.0])

    def test_no_grad_blocks_graph(self):
        x = t([1.0], rg=True)
        with T.no_grad():
            y = T.tsum(x)
        assert y._parents == () and not y.requires_grad


class TestBroadcastRules:
    def test_one_leading_dim_ok(self):
        a = t(np.ones((4, 2, 3)), rg=True)
        b = t(np.ones((2, 3)), rg=True)
        T.backward(T.tsum(a + b))
        assert b.grad.shape == (2, 3) and np.allclose(b.grad, 4.0)

    def test_two_leading_dims_rejected(self):
        with pytest.raises(ValueError, match="one leading batch dim"):
            T.add(t(np.ones((4, 2, 3))), t(np.ones(3)))

    def test_mul_broadcast_grad(self):
        rng = np.random.default_rng(5)
        a = t(rng.random((3, 2)), rg=True)
        b = t(rng.random(2), rg=True)
        T.backward(T.tsum(T.mul(a, b)))
        assert np.allclose(b.grad, a.data.sum(0), atol=1e-5)


class TestShapes:
    def test_reshape_zero_copy(self):
        x = t(np.arange(12).reshape(3, 4))
        y = T.reshape(x, (4, 3))
        assert np.shares_memory(x.data, y.data)

    def test_permute_roundtrip_grad(self):
        x = t(np.random.default_rng(6).random((2, 3, 4)), rg=True)
        T.backward(T.tsum(T.permute(x, (2, 0, 1))))
        assert x.grad.shape == (2, 3, 4)

    def test_expand_leading_sums_back(self):
        x = t(np.ones((2, 3)), rg=True)
        T.backward(T.tsum(T.expand_leading(x, 5)))
        assert np.allclose(x.grad, 5.0)


class TestFiniteDiff:
    def test_sum_all_ones(self):
        x = t(np.random.default_rng(7).random((3, 4)))
        fd = T.finite_diff_grad(lambda v: T.tsum(v), x)
        assert np.allclose(fd, 1.0, atol=1e-9)

    def test_sum_of_squares_analytic(self):
        fd = T.finite_diff_grad(lambda v: T.tsum(T.mul(v, v)), t([3.0]))
        assert abs(fd[0] - 6.0) <= 1e-6

    def test_random_linear_matches_weight(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal(5).astype(np.float32)
        x = t(rng.standard_normal(5))
        fd = T.finite_diff_grad(lambda v: T.tsum(T.mul(v, T.Tensor(w))), x)
        assert T.max_rel_err(fd, w) <= 1e-5

    def test_indices_subset(self):
        x = t(np.arange(6, dtype=np.float32))
        fd = T.finite_diff_grad(lambda v: T.tsum(T.mul(v, v)), x, indices=[1, 4])
        assert np.allclose(fd, [2.0, 8.0], atol=1e-5)


class TestEmbedding:
    def test_lookup_and_scatter_grad(self):
        table = t(np.arange(12).reshape(4, 3), rg=True)
        idx = np.array([0, 2, 2])
        out = T.embedding(table, idx)
        assert np.array_equal(out.data, table.data[idx])
        T.backward(T.tsum(out))
        expect = np.zeros((4, 3), dtype=np.float32)
        expect[0] = 1
        expect[2] = 2
        assert np.array_equal(table.grad, expect)


class TestLten(object):
    def test_roundtrip(self, tmp_path):
        a = np.random.default_rng(9).random((3, 5, 2)).astype(np.float32)
        p = tmp_path / "x.lten"
        save_lten(p, a)
        b, version = load_lten(p)
        assert version == 1 and np.array_equal(a, b)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.lten"
        p.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(ValueError, match="magic"):
            load_lten(p)

    def test_truncated(self, tmp_path):
        a = np.ones((4, 4), dtype=np.float32)
        p = tmp_path / "x.lten"
        save_lten(p, a)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_lten(p)

    def test_version_check(self, tmp_path):
        p = tmp_path / "x.lten"
        save_lten(p, np.ones(3, dtype=np.float32), version=42)
        a, version = load_lten(p)
        assert version == 42
        with pytest.raises(ValueError, match="version"):
            load_lten(p, expect_version=1)
