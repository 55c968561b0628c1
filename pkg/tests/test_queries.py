import numpy as np
import pytest

from ler import tensor as T
from ler.lten import save_lten
from ler.queries import (PromptPoolFeatures, aggregate, fallback_pool,
                         load_embedding_file, make_initial_query)


class TestAggregate:
    def test_single_row_identity(self):
        row = np.arange(6, dtype=np.float32)[None]
        out = aggregate(PromptPoolFeatures(row))
        assert np.array_equal(out.data, row[0])

    def test_opposite_rows_cancel(self):
        v = np.random.default_rng(0).standard_normal((1, 8)).astype(np.float32)
        out = aggregate(PromptPoolFeatures(np.concatenate([v, -v])))
        assert np.allclose(out.data, 0.0, atol=1e-7)

    def test_matches_float64_mean(self):
        rows = np.random.default_rng(1).standard_normal((5, 32)).astype(np.float32)
        out = aggregate(PromptPoolFeatures(rows))
        want = rows.astype(np.float64).mean(axis=0)
        assert np.max(np.abs(out.data - want)) <= 1e-6

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        rows = rng.standard_normal((7, 16)).astype(np.float32)
        a = aggregate(PromptPoolFeatures(rows)).data
        b = aggregate(PromptPoolFeatures(rows[rng.permutation(7)])).data
        assert np.allclose(a, b, atol=1e-6)


class TestInitialQuery:
    def test_zero_position_table(self):
        t_clip = T.Tensor(np.arange(4, dtype=np.float32))
        pos = T.Tensor(np.zeros((3, 4), dtype=np.float32), requires_grad=True)
        out = make_initial_query(t_clip, pos)
        assert np.allclose(out.data, np.tile(t_clip.data, (3, 1)))

    def test_zero_query_gives_position_table(self):
        pos = T.Tensor(np.random.default_rng(3).random((3, 4)).astype(np.float32),
                       requires_grad=True)
        out = make_initial_query(T.Tensor(np.zeros(4, dtype=np.float32)), pos)
        assert np.array_equal(out.data, pos.data)

    def test_rowwise_sum(self):
        rng = np.random.default_rng(4)
        t_clip = T.Tensor(rng.random(5).astype(np.float32))
        pos = T.Tensor(rng.random((2, 5)).astype(np.float32), requires_grad=True)
        out = make_initial_query(t_clip, pos)
        assert np.allclose(out.data, pos.data + t_clip.data, atol=1e-7)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dim"):
            make_initial_query(T.Tensor(np.zeros(4)), T.Tensor(np.zeros((3, 5))))

    def test_position_table_learnable_pool_frozen(self):
        pool = fallback_pool(6, k=3, seed=0)
        t_clip = aggregate(pool)
        pos = T.Tensor(np.zeros((2, 6), dtype=np.float32), requires_grad=True)
        T.backward(T.tsum(make_initial_query(t_clip, pos)))
        assert pos.grad is not None
        assert pool.tensor.grad is None


class TestLoadEmbeddingFile:
    def test_roundtrip(self, tmp_path):
        rows = np.random.default_rng(5).random((4, 16)).astype(np.float32)
        p = tmp_path / "prompts.lten"
        save_lten(p, rows)
        pool = load_embedding_file(p, 16)
        assert np.array_equal(pool.tensor.data, rows)

    def test_wrong_dim_names_both(self, tmp_path):
        p = tmp_path / "prompts.lten"
        save_lten(p, np.zeros((4, 16), dtype=np.float32))
        with pytest.raises(ValueError, match="16.*32"):
            load_embedding_file(p, 32)

    def test_wrong_rank(self, tmp_path):
        p = tmp_path / "prompts.lten"
        save_lten(p, np.zeros((4, 4, 4), dtype=np.float32))
        with pytest.raises(ValueError, match="rank"):
            load_embedding_file(p, 4)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "prompts.lten"
        p.write_bytes(b"JUNKJUNKJUNKJUNK")
        with pytest.raises(ValueError, match="magic"):
            load_embedding_file(p, 4)

    def test_fallback_deterministic(self):
        a = fallback_pool(32, seed=9)
        b = fallback_pool(32, seed=9)
        assert np.array_equal(a.tensor.data, b.tensor.data)
        c = fallback_pool(32, seed=10)
        assert not np.array_equal(a.tensor.data, c.tensor.data)

    def test_pool_validation(self):
        with pytest.raises(ValueError, match="k>=1"):
            PromptPoolFeatures(np.zeros((0, 4), dtype=np.float32))
        with pytest.raises(ValueError, match="finite"):
            PromptPoolFeatures(np.array([[np.nan, 1.0]], dtype=np.float32))
