import hashlib

import numpy as np
import pytest

from ler import ids as ik
from ler.corpus import (Corpus, CorpusConfig, TextLineSample, glyph_bitmaps,
                        render_character, generate_corpus, load_corpus)


@pytest.fixture(scope="module")
def vocab():
    return ik.IdsVocab.desk_default()


@pytest.fixture(scope="module")
def corpus():
    return Corpus(CorpusConfig())


class TestGlyphs:
    def test_eight_distinct_bitmaps(self):
        g = glyph_bitmaps()
        assert len(g) == 8
        seen = {a.tobytes() for a in g.values()}
        assert len(seen) == 8

    def test_min_foreground(self):
        for name, a in glyph_bitmaps().items():
            assert a.sum() >= 4, name
            assert set(np.unique(a)) <= {0.0, 1.0}


class TestRenderCharacter:
    def test_leaf_scales_glyph(self, vocab):
        box = ik.IdsTree(vocab.id_of("box"))
        cell = render_character(box, 24, vocab)
        assert cell.shape == (24, 24)
        # border pixels on, interior center off
        assert cell[0].max() == 1 and cell[12, 12] == 0

    def test_lr_spatial_disjointness(self, vocab):
        t = ik.IdsTree(vocab.id_of("lr"), [ik.IdsTree(vocab.id_of("bar_v")),
                                           ik.IdsTree(vocab.id_of("bar_v"))])
        cell = render_character(t, 24, vocab)
        half = render_character(ik.IdsTree(vocab.id_of("bar_v")), (24, 11), vocab)
        assert np.array_equal(cell[:, :11], half)
        assert np.all(cell[:, 11:13] == 0)  # gutter
        assert np.array_equal(cell[:, 13:], half)

    def test_tb_split(self, vocab):
        t = ik.IdsTree(vocab.id_of("tb"), [ik.IdsTree(vocab.id_of("bar_h")),
                                           ik.IdsTree(vocab.id_of("diag"))])
        cell = render_character(t, 24, vocab)
        top = render_character(ik.IdsTree(vocab.id_of("bar_h")), (11, 24), vocab)
        assert np.array_equal(cell[:11], top)
        assert np.all(cell[11:13] == 0)

    def test_deterministic(self, vocab):
        t = ik.IdsTree(vocab.id_of("sur"), [ik.IdsTree(vocab.id_of("box")),
                                            ik.IdsTree(vocab.id_of("cross"))])
        a = render_character(t, 24, vocab)
        b = render_character(t, 24, vocab)
        assert np.array_equal(a, b)

    def test_charset_renders_pairwise_distinct(self, corpus):
        rendered = [c.tobytes() for c in corpus._cells]
        assert len(set(rendered)) == len(rendered)


class TestGenerateSample:
    def test_clean_single_char(self, vocab):
        cfg = CorpusConfig(noise=0.0, jitter=0, min_len=1, max_len=1)
        corp = Corpus(cfg)
        s = corp.generate_sample(3, 0)
        assert s.true_length == 1
        assert s.text_label[0] < cfg.charset_size
        assert np.all(s.text_label[1:] == cfg.pad_class)
        clean, spans = corp.render_line(s.text_label[:1])
        assert np.array_equal(s.image[..., 0], clean)
        assert spans == s.char_spans

    def test_seed_determinism(self, corpus):
        a = corpus.generate_sample(11, 4)
        b = corpus.generate_sample(11, 4)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.text_label, b.text_label)
        assert a.char_spans == b.char_spans

    def test_length_distribution_covers_range(self, corpus):
        lengths = {corpus.generate_sample(5, i).true_length for i in range(1000)}
        assert lengths == set(range(corpus.config.min_len,
                                    corpus.config.max_len + 1))

    def test_pixels_in_range_and_labels_in_bounds(self, corpus):
        for i in range(20):
            s = corpus.generate_sample(2, i)
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0
            assert s.text_label.max() < corpus.n_class
            assert s.ids_labels.max() < corpus.n_ids

    def test_ids_labels_match_charset(self, corpus):
        s = corpus.generate_sample(8, 3)
        for j in range(s.true_length):
            tree = corpus.charset[s.text_label[j]]
            want = ik.flatten(tree, corpus.vocab, l_ids=corpus.config.l_ids)
            assert s.ids_labels[j].tolist() == want
        for j in range(s.true_length, corpus.config.l):
            assert np.all(s.ids_labels[j] == corpus.vocab.pad_id)


class TestCorpusIO:
    def test_empty_corpus(self, tmp_path):
        generate_corpus(tmp_path / "d", CorpusConfig(), seed=1, count=0)
        _, samples = load_corpus(tmp_path / "d")
        assert samples == []

    def test_roundtrip_and_determinism(self, tmp_path):
        cfg = CorpusConfig(charset_size=12)
        generate_corpus(tmp_path / "a", cfg, seed=9, count=16)
        generate_corpus(tmp_path / "b", cfg, seed=9, count=16)
        ma = (tmp_path / "a" / "manifest.tsv").read_bytes()
        mb = (tmp_path / "b" / "manifest.tsv").read_bytes()
        assert hashlib.sha256(ma).hexdigest() == hashlib.sha256(mb).hexdigest()
        corp, samples = load_corpus(tmp_path / "a")
        assert len(samples) == 16
        fresh = Corpus(cfg)
        for i, s in enumerate(samples):
            again = fresh.generate_sample(9, i)
            assert np.array_equal(s.image, again.image)
            assert np.array_equal(s.text_label, again.text_label)
            assert np.array_equal(s.ids_labels, again.ids_labels)
            assert s.char_spans == list(again.char_spans)

    def test_split_disjoint_hashes(self, tmp_path):
        cfg = CorpusConfig()
        generate_corpus(tmp_path / "train", cfg, seed=100, count=32)
        generate_corpus(tmp_path / "test", cfg, seed=200, count=32)
        _, train = load_corpus(tmp_path / "train")
        _, test = load_corpus(tmp_path / "test")
        train_hashes = {s.digest() for s in train}
        test_hashes = {s.digest() for s in test}
        assert not train_hashes & test_hashes


class TestConfigValidation:
    def test_bad_length_range(self):
        with pytest.raises(ValueError, match="length range"):
            CorpusConfig(min_len=0)
        with pytest.raises(ValueError, match="length range"):
            CorpusConfig(max_len=9, l=5)
