import numpy as np
import pytest

from ler.corpus import Corpus, CorpusConfig
from ler.model import Model, make_config


MICRO_CORPUS = dict(height=16, width=64, cell=12, l=3, min_len=1, max_len=3,
                    l_ids=8, charset_size=8, max_depth=1, noise=0.02, jitter=1)


def micro_model_config(corpus_config):
    return make_config("ler-tiny", height=corpus_config.height,
                       width=corpus_config.width, l=corpus_config.l,
                       l_ids=corpus_config.l_ids,
                       n_class=corpus_config.n_class, n_ids=13)


@pytest.fixture(scope="session")
def micro_corpus():
    cfg = CorpusConfig(**MICRO_CORPUS)
    corp = Corpus(cfg)
    samples = [corp.generate_sample(99, i) for i in range(16)]
    return corp, samples


@pytest.fixture()
def micro_model(micro_corpus):
    corp, _ = micro_corpus
    return Model(micro_model_config(corp.config), seed=13)
