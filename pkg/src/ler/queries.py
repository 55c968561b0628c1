"""Content-free text queries: a frozen prompt-feature pool aggregated into
one vector, combined with a learnable per-position embedding.

The pool normally comes from an external exporter as a rank-2 LTEN file
(k prompts x D0). Without such a file a seeded Gaussian pool scaled by
1/sqrt(D0) stands in, which keeps the no-external-features ablation and
the whole test suite runnable offline.
"""

import numpy as np

from .lten import load_lten
from .tensor import Tensor, add, expand_leading, mean, make_rng

POOL_STREAM = 0xC11B  # rng stream tag for the fallback pool


class PromptPoolFeatures:
    """k x D0 frozen feature rows; never receives gradient."""

    def __init__(self, features):
        features = np.asarray(features, dtype=np.float32)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError(f"prompt pool must be (k>=1, D0), got {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ValueError("prompt pool contains non-finite values")
        self.tensor = Tensor(features)  # requires_grad stays False

    @property
    def k(self):
        return self.tensor.shape[0]

    @property
    def dim(self):
        return self.tensor.shape[1]


def fallback_pool(d0, k=8, seed=0):
    rng = make_rng(seed, POOL_STREAM)
    rows = rng.standard_normal((k, d0)) / np.sqrt(d0)
    return PromptPoolFeatures(rows.astype(np.float32))


def load_embedding_file(path, d0):
    """Load prompts.lten and validate its width against the model dim."""
    a, _version = load_lten(path)
    if a.ndim != 2:
        raise ValueError(f"{path}: prompt pool must be rank 2, got rank {a.ndim}")
    if a.shape[1] != d0:
        raise ValueError(f"{path}: pool feature dim {a.shape[1]} != model D0 {d0}")
    return PromptPoolFeatures(a)


def aggregate(pool):
    """Mean over the k pool rows: the single content-free query vector."""
    if pool.k < 1:
        raise ValueError("empty prompt pool")
    return mean(pool.tensor, axis=0)


def make_initial_query(t_clip, position_table):
    """Row j of the first query is t_clip + position_table[j]."""
    if t_clip.shape != position_table.shape[1:]:
        raise ValueError(f"query dim {t_clip.shape} does not match position "
                         f"table rows {position_table.shape}")
    return add(position_table, t_clip)
