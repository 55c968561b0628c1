"""Line accuracy and normalized edit distance.

LACC is the fraction of lines predicted exactly. NED is
1 - mean(ED / Maxlen) where ED is Levenshtein distance and Maxlen the
longer of prediction and label; an empty pair contributes a perfect 0.
Pad symbols are stripped before comparison: a prediction is the argmax
class per position up to the first pad.
"""

from dataclasses import dataclass, field

import numpy as np

from .kernels import levenshtein as _lev_fast


def edit_distance(a, b):
    """Levenshtein distance via the two-row DP kernel."""
    return _lev_fast(a, b)


def edit_distance_bruteforce(a, b):
    """Exponential recursive reference, for tests only."""
    a, b = list(a), list(b)
    if not a:
        return len(b)
    if not b:
        return len(a)
    sub = edit_distance_bruteforce(a[1:], b[1:]) + (a[0] != b[0])
    ins = edit_distance_bruteforce(a, b[1:]) + 1
    dele = edit_distance_bruteforce(a[1:], b) + 1
    return min(sub, ins, dele)


def decode_prediction(logits, pad_class):
    """Argmax classes up to (not including) the first pad class."""
    cls = np.argmax(logits, axis=-1)
    out = []
    for c in cls:
        if c == pad_class:
            break
        out.append(int(c))
    return np.array(out, dtype=np.int64)


@dataclass
class EvalResult:
    lacc: float
    ned: float
    count: int
    records: list = field(default_factory=list)  # (pred, label, ed) per sample


def evaluate(predictions, labels):
    """Score pad-stripped prediction/label id sequences."""
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    n = len(predictions)
    if n == 0:
        return EvalResult(0.0, 0.0, 0, [])
    exact = 0
    ned_sum = 0.0
    records = []
    for p, y in zip(predictions, labels):
        p, y = list(p), list(y)
        ed = edit_distance(p, y)
        maxlen = max(len(p), len(y))
        ned_sum += ed / maxlen if maxlen else 0.0
        if p == y:
            exact += 1
        records.append((p, y, ed))
    return EvalResult(exact / n, 1.0 - ned_sum / n, n, records)


def write_report(path, result):
    with open(path, "w") as f:
        f.write(f"# lacc={result.lacc:.6f}\tned={result.ned:.6f}\tcount={result.count}\n")
        f.write("prediction\tlabel\tedit_distance\n")
        for p, y, ed in result.records:
            f.write(f"{' '.join(map(str, p))}\t{' '.join(map(str, y))}\t{ed}\n")
