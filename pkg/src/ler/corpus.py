"""Synthetic text-line corpus: lines of radical-composed glyphs with exact
character and radical-sequence ground truth.

Characters are trees over the desk vocabulary rendered into square cells:
lr splits a cell into left/right halves, tb into top/bottom, sur draws
its first child as a frame with the second child inset in the middle.
Every sample's RNG stream is keyed by (corpus seed, sample index), so
generation order does not matter.
"""

import hashlib
import os
from dataclasses import dataclass, asdict, field

import numpy as np

from . import ids as ids_kit
from .lten import save_lten, load_lten

GLYPH_SIZE = 7


def glyph_bitmaps():
    """The eight desk radical bitmaps, name -> 7x7 {0,1} float array."""
    def z():
        return np.zeros((GLYPH_SIZE, GLYPH_SIZE), dtype=np.float32)

    g = {}
    b = z(); b[3, :] = 1; g["bar_h"] = b
    b = z(); b[:, 3] = 1; g["bar_v"] = b
    b = z(); b[3, :] = 1; b[:, 3] = 1; g["cross"] = b
    b = z(); b[:, 1] = 1; b[5, 1:] = 1; g["corner"] = b
    b = z(); b[np.arange(7), np.arange(7)] = 1; g["diag"] = b
    b = z(); b[0, :] = 1; b[6, :] = 1; b[:, 0] = 1; b[:, 6] = 1; g["box"] = b
    b = z(); b[0, :] = 1; b[:, 3] = 1; g["tee"] = b
    b = z(); b[1:3, 1:3] = 1; b[4:6, 4:6] = 1; g["dots"] = b
    return g


def _scale_nearest(bitmap, h, w):
    yi = np.arange(h) * bitmap.shape[0] // h
    xi = np.arange(w) * bitmap.shape[1] // w
    return bitmap[yi][:, xi]


def render_character(tree, cell, vocab, glyphs=None):
    """Render one composition tree onto an (h, w) cell, values in {0,1}."""
    if glyphs is None:
        glyphs = glyph_bitmaps()
    h, w = cell if isinstance(cell, tuple) else (cell, cell)
    name = vocab.name(tree.symbol)
    if not tree.children:
        return np.ascontiguousarray(_scale_nearest(glyphs[name], h, w))
    out = np.zeros((h, w), dtype=np.float32)
    if name == "lr":
        # 2px gutter keeps e.g. lr(bar_h, bar_h) distinct from bar_h
        gap = 2 if w >= 8 else 0
        left = (w - gap) // 2
        out[:, :left] = render_character(tree.children[0], (h, left), vocab, glyphs)
        out[:, left + gap:] = render_character(tree.children[1],
                                               (h, w - left - gap), vocab, glyphs)
    elif name == "tb":
        gap = 2 if h >= 8 else 0
        top = (h - gap) // 2
        out[:top] = render_character(tree.children[0], (top, w), vocab, glyphs)
        out[top + gap:] = render_character(tree.children[1],
                                           (h - top - gap, w), vocab, glyphs)
    elif name == "sur":
        frame = render_character(tree.children[0], (h, w), vocab, glyphs)
        iy, ix = h // 4, w // 4
        frame[iy: h - iy, ix: w - ix] = 0
        inner = render_character(tree.children[1], (h - 2 * iy, w - 2 * ix), vocab, glyphs)
        out = frame
        out[iy: h - iy, ix: w - ix] = inner
    else:
        raise ValueError(f"no rendering rule for operator {name!r}")
    return out


@dataclass
class CorpusConfig:
    height: int = 32
    width: int = 128
    cell: int = 24
    l: int = 5            # label slots per line; lines are padded up to this
    min_len: int = 1
    max_len: int = 5
    l_ids: int = 8
    charset_size: int = 24
    max_depth: int = 2
    noise: float = 0.05
    jitter: int = 2
    charset_seed: int = 777

    def __post_init__(self):
        if not 1 <= self.min_len <= self.max_len <= self.l:
            raise ValueError(f"line length range [{self.min_len},{self.max_len}] "
                             f"must sit inside [1,{self.l}]")

    @property
    def n_class(self):
        return self.charset_size + 1  # trailing pad class

    @property
    def pad_class(self):
        return self.charset_size


@dataclass
class TextLineSample:
    sample_id: str
    image: np.ndarray          # (H, W, 1) float32 in [0,1]
    text_label: np.ndarray     # (L,) int64, pad class beyond true_length
    ids_labels: np.ndarray     # (L, L_ids) int64
    true_length: int
    char_spans: list = field(default_factory=list)  # (x0, x1) per real char

    def digest(self):
        h = hashlib.sha256()
        h.update(self.image.tobytes())
        h.update(self.text_label.tobytes())
        h.update(self.ids_labels.tobytes())
        return h.hexdigest()


class Corpus:
    """A charset plus the geometry needed to render and label lines."""

    def __init__(self, config, vocab=None, charset=None):
        self.config = config
        self.vocab = vocab or ids_kit.IdsVocab.desk_default()
        if charset is None:
            charset = ids_kit.enumerate_charset(
                self.vocab, config.max_depth, config.charset_size, config.charset_seed)
        if len(charset) != config.charset_size:
            raise ValueError(f"charset has {len(charset)} entries, config says "
                             f"{config.charset_size}")
        self.charset = charset
        self.glyphs = glyph_bitmaps()
        self.ids_label_table = np.array(
            [ids_kit.flatten(t, self.vocab, l_ids=config.l_ids) for t in charset],
            dtype=np.int64)
        self._cells = [render_character(t, config.cell, self.vocab, self.glyphs)
                       for t in charset]
        seen = {}
        for i, c in enumerate(self._cells):
            j = seen.setdefault(c.tobytes(), i)
            if j != i:
                raise ValueError(
                    f"charset classes {j} and {i} render identically "
                    f"({charset[j].to_string(self.vocab)} vs "
                    f"{charset[i].to_string(self.vocab)}); choose another "
                    "charset_seed or size")

    @property
    def n_class(self):
        return self.config.n_class

    @property
    def n_ids(self):
        return self.vocab.n_ids

    def _grid_x(self, i):
        c = self.config
        gap = max(0, (c.width - c.l * c.cell) // c.l)
        offset = (c.width - (c.l * c.cell + (c.l - 1) * gap)) // 2
        return offset + i * (c.cell + gap)

    def _paste(self, img, cell_img, y, x):
        h, w = cell_img.shape
        y0, x0 = max(0, y), max(0, x)
        y1, x1 = min(img.shape[0], y + h), min(img.shape[1], x + w)
        if y1 <= y0 or x1 <= x0:
            return (x0, x0)
        img[y0:y1, x0:x1] = np.maximum(img[y0:y1, x0:x1],
                                       cell_img[y0 - y: y1 - y, x0 - x: x1 - x])
        return (x0, x1)

    def render_line(self, char_classes, jitters=None):
        """Clean line image for the given character classes; jitters is an
        optional list of (dy, dx) per character."""
        c = self.config
        img = np.zeros((c.height, c.width), dtype=np.float32)
        spans = []
        y_base = (c.height - c.cell) // 2
        for i, cls in enumerate(char_classes):
            dy, dx = jitters[i] if jitters is not None else (0, 0)
            span = self._paste(img, self._cells[cls], y_base + dy, self._grid_x(i) + dx)
            spans.append(span)
        return img, spans

    def generate_sample(self, seed, index, noise=None, jitter=None):
        c = self.config
        noise = c.noise if noise is None else noise
        jitter = c.jitter if jitter is None else jitter
        rng = np.random.Generator(np.random.Philox(
            key=np.array([seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)))
        length = int(rng.integers(c.min_len, c.max_len + 1))
        classes = rng.integers(0, c.charset_size, size=length)
        jit = [(int(rng.integers(-jitter, jitter + 1)),
                int(rng.integers(-jitter, jitter + 1))) for _ in range(length)] \
            if jitter else None
        img, spans = self.render_line(classes, jit)
        if noise > 0:
            img = img + rng.normal(0.0, noise, size=img.shape).astype(np.float32)
            img = np.clip(img, 0.0, 1.0)
        text_label = np.full(c.l, c.pad_class, dtype=np.int64)
        text_label[:length] = classes
        ids_labels = np.full((c.l, c.l_ids), self.vocab.pad_id, dtype=np.int64)
        ids_labels[:length] = self.ids_label_table[classes]
        return TextLineSample(f"{index:06d}", img[..., None], text_label,
                              ids_labels, length, spans)


# ------------------------------------------------------------- persistence

def _config_lines(config, seed, count):
    d = asdict(config)
    d["seed"] = seed
    d["count"] = count
    return "".join(f"{k}={d[k]}\n" for k in sorted(d))


def generate_corpus(out_dir, config, seed, count, vocab=None):
    """Write count samples plus manifest, vocab, charset and config files."""
    corpus = Corpus(config, vocab)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    corpus.vocab.save(os.path.join(out_dir, "vocab.txt"))
    with open(os.path.join(out_dir, "charset.tsv"), "w", encoding="utf-8") as f:
        for i, t in enumerate(corpus.charset):
            seq = " ".join(str(s) for s in ids_kit.flatten(t, corpus.vocab))
            f.write(f"{i}\t{t.to_string(corpus.vocab)}\t{seq}\n")
    with open(os.path.join(out_dir, "corpus.txt"), "w", encoding="utf-8") as f:
        f.write(_config_lines(config, seed, count))
    rows = []
    for i in range(count):
        s = corpus.generate_sample(seed, i)
        save_lten(os.path.join(out_dir, "images", s.sample_id + ".lten"), s.image)
        labels = " ".join(str(v) for v in s.text_label)
        idsl = ";".join(" ".join(str(v) for v in row) for row in s.ids_labels)
        spans = ";".join(f"{a}:{b}" for a, b in s.char_spans)
        rows.append(f"{s.sample_id}\t{s.true_length}\t{labels}\t{idsl}\t{spans}\n")
    with open(os.path.join(out_dir, "manifest.tsv"), "w", encoding="utf-8") as f:
        f.write("# sample_id\ttrue_length\tlabels\tids_labels\tx_spans\n")
        f.writelines(rows)
    return corpus


def load_corpus(corpus_dir):
    """Read back a generated dataset. Returns (Corpus, samples)."""
    cfg = {}
    with open(os.path.join(corpus_dir, "corpus.txt"), encoding="utf-8") as f:
        for line in f:
            k, _, v = line.strip().partition("=")
            cfg[k] = v
    seed, count = int(cfg.pop("seed")), int(cfg.pop("count"))
    kwargs = {}
    for fname, ftype in CorpusConfig.__dataclass_fields__.items():
        kwargs[fname] = float(cfg[fname]) if fname == "noise" else int(cfg[fname])
    config = CorpusConfig(**kwargs)
    vocab = ids_kit.IdsVocab.load(os.path.join(corpus_dir, "vocab.txt"))
    charset = []
    with open(os.path.join(corpus_dir, "charset.tsv"), encoding="utf-8") as f:
        for line in f:
            _, _, seq = line.rstrip("\n").split("\t")
            charset.append(ids_kit.parse([int(x) for x in seq.split()], vocab))
    corpus = Corpus(config, vocab, charset)
    samples = []
    with open(os.path.join(corpus_dir, "manifest.tsv"), encoding="utf-8") as f:
        for line in f:
            if line.startswith("#"):
                continue
            sid, tl, labels, idsl, spans = line.rstrip("\n").split("\t")
            image, _ = load_lten(os.path.join(corpus_dir, "images", sid + ".lten"))
            text_label = np.array([int(x) for x in labels.split()], dtype=np.int64)
            ids_labels = np.array([[int(x) for x in row.split()]
                                   for row in idsl.split(";")], dtype=np.int64)
            span_list = [tuple(int(x) for x in p.split(":"))
                         for p in spans.split(";")] if spans else []
            samples.append(TextLineSample(sid, image, text_label, ids_labels,
                                          int(tl), span_list))
    return corpus, samples
