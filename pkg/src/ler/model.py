"""The recognizer network: conv-mix image encoder, cascaded multimodal
localization blocks, per-character cross-attention extraction (char
cutter), a pooled character classifier, and a train-only radical-sequence
decoder.

Construction draws every initial weight from one counter-based generator
in registration order, so a (config, seed) pair pins the model exactly.
"""

import hashlib
import math
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import lten
from .nn import (Module, ModuleList, Linear, LayerNorm, SelfAttention,
                 EncoderBlock, DecoderBlock, Conv2d, ConvMixBlock, param,
                 trunc_normal)
from .queries import aggregate, fallback_pool, make_initial_query
from .tensor import (Tensor, attend_scale, expand_leading, gelu,
                     global_mean_pool, make_rng, matmul, permute, reshape,
                     softmax)

MODEL_STREAM = 0xA11  # rng stream tag for weight init


@dataclass
class ModelConfig:
    d0: int = 128
    d1: int = 256
    d2: int = 384
    heads: tuple = (4, 8, 12)   # localization, extraction, ids decoder
    n: int = 6                  # localization depth; ids decoder reuses it
    m: int = 3                  # char cutter depth
    enc_depth: int = 6
    l: int = 25
    c_h: int = 4
    c_w: int = 4
    l_ids: int = 24
    n_class: int = 7936
    n_ids: int = 574
    height: int = 32
    width: int = 320
    in_channels: int = 3
    ffn_ratio: int = 4

    def __post_init__(self):
        if self.height % 4 or self.width % 4:
            raise ValueError(f"input {self.height}x{self.width} must be divisible by 4")
        for dim, h, what in ((self.d0, self.heads[0], "localization"),
                             (self.d1, self.heads[1], "extraction"),
                             (self.d2, self.heads[2], "ids decoder")):
            if dim % h:
                raise ValueError(f"{what} dim {dim} not divisible by {h} heads")
        if self.l < 2:
            raise ValueError("need l >= 2 (diagonal-masked query attention "
                             "is undefined for a single position)")
        if self.c_h * self.c_w < 1:
            raise ValueError("character cell must be non-empty")

    @property
    def c_l(self):
        return self.c_h * self.c_w

    @property
    def tokens(self):
        return (self.height // 4) * (self.width // 4)

    def canonical(self):
        d = asdict(self)
        d["heads"] = "/".join(str(h) for h in self.heads)
        return "".join(f"{k}={d[k]}\n" for k in sorted(d))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


PRESETS = {
    "ler-s": dict(d0=96, d1=192, d2=256, heads=(3, 6, 8)),
    "ler-b": dict(d0=128, d1=256, d2=384, heads=(4, 8, 12)),
    "ler-l": dict(d0=192, d1=256, d2=512, heads=(6, 8, 16)),
    # desk-scale: grayscale lines over the procedural charset
    "ler-tiny": dict(d0=32, d1=48, d2=64, heads=(2, 2, 2), n=2, m=2,
                     enc_depth=2, l=5, l_ids=8, n_class=25, n_ids=13,
                     width=128, in_channels=1),
}


def make_config(preset="ler-b", **overrides):
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, have {sorted(PRESETS)}")
    kw = dict(PRESETS[preset])
    kw.update(overrides)
    return ModelConfig(**kw)


def sinusoidal_2d(grid_h, grid_w, dim, dtype=np.float32):
    """Fixed 2-D sin/cos position table, (grid_h*grid_w, dim)."""
    def enc(n, d):
        pos = np.arange(n, dtype=np.float64)[:, None]
        i = np.arange(d // 2, dtype=np.float64)[None, :]
        ang = pos / np.power(10000.0, 2.0 * i / d)
        out = np.zeros((n, d))
        out[:, 0::2] = np.sin(ang)
        out[:, 1::2] = np.cos(ang)
        return out

    dy = dim // 2 if (dim // 2) % 2 == 0 else dim // 2 + 1
    dx = dim - dy
    ey = enc(grid_h, dy)
    ex = enc(grid_w, dx)
    grid = np.concatenate([np.repeat(ey[:, None, :], grid_w, axis=1),
                           np.repeat(ex[None, :, :], grid_h, axis=0)], axis=-1)
    return grid.reshape(grid_h * grid_w, dim).astype(dtype)


@dataclass
class ForwardTrace:
    vis: Tensor                 # (tokens, D0) image features
    c_loc: list                 # per-stage logits, each (L, n_class)
    att: Tensor                 # (L, tokens) final attention rows
    a: Tensor = None            # (L, tokens, D0) gated features
    f: Tensor = None            # (L, c_l, D1) extracted characters
    c_char: Tensor = None       # (L, n_class)
    c_ids: Tensor = None        # (L, L_ids, n_ids); None outside training


class ConvMixEncoder(Module):
    def __init__(self, cfg, rng, dtype):
        super().__init__()
        mid = cfg.d0 // 2
        half = cfg.enc_depth // 2
        self.stem1 = Conv2d(cfg.in_channels, mid, 3, rng, stride=2, pad=1, dtype=dtype)
        self.blocks1 = ModuleList([ConvMixBlock(mid, rng, dtype) for _ in range(half)])
        self.stem2 = Conv2d(mid, cfg.d0, 3, rng, stride=2, pad=1, dtype=dtype)
        self.blocks2 = ModuleList([ConvMixBlock(cfg.d0, rng, dtype)
                                   for _ in range(cfg.enc_depth - half)])
        self.ln = LayerNorm(cfg.d0, dtype)

    def __call__(self, x):
        x = gelu(self.stem1(x))
        for b in self.blocks1:
            x = b(x)
        x = gelu(self.stem2(x))
        for b in self.blocks2:
            x = b(x)
        x = self.ln(x)
        b, gh, gw, d = x.shape
        return reshape(x, (b, gh * gw, d))


class MLB(Module):
    """One localization stage: refine visual tokens, self-attend the
    queries under a diagonal mask, then attend queries over tokens."""

    def __init__(self, cfg, rng, dtype):
        super().__init__()
        self.vis_block = EncoderBlock(cfg.d0, cfg.heads[0], rng, cfg.ffn_ratio, dtype)
        self.mmsa = SelfAttention(cfg.d0, cfg.heads[0], rng, dtype)
        self.ln_q = LayerNorm(cfg.d0, dtype)
        self.wk = Linear(cfg.d0, cfg.d0, rng, dtype)
        self.wv = Linear(cfg.d0, cfg.d0, rng, dtype)
        self.scale = 1.0 / math.sqrt(cfg.d0)

    def __call__(self, vis, t, pos2d, diag_mask, record_mask=False):
        vis = self.vis_block(vis)
        q = self.ln_q(t + self.mmsa(t, mask=diag_mask, record=record_mask))
        k = self.wk(vis) + pos2d
        v = self.wv(vis)
        att = softmax(matmul(q, permute(k, (0, 2, 1))) * self.scale, axis=-1)
        a = attend_scale(att, vis)
        pooled = matmul(att, v)
        return vis, att, a, pooled


class CharCutter(Module):
    """Decode a learned char prompt against each position's gated tokens."""

    def __init__(self, cfg, rng, dtype):
        super().__init__()
        self.prompt = param(trunc_normal(rng, (cfg.c_l, cfg.d1), dtype=dtype))
        self.blocks = ModuleList([DecoderBlock(cfg.d1, cfg.heads[1], rng,
                                               ratio=cfg.ffn_ratio, dtype=dtype)
                                  for _ in range(cfg.m)])

    def __call__(self, a_proj):
        b, l, t, d1 = a_proj.shape
        ctx = reshape(a_proj, (b * l, t, d1))
        x = expand_leading(self.prompt, b * l)
        for blk in self.blocks:
            x = blk(x, ctx)
        return reshape(x, (b, l, x.shape[1], d1))


class IdsDecoder(Module):
    """Non-autoregressive radical-sequence head over extracted characters."""

    def __init__(self, cfg, rng, dtype):
        super().__init__()
        self.proj = Linear(cfg.d1, cfg.d2, rng, dtype)
        self.queries = param(trunc_normal(rng, (cfg.l_ids, cfg.d2), dtype=dtype))
        self.blocks = ModuleList([DecoderBlock(cfg.d2, cfg.heads[2], rng,
                                               ratio=cfg.ffn_ratio, dtype=dtype)
                                  for _ in range(cfg.n)])
        self.head = Linear(cfg.d2, cfg.n_ids, rng, dtype)

    def __call__(self, f):
        b, l, c_l, _ = f.shape
        ctx = reshape(self.proj(f), (b * l, c_l, self.queries.shape[1]))
        x = expand_leading(self.queries, b * l)
        for blk in self.blocks:
            x = blk(x, ctx)
        return reshape(self.head(x), (b, l, x.shape[1], self.head.w.shape[1]))


class Model(Module):
    def __init__(self, config, seed=0, pool=None, dtype=np.float32):
        super().__init__()
        self.config = config
        self.seed = seed
        self.dtype = dtype
        rng = make_rng(seed, MODEL_STREAM)
        # registration order below fixes init draws and checkpoint layout
        self.encoder = ConvMixEncoder(config, rng, dtype)
        self.mlbs = ModuleList([MLB(config, rng, dtype) for _ in range(config.n)])
        self.td = Linear(config.d0, config.n_class, rng, dtype)
        self.we = Linear(config.n_class, config.d0, rng, dtype)
        self.pos_table = param(trunc_normal(rng, (config.l, config.d0), dtype=dtype))
        self.a_proj = Linear(config.d0, config.d1, rng, dtype)
        # gated rows carry ~1/attended-token-count magnitudes; normalizing
        # per token keeps suppressed rows at zero and the rest well-scaled
        self.a_norm = LayerNorm(config.d1, dtype)
        self.cutter = CharCutter(config, rng, dtype)
        self.char_head = Linear(config.d1, config.n_class, rng, dtype)
        self.ids_decoder = IdsDecoder(config, rng, dtype)
        # frozen inputs and constants
        if pool is None:
            pool = fallback_pool(config.d0, seed=seed)
        if pool.dim != config.d0:
            raise ValueError(f"prompt pool dim {pool.dim} != model D0 {config.d0}")
        self.pool = pool
        self.t_clip = Tensor(aggregate(pool).data.astype(dtype))
        gh, gw = config.height // 4, config.width // 4
        self.pos2d = Tensor(sinusoidal_2d(gh, gw, config.d0, dtype))
        mask = np.zeros((config.l, config.l), dtype=dtype)
        np.fill_diagonal(mask, -np.inf)
        self.diag_mask = Tensor(mask)
        self.mode = "train"

    # -- parameter groups -------------------------------------------------
    _STAGE1_ROOTS = ("encoder", "mlbs", "td", "we", "pos_table")

    def stage1_parameters(self):
        """Encoder + localization side, trained alone in stage 1."""
        return [(n, p) for n, p in self.named_parameters()
                if n.split(".")[0] in self._STAGE1_ROOTS]

    def stage2_only_parameters(self):
        """Extraction and recognition side, untouched until stage 2."""
        return [(n, p) for n, p in self.named_parameters()
                if n.split(".")[0] not in self._STAGE1_ROOTS]

    def inference_param_count(self):
        return self.param_count() - self.ids_decoder.param_count()

    # -- forward -----------------------------------------------------------
    def set_mode(self, mode):
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        self.mode = mode

    def initial_query(self, batch):
        t1 = make_initial_query(self.t_clip, self.pos_table)
        return expand_leading(t1, batch)

    def encode_image(self, images):
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.dtype))
        cfg = self.config
        if x.shape[-3:] != (cfg.height, cfg.width, cfg.in_channels):
            raise ValueError(f"image shape {x.shape} does not match config "
                             f"{cfg.height}x{cfg.width}x{cfg.in_channels}")
        if x.ndim == 3:
            return reshape(self.encoder(reshape(x, (1,) + x.shape)),
                           (cfg.tokens, cfg.d0))
        return self.encoder(x)

    def mlb_step(self, vis, t, stage=0, record_mask=False):
        """One localization stage; returns (vis, att, c, a)."""
        vis, att, a, pooled = self.mlbs[stage](vis, t, self.pos2d, self.diag_mask,
                                               record_mask)
        return vis, att, self.td(pooled), a

    def localize(self, vis, t1, record_mask=False):
        c_list = []
        att = a = None
        t = t1
        for i in range(self.config.n):
            vis, att, c, a = self.mlb_step(vis, t, i, record_mask)
            c_list.append(c)
            if i + 1 < self.config.n:
                t = self.we(softmax(c, axis=-1)) + self.pos_table
        return vis, att, a, c_list

    def extract_characters(self, a):
        """a: (..., L, tokens, D0) gated features -> (..., L, c_h, c_w, D1)."""
        f = self.cutter(self.a_norm(self.a_proj(a)))
        b, l, c_l, d1 = f.shape
        return reshape(f, (b, l, self.config.c_h, self.config.c_w, d1))

    def decode_char(self, f):
        """f: (..., L, c_l, D1) -> (..., L, n_class); positions independent."""
        return self.char_head(global_mean_pool(f, axis=-2))

    def decode_ids(self, f):
        if self.mode != "train":
            raise RuntimeError("ids decoder is train-only; model is in "
                               f"{self.mode!r} mode")
        return self.ids_decoder(f)

    def forward(self, images, mode=None, loc_only=False, record_mask=False):
        """Full trace. A single (H,W,C) image yields an unbatched trace;
        a (B,H,W,C) batch keeps the leading dim on every field."""
        if mode is not None:
            self.set_mode(mode)
        arr = images.data if isinstance(images, Tensor) else np.asarray(images)
        single = arr.ndim == 3
        if single:
            images = Tensor(arr[None].astype(self.dtype))
        vis = self.encode_image(images)
        batch = vis.shape[0]
        vis_out, att, a, c_list = self.localize(vis, self.initial_query(batch),
                                                record_mask)
        f = c_char = c_ids = None
        if not loc_only:
            f = self.cutter(self.a_norm(self.a_proj(a)))
            c_char = self.decode_char(f)
            if self.mode == "train":
                c_ids = self.decode_ids(f)
        trace = ForwardTrace(vis=vis, c_loc=c_list, att=att, a=a, f=f,
                             c_char=c_char, c_ids=c_ids)
        if single:
            for name in ("vis", "att", "a", "f", "c_char", "c_ids"):
                t = getattr(trace, name)
                if t is not None:
                    setattr(trace, name, reshape(t, t.shape[1:]))
            trace.c_loc = [reshape(c, c.shape[1:]) for c in trace.c_loc]
        return trace


# ------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"LCKPT"
CKPT_VERSION = 1


POOL_BLOB = "pool.features"  # frozen input carried along so a restored
                             # model reproduces inference without the file


def save_checkpoint(path, model):
    blobs = [(n, p.data) for n, p in model.named_parameters()]
    blobs.append((POOL_BLOB, model.pool.tensor.data))
    digest = model.config.digest().encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(digest)))
        f.write(digest)
        f.write(struct.pack("<I", len(blobs)))
        for n, data in blobs:
            nb = n.encode()
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            lten.write_lten_stream(f, data)


def load_checkpoint(path, model):
    """Load blobs into an existing model; config digests must agree."""
    with open(path, "rb") as f:
        if f.read(5) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        version, dlen = struct.unpack("<II", f.read(8))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
        digest = f.read(dlen).decode()
        want = model.config.digest()
        if digest != want:
            raise ValueError(f"{path}: config digest mismatch: checkpoint "
                             f"{digest[:12]}.. vs model {want[:12]}..")
        count, = struct.unpack("<I", f.read(4))
        params = dict(model.named_parameters())
        if count != len(params) + 1:
            raise ValueError(f"{path}: {count} blobs for {len(params)} parameters")
        for _ in range(count):
            nlen, = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode()
            arr = lten.read_lten_stream(f)
            if name == POOL_BLOB:
                from .queries import PromptPoolFeatures, aggregate
                model.pool = PromptPoolFeatures(arr)
                model.t_clip = Tensor(aggregate(model.pool).data.astype(model.dtype))
                continue
            if name not in params:
                raise ValueError(f"{path}: unknown parameter {name!r}")
            if tuple(arr.shape) != tuple(params[name].shape):
                raise ValueError(f"{path}: {name} has shape {arr.shape}, "
                                 f"model wants {params[name].shape}")
            params[name].data = arr.astype(model.dtype)
    return model
