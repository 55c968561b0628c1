"""Command-line entry point: corpus generation, training, evaluation,
inference, radical-sequence tooling, and attention-map dumps.

Run configuration is flat key=value text (unknown keys rejected) plus
flag overrides; LER_SEED in the environment overrides any seed. The
effective configuration is echoed into the run directory.
"""

import argparse
import os
import sys

import numpy as np

from . import ids as ids_kit
from . import metrics, pgm
from .corpus import CorpusConfig, generate_corpus, load_corpus
from .model import Model, make_config, load_checkpoint, PRESETS
from .lten import load_lten
from .queries import load_embedding_file
from .tensor import Tensor, no_grad
from .training import TrainConfig, train_two_stage, evaluate_model

RUN_KEYS = {
    "preset": str, "seed": int, "corpus": str, "test_corpus": str,
    "run_dir": str, "embedding_file": str,
    "stage1_epochs": int, "stage2_epochs": int, "warmup_epochs": int,
    "lr": float, "weight_decay": float, "batch_size": int,
    "use_ids_loss": int, "eval_every": int,
}

RUN_DEFAULTS = {
    "preset": "ler-tiny", "seed": 0, "corpus": "", "test_corpus": "",
    "run_dir": "run", "embedding_file": "",
    "stage1_epochs": 200, "stage2_epochs": 100, "warmup_epochs": 5,
    "lr": 3e-4, "weight_decay": 0.05, "batch_size": 16,
    "use_ids_loss": 1, "eval_every": 0,
}


def read_run_config(path=None, overrides=()):
    cfg = dict(RUN_DEFAULTS)

    def apply(key, value, origin):
        if key not in RUN_KEYS:
            raise SystemExit(f"{origin}: unknown config key {key!r} "
                             f"(known: {', '.join(sorted(RUN_KEYS))})")
        try:
            cfg[key] = RUN_KEYS[key](value)
        except ValueError:
            raise SystemExit(f"{origin}: bad value {value!r} for {key}")

    if path:
        with open(path) as f:
            for ln, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise SystemExit(f"{path}:{ln}: expected key=value, got {line!r}")
                k, _, v = line.partition("=")
                apply(k.strip(), v.strip(), f"{path}:{ln}")
    for item in overrides:
        if "=" not in item:
            raise SystemExit(f"--set {item!r}: expected key=value")
        k, _, v = item.partition("=")
        apply(k.strip(), v.strip(), f"--set {item}")
    if "LER_SEED" in os.environ:
        cfg["seed"] = int(os.environ["LER_SEED"])
    return cfg


def echo_config(run_dir, cfg, extra=()):
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.echo"), "w") as f:
        for k in sorted(cfg):
            f.write(f"{k}={cfg[k]}\n")
        for k, v in extra:
            f.write(f"{k}={v}\n")


def build_model(cfg, corpus):
    overrides = dict(l=corpus.config.l, l_ids=corpus.config.l_ids,
                     n_class=corpus.n_class, n_ids=corpus.n_ids,
                     height=corpus.config.height, width=corpus.config.width,
                     in_channels=1)
    mconfig = make_config(cfg["preset"], **overrides)
    pool = None
    if cfg.get("embedding_file"):
        pool = load_embedding_file(cfg["embedding_file"], mconfig.d0)
    return Model(mconfig, seed=cfg["seed"], pool=pool)


# ----------------------------------------------------------------- commands

def cmd_gen_corpus(args):
    if args.count < 0:
        raise SystemExit("--count must be >= 0")
    seed = int(os.environ.get("LER_SEED", args.seed))
    config = CorpusConfig(height=args.height, width=args.width, cell=args.cell,
                          l=args.line_slots, min_len=args.min_len,
                          max_len=args.max_len, l_ids=args.l_ids,
                          charset_size=args.charset_size,
                          max_depth=args.max_depth, noise=args.noise,
                          jitter=args.jitter, charset_seed=args.charset_seed)
    corpus = generate_corpus(args.out, config, seed, args.count)
    print(f"wrote {args.count} samples to {args.out} "
          f"({config.charset_size} character classes, {corpus.vocab.n_ids} ids symbols)")
    return 0


def cmd_train(args):
    cfg = read_run_config(args.config, args.set or [])
    for flag in ("corpus", "test_corpus", "run_dir", "preset"):
        v = getattr(args, flag)
        if v is not None:
            cfg[flag] = v
    if args.seed is not None and "LER_SEED" not in os.environ:
        cfg["seed"] = args.seed
    if not cfg["corpus"]:
        raise SystemExit("train needs a corpus (--corpus or config key)")
    corpus, samples = load_corpus(cfg["corpus"])
    test_samples = None
    if cfg["test_corpus"]:
        _, test_samples = load_corpus(cfg["test_corpus"])
    model = build_model(cfg, corpus)
    echo_config(cfg["run_dir"], cfg, [("model_digest", model.config.digest()),
                                      ("model_params", model.param_count())])
    tconfig = TrainConfig(stage1_epochs=cfg["stage1_epochs"],
                          stage2_epochs=cfg["stage2_epochs"],
                          warmup_epochs=cfg["warmup_epochs"], lr=cfg["lr"],
                          weight_decay=cfg["weight_decay"],
                          batch_size=cfg["batch_size"], seed=cfg["seed"],
                          use_ids_loss=bool(cfg["use_ids_loss"]),
                          eval_every=cfg["eval_every"])
    history, eval_history = train_two_stage(model, samples, tconfig,
                                            run_dir=cfg["run_dir"],
                                            eval_samples=test_samples)
    last = history[-1]
    _, lacc, ned = eval_history[-1]
    print(f"final loss {last.total:.4f} (loc {last.loc:.4f} char {last.char:.4f} "
          f"ids {last.ids:.4f})")
    print(f"eval lacc {lacc:.4f} ned {ned:.4f}")
    print(f"run artifacts in {cfg['run_dir']}")
    return 0


def _load_for_inference(args):
    cfg = dict(RUN_DEFAULTS)
    cfg["preset"] = args.preset
    cfg["seed"] = int(os.environ.get("LER_SEED", args.seed))
    if getattr(args, "embedding_file", None):
        cfg["embedding_file"] = args.embedding_file
    corpus, samples = load_corpus(args.corpus)
    model = build_model(cfg, corpus)
    load_checkpoint(args.ckpt, model)
    model.set_mode("infer")
    return model, corpus, samples


def cmd_eval(args):
    model, corpus, samples = _load_for_inference(args)
    result = evaluate_model(model, samples)
    print(f"lacc {result.lacc:.4f} ned {result.ned:.4f} over {result.count} samples")
    if args.out:
        metrics.write_report(args.out, result)
    if result.lacc < args.min_lacc or result.ned < args.min_ned:
        print(f"below thresholds (lacc>={args.min_lacc}, ned>={args.min_ned})",
              file=sys.stderr)
        return 1
    return 0


def cmd_infer(args):
    model, corpus, _ = _load_for_inference(args)
    pad = model.config.n_class - 1
    for path in args.images:
        img, _ = load_lten(path)
        if img.ndim == 2:
            img = img[..., None]
        with no_grad():
            trace = model.forward(Tensor(img.astype(np.float32)))
        pred = metrics.decode_prediction(trace.c_char.data, pad)
        names = [corpus.charset[c].to_string(corpus.vocab) for c in pred]
        print(f"{path}\t{' '.join(map(str, pred))}\t{' '.join(names)}")
    return 0


def cmd_viz_attn(args):
    model, corpus, _ = _load_for_inference(args)
    img, _ = load_lten(args.image)
    if img.ndim == 2:
        img = img[..., None]
    with no_grad():
        trace = model.forward(Tensor(img.astype(np.float32)))
    gh, gw = model.config.height // 4, model.config.width // 4
    os.makedirs(args.out, exist_ok=True)
    maps = pgm.attention_maps(trace.att.data, gh, gw, factor=4)
    for j, m in enumerate(maps):
        pgm.write_pgm(os.path.join(args.out, f"att_{j}.pgm"), m)
    print(f"wrote {len(maps)} maps to {args.out}")
    return 0


def _ids_vocab(args):
    if getattr(args, "vocab", None):
        return ids_kit.IdsVocab.load(args.vocab)
    return ids_kit.IdsVocab.desk_default()


def cmd_ids(args):
    vocab = _ids_vocab(args)
    if args.ids_cmd == "parse":
        try:
            syms = [vocab.id_of(tok) for tok in args.sequence.split()]
            tree = ids_kit.parse(syms, vocab)
        except (KeyError, ids_kit.ParseError) as e:
            print(f"parse error: {e}", file=sys.stderr)
            return 1
        print(tree.to_string(vocab))
        return 0
    if args.ids_cmd == "flatten":
        try:
            tree = ids_kit.parse_tree_string(args.tree, vocab)
            seq = ids_kit.flatten(tree, vocab)
        except (ValueError, ids_kit.ParseError) as e:
            print(f"flatten error: {e}", file=sys.stderr)
            return 1
        print(" ".join(vocab.name(s) for s in seq if s != vocab.end_id))
        return 0
    # charset
    seed = int(os.environ.get("LER_SEED", args.seed))
    trees = ids_kit.enumerate_charset(vocab, args.max_depth, args.size, seed)
    for i, t in enumerate(trees):
        print(f"{i}\t{t.to_string(vocab)}")
    return 0


# ----------------------------------------------------------------- argparse

def _add_inference_args(p):
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--corpus", required=True,
                   help="corpus dir defining geometry, charset and vocab")
    p.add_argument("--preset", default="ler-tiny", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, default=0,
                   help="model seed (must match training; LER_SEED overrides)")
    p.add_argument("--embedding-file", default="",
                   help="prompts.lten used at training time, if any")


def make_parser():
    ap = argparse.ArgumentParser(
        prog="ler",
        description="character-decoupled text line recognizer tooling")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-corpus", help="generate a synthetic labeled corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0, help="LER_SEED overrides")
    g.add_argument("--height", type=int, default=32)
    g.add_argument("--width", type=int, default=128)
    g.add_argument("--cell", type=int, default=24)
    g.add_argument("--line-slots", type=int, default=5,
                   help="label positions per line (labels are padded up to this)")
    g.add_argument("--min-len", type=int, default=1)
    g.add_argument("--max-len", type=int, default=5)
    g.add_argument("--l-ids", type=int, default=8)
    g.add_argument("--charset-size", type=int, default=24)
    g.add_argument("--max-depth", type=int, default=2)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--jitter", type=int, default=2)
    g.add_argument("--charset-seed", type=int, default=777)
    g.set_defaults(fn=cmd_gen_corpus)

    t = sub.add_parser("train", help="two-stage training run")
    t.add_argument("--config", help="key=value run config file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key")
    t.add_argument("--corpus")
    t.add_argument("--test-corpus", dest="test_corpus")
    t.add_argument("--run-dir", dest="run_dir")
    t.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--seed", type=int)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a corpus")
    _add_inference_args(e)
    e.add_argument("--min-lacc", type=float, default=0.0,
                   help="exit 1 below this line accuracy")
    e.add_argument("--min-ned", type=float, default=0.0)
    e.add_argument("--out", help="write a per-sample TSV report here")
    e.set_defaults(fn=cmd_eval)

    i = sub.add_parser("infer", help="predict text for LTEN images")
    _add_inference_args(i)
    i.add_argument("images", nargs="+", help="LTEN image files")
    i.set_defaults(fn=cmd_infer)

    v = sub.add_parser("viz-attn", help="dump per-position attention maps as PGM")
    _add_inference_args(v)
    v.add_argument("--image", required=True, help="LTEN image file")
    v.add_argument("--out", required=True, help="output directory")
    v.set_defaults(fn=cmd_viz_attn)

    d = sub.add_parser("ids", help="radical-sequence tooling")
    dsub = d.add_subparsers(dest="ids_cmd", required=True)
    dp = dsub.add_parser("parse", help="pre-order symbols -> bracketed tree")
    dp.add_argument("sequence", help="space-separated symbol names")
    dp.add_argument("--vocab", help="vocab file (desk default otherwise)")
    df = dsub.add_parser("flatten", help="bracketed tree -> pre-order symbols")
    df.add_argument("tree", help="e.g. 'lr(bar_h, box)'")
    df.add_argument("--vocab")
    dc = dsub.add_parser("charset", help="enumerate a deterministic charset")
    dc.add_argument("--size", type=int, default=24)
    dc.add_argument("--max-depth", type=int, default=2)
    dc.add_argument("--seed", type=int, default=777, help="LER_SEED overrides")
    dc.add_argument("--vocab")
    d.set_defaults(fn=cmd_ids)

    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
