"""Losses, decoupled-weight-decay Adam, cosine schedule with warmup, and
the two-stage training loop.

Stage 1 optimizes only the encoder and localization side with the
localization loss; extraction and recognition parameters stay untouched
(bit-identical) until stage 2, which trains everything with the sum of
the three cross-entropy losses.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from . import metrics
from .model import save_checkpoint
from .tensor import Tensor, backward, cross_entropy, make_rng, no_grad

DATA_STREAM = 0xDA7A0000  # + epoch, keys the shuffle order


class TrainingDiverged(RuntimeError):
    def __init__(self, step, value):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    stage1_epochs: int = 200
    stage2_epochs: int = 100
    warmup_epochs: int = 5
    lr: float = 3e-4
    weight_decay: float = 0.05
    batch_size: int = 16
    seed: int = 0
    use_ids_loss: bool = True  # stage-2 ablation switch
    eval_every: int = 0        # epochs between stage-2 evals; 0 = end only


@dataclass
class LossReport:
    loc: float
    char: float
    ids: float
    total: float


# ------------------------------------------------------------------ losses

def loss_loc(c_list, y_char):
    """Sum over localization stages of mean cross-entropy; pad positions
    count as a real class."""
    total = None
    for c in c_list:
        ce = cross_entropy(c, y_char)
        total = ce if total is None else total + ce
    return total


def loss_char(c_char, y_char):
    return cross_entropy(c_char, y_char)


def loss_ids(c_ids, y_ids, char_mask):
    """Radical-sequence loss; positions beyond a line's true length are
    masked out, pad symbols inside a real character are supervised."""
    mask = np.broadcast_to(np.asarray(char_mask, dtype=np.float64)[..., None],
                           y_ids.shape)
    return cross_entropy(c_ids, y_ids, mask)


# ----------------------------------------------------------------- optimizer

class AdamW:
    """Adam with decoupled weight decay. Parameters with no gradient this
    step are treated as having a zero gradient (moments still decay, the
    multiplicative shrink still applies)."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.05):
        self.params = [p for p in params if p.requires_grad]
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.wd = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else 0.0
            if self.wd:
                p.data -= (lr * self.wd) * p.data
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * np.square(g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def lr_at(step, total_steps, warmup_steps, base_lr):
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    if step >= total_steps:
        return 0.0
    span = max(1, total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * (step - warmup_steps) / span))


# ------------------------------------------------------------------ batching

def _stack_batch(samples, idx):
    images = np.stack([samples[i].image for i in idx]).astype(np.float32)
    y = np.stack([samples[i].text_label for i in idx])
    y_ids = np.stack([samples[i].ids_labels for i in idx])
    lengths = np.array([samples[i].true_length for i in idx])
    mask = (np.arange(y.shape[1])[None, :] < lengths[:, None]).astype(np.float32)
    return images, y, y_ids, mask


def batches(samples, batch_size, seed, epoch):
    order = make_rng(seed, DATA_STREAM + epoch).permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        yield _stack_batch(samples, order[start:start + batch_size])


# ------------------------------------------------------------------ training

def predict(model, samples, batch_size=64):
    """Argmax predictions truncated at the first pad class, per sample."""
    prev = model.mode
    model.set_mode("infer")
    preds = []
    with no_grad():
        for start in range(0, len(samples), batch_size):
            idx = range(start, min(start + batch_size, len(samples)))
            images, _, _, _ = _stack_batch(samples, list(idx))
            trace = model.forward(Tensor(images))
            for row in trace.c_char.data:
                preds.append(metrics.decode_prediction(row, model.config.n_class - 1))
    model.set_mode(prev)
    return preds


def evaluate_model(model, samples, batch_size=64):
    preds = predict(model, samples, batch_size)
    labels = [s.text_label[:s.true_length] for s in samples]
    return metrics.evaluate(preds, labels)


class TsvLog:
    def __init__(self, path):
        self.path = path
        if path:
            with open(path, "w") as f:
                f.write("step\tlr\tloss_loc\tloss_char\tloss_ids\tloss_total\t"
                        "eval_lacc\teval_ned\n")

    def row(self, step, lr, report, lacc="", ned=""):
        if not self.path:
            return
        with open(self.path, "a") as f:
            f.write(f"{step}\t{lr:.8g}\t{report.loc:.6f}\t{report.char:.6f}\t"
                    f"{report.ids:.6f}\t{report.total:.6f}\t{lacc}\t{ned}\n")


def train_two_stage(model, samples, tconfig, run_dir=None, eval_samples=None):
    """Runs both stages; returns (history, eval_history).

    history: one LossReport per epoch (means over its steps).
    eval_history: (epoch, lacc, ned) tuples on the eval split (or the
    training split when none is given).
    """
    if not samples:
        raise ValueError("empty corpus")
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
    log = TsvLog(os.path.join(run_dir, "log.tsv") if run_dir else None)
    eval_on = eval_samples if eval_samples is not None else samples
    bs = tconfig.batch_size
    steps_per_epoch = (len(samples) + bs - 1) // bs
    warmup = tconfig.warmup_epochs * steps_per_epoch
    history, eval_history = [], []
    gstep = 0

    def run_stage(stage, epochs, params, first_epoch):
        nonlocal gstep
        opt = AdamW(params, weight_decay=tconfig.weight_decay)
        total = epochs * steps_per_epoch
        step = 0  # schedule restarts per stage
        for e in range(epochs):
            sums = np.zeros(4)
            lr = 0.0
            for images, y, y_ids, mask in batches(samples, bs, tconfig.seed,
                                                  first_epoch + e):
                trace = model.forward(Tensor(images), mode="train",
                                      loc_only=(stage == 1))
                l_loc = loss_loc(trace.c_loc, y)
                if stage == 1:
                    l_char = l_ids = None
                    l_total = l_loc
                else:
                    l_char = loss_char(trace.c_char, y)
                    l_total = l_loc + l_char
                    if tconfig.use_ids_loss:
                        l_ids = loss_ids(trace.c_ids, y_ids, mask)
                        l_total = l_total + l_ids
                    else:
                        l_ids = None
                value = l_total.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(gstep, value)
                lr = lr_at(step, total, warmup, tconfig.lr)
                backward(l_total)
                opt.step(lr)
                opt.zero_grad()
                step += 1
                gstep += 1
                sums += [l_loc.item(),
                         l_char.item() if l_char is not None else 0.0,
                         l_ids.item() if l_ids is not None else 0.0,
                         value]
            report = LossReport(*(sums / steps_per_epoch))
            history.append(report)
            do_eval = (tconfig.eval_every and stage == 2
                       and (e + 1) % tconfig.eval_every == 0)
            if do_eval:
                res = evaluate_model(model, eval_on)
                eval_history.append((first_epoch + e, res.lacc, res.ned))
                log.row(gstep, lr, report, f"{res.lacc:.4f}", f"{res.ned:.4f}")
            else:
                log.row(gstep, lr, report)

    run_stage(1, tconfig.stage1_epochs, [p for _, p in model.stage1_parameters()], 0)
    if run_dir:
        save_checkpoint(os.path.join(run_dir, "ckpt_stage1.lckpt"), model)
    run_stage(2, tconfig.stage2_epochs, model.parameters(), tconfig.stage1_epochs)
    res = evaluate_model(model, eval_on)
    eval_history.append((tconfig.stage1_epochs + tconfig.stage2_epochs,
                         res.lacc, res.ned))
    if run_dir:
        save_checkpoint(os.path.join(run_dir, "ckpt_final.lckpt"), model)
        with open(os.path.join(run_dir, "eval.tsv"), "w") as f:
            f.write("epoch\tlacc\tned\n")
            for e, lacc, ned in eval_history:
                f.write(f"{e}\t{lacc:.6f}\t{ned:.6f}\n")
    return history, eval_history
