"""Distillation / contrastive objectives, Adam with linear warmup-decay, and the training loop.

Convention: in a ``ParallelPair`` the target side is the teacher's language
(English); the teacher embedding of the target is the regression target for
the student's encodings of both sides.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .embed_core import Encoder, encode_many
from .evaluation import spearman, sts_comparisons, StsItem, translation_search_accuracy
from .student import PARAM_NAMES, StudentParams, Vocabulary, backward_batch, encode_batch
from .text_prep import ParallelPair

OBJECTIVES = ("distill", "simcse")


@dataclass
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 2e-5
    warmup_steps: int = 2000
    epochs: int = 15
    max_seq_tokens: int = 128
    eval_every_steps: int = 500
    seed: int = 0
    objective: str = "distill"
    simcse_temperature: float = 0.05

    def __post_init__(self):
        for name in ("batch_size", "epochs", "max_seq_tokens", "eval_every_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.learning_rate <= 0 or self.simcse_temperature <= 0:
            raise ValueError("learning_rate and simcse_temperature must be positive")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")

    @classmethod
    def toy(cls, **overrides) -> "TrainConfig":
        """Desk-scale defaults: larger learning rate, short warmup, small batches."""
        base = dict(batch_size=32, learning_rate=1e-2, warmup_steps=100, eval_every_steps=100)
        base.update(overrides)
        return cls(**base)


# --- objectives ------------------------------------------------------------

def distill_objective(student_src: np.ndarray, student_tgt: np.ndarray, teacher: np.ndarray):
    """Batch-mean of per-dimension MSE(teacher, student_src) + MSE(teacher, student_tgt).

    Returns (loss, dloss/dstudent_src, dloss/dstudent_tgt).
    """
    ss, st, t = (np.asarray(a, dtype=np.float64) for a in (student_src, student_tgt, teacher))
    if ss.shape != t.shape or st.shape != t.shape:
        raise ValueError(f"dimension mismatch: student {ss.shape}/{st.shape} vs teacher {t.shape}")
    n, d = t.shape
    rs, rt = ss - t, st - t
    loss = (np.sum(rs * rs) + np.sum(rt * rt)) / (n * d)
    return float(loss), 2 * rs / (n * d), 2 * rt / (n * d)


def _log_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=axis, keepdims=True))


def simcse_objective(source_embs: np.ndarray, target_embs: np.ndarray, temperature: float = 0.05):
    """Symmetric in-batch cross-entropy over cosine/temperature logits.

    Row i of each side is the positive for row i of the other; every other
    row in the batch is a negative. Returns (loss, dloss/dsource, dloss/dtarget).
    """
    a = np.asarray(source_embs, dtype=np.float64)
    b = np.asarray(target_embs, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least 2 pairs (no negatives otherwise)")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if (na == 0).any() or (nb == 0).any():
        raise ValueError("zero-norm embedding in contrastive batch")
    ah, bh = a / na[:, None], b / nb[:, None]
    cos = ah @ bh.T
    logits = cos / temperature
    ls_row = _log_softmax(logits, axis=1)
    ls_col = _log_softmax(logits, axis=0)
    diag = np.arange(n)
    loss = -0.5 * (ls_row[diag, diag].mean() + ls_col[diag, diag].mean())
    eye = np.eye(n)
    d_logits = 0.5 / n * ((np.exp(ls_row) - eye) + (np.exp(ls_col) - eye))
    g = d_logits / temperature  # dloss/dcos
    da = (g @ bh - np.sum(g * cos, axis=1)[:, None] * ah) / na[:, None]
    db = (g.T @ ah - np.sum(g * cos, axis=0)[:, None] * bh) / nb[:, None]
    return float(loss), da, db


@dataclass
class Batch:
    pairs: list[ParallelPair]
    teacher_vectors: np.ndarray | None = None

    def __post_init__(self):
        if self.teacher_vectors is not None and len(self.teacher_vectors) != len(self.pairs):
            raise ValueError("teacher vectors and pairs differ in length")


def distill_loss(batch: Batch, params: StudentParams, vocab: Vocabulary, max_tokens: int | None = None):
    """Distillation loss of the student on a batch, with exact parameter gradients."""
    if batch.teacher_vectors is None:
        raise ValueError("distillation batch without teacher vectors")
    src_out, src_cache = encode_batch(params, vocab, [p.source for p in batch.pairs], max_tokens)
    tgt_out, tgt_cache = encode_batch(params, vocab, [p.target for p in batch.pairs], max_tokens)
    loss, g_src, g_tgt = distill_objective(src_out, tgt_out, batch.teacher_vectors)
    grads = backward_batch(params, src_cache, g_src)
    backward_batch(params, tgt_cache, g_tgt, grads)
    return loss, grads


def simcse_loss(batch: Batch, params: StudentParams, vocab: Vocabulary, temperature: float = 0.05,
                max_tokens: int | None = None):
    src_out, src_cache = encode_batch(params, vocab, [p.source for p in batch.pairs], max_tokens)
    tgt_out, tgt_cache = encode_batch(params, vocab, [p.target for p in batch.pairs], max_tokens)
    loss, g_src, g_tgt = simcse_objective(src_out, tgt_out, temperature)
    grads = backward_batch(params, src_cache, g_src)
    backward_batch(params, tgt_cache, g_tgt, grads)
    return loss, grads


# --- optimisation ----------------------------------------------------------

def lr_at(step: int, cfg: TrainConfig, total_steps: int) -> float:
    """Linear warmup to the peak rate, then linear decay to zero at ``total_steps``."""
    if total_steps < cfg.warmup_steps:
        raise ValueError("total_steps must be >= warmup_steps")
    if step < cfg.warmup_steps:
        return cfg.learning_rate * step / cfg.warmup_steps
    if total_steps == cfg.warmup_steps:
        return cfg.learning_rate if step == total_steps else 0.0
    return cfg.learning_rate * max(0.0, (total_steps - step) / (total_steps - cfg.warmup_steps))


class AdamState:
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, params: StudentParams):
        self.step_count = 0
        self.m = params.zeros_like()
        self.v = params.zeros_like()


def adam_step(params: StudentParams, grads: StudentParams, state: AdamState, lr: float) -> StudentParams:
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    for name in PARAM_NAMES:
        if not np.isfinite(getattr(grads, name)).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name in PARAM_NAMES:
        g = getattr(grads, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p = getattr(params, name)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# --- training loop ---------------------------------------------------------

LOG_COLUMNS = ["step", "epoch", "loss", "lr", "holdout_mse", "holdout_acc", "sts_rho", "composite"]


@dataclass
class LogRow:
    step: int
    epoch: int
    loss: float | None
    lr: float
    holdout_mse: float | None = None
    holdout_acc: float | None = None
    sts_rho: float | None = None
    composite: float | None = None

    def cells(self) -> list[str]:
        return ["" if v is None else (repr(float(v)) if isinstance(v, float) else str(v))
                for v in asdict(self).values()]


@dataclass
class TrainResult:
    params: StudentParams
    best_step: int
    best_composite: float
    log: list[LogRow] = field(default_factory=list)

    @property
    def evaluations(self) -> list[LogRow]:
        return [r for r in self.log if r.composite is not None]


def format_log(rows: Sequence[LogRow], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def evaluate_student(params: StudentParams, vocab: Vocabulary, holdout: Sequence[ParallelPair],
                     teacher_holdout: np.ndarray | None, sts: Sequence[StsItem] | None,
                     max_tokens: int | None = None) -> dict[str, float]:
    """Holdout translation accuracy, holdout MSE (teacher(target) vs student(source)), STS rho."""
    out = {}
    if holdout:
        src, _ = encode_batch(params, vocab, [p.source for p in holdout], max_tokens)
        tgt, _ = encode_batch(params, vocab, [p.target for p in holdout], max_tokens)
        out["holdout_acc"] = translation_search_accuracy(src, tgt)
        if teacher_holdout is not None:
            out["holdout_mse"] = float(np.mean((teacher_holdout - src) ** 2))
    if sts:
        comps = [c for group in sts_comparisons(sts).values() for c in group]
        a, _ = encode_batch(params, vocab, [x for x, _, _ in comps], max_tokens)
        b, _ = encode_batch(params, vocab, [y for _, y, _ in comps], max_tokens)
        cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out["sts_rho"] = spearman([g for _, _, g in comps], cos)
    return out


def composite_score(metrics: dict[str, float]) -> float:
    """Mean of accuracy, 1/(1+mse) and STS rho over whichever are present."""
    parts = []
    if "holdout_acc" in metrics:
        parts.append(metrics["holdout_acc"])
    if "holdout_mse" in metrics:
        parts.append(1.0 / (1.0 + metrics["holdout_mse"]))
    if "sts_rho" in metrics:
        parts.append(metrics["sts_rho"])
    if not parts:
        raise ValueError("no evaluation metrics available for checkpoint selection")
    return float(np.mean(parts))


def train(cfg: TrainConfig, data: Sequence[ParallelPair], params: StudentParams, vocab: Vocabulary,
          holdout: Sequence[ParallelPair], teacher: Encoder | None = None,
          sts: Sequence[StsItem] | None = None, step_offset: int = 0) -> TrainResult:
    """Train ``params`` in place; returns a copy of the best-scoring parameters and the log.

    Evaluation happens before the first update, every ``eval_every_steps``
    updates and after the last one.
    """
    if not data:
        raise ValueError("empty training data")
    overlap = {(p.source, p.target) for p in data} & {(p.source, p.target) for p in holdout}
    if overlap:
        raise ValueError(f"{len(overlap)} holdout pair(s) also occur in the training data")
    if cfg.objective == "distill" and teacher is None:
        raise ValueError("distillation needs a teacher encoder")
    if cfg.objective == "simcse" and len(data) < 2:
        raise ValueError("contrastive training needs at least 2 pairs")
    if teacher is not None and teacher.dim != params.d_out:
        raise ValueError(f"teacher dim {teacher.dim} != student output dim {params.d_out}")

    max_tokens = cfg.max_seq_tokens
    rng = np.random.default_rng(cfg.seed)
    teacher_train = teacher_holdout = None
    if teacher is not None:
        teacher_train = encode_many(teacher, [p.target for p in data])
        if holdout:
            teacher_holdout = encode_many(teacher, [p.target for p in holdout])

    steps_per_epoch = math.ceil(len(data) / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    if total < cfg.warmup_steps:
        raise ValueError(f"{total} training steps is fewer than warmup_steps={cfg.warmup_steps}")
    state = AdamState(params)
    log: list[LogRow] = []
    best = {"score": -math.inf, "step": 0, "params": params.copy()}

    def evaluate(step, epoch, row):
        metrics = evaluate_student(params, vocab, holdout, teacher_holdout, sts, max_tokens)
        row.holdout_mse = metrics.get("holdout_mse")
        row.holdout_acc = metrics.get("holdout_acc")
        row.sts_rho = metrics.get("sts_rho")
        row.composite = composite_score(metrics)
        if row.composite > best["score"]:
            best.update(score=row.composite, step=step, params=params.copy())

    row0 = LogRow(step_offset, 0, None, lr_at(0, cfg, total))
    evaluate(step_offset, 0, row0)
    log.append(row0)

    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if cfg.objective == "simcse" and len(idx) < 2:
                # a lone trailing pair has no in-batch negatives
                idx = order[start - 1:start + 1]
            step += 1
            batch_pairs = [data[i] for i in idx]
            if cfg.objective == "distill":
                loss, grads = distill_loss(Batch(batch_pairs, teacher_train[idx]), params, vocab, max_tokens)
            else:
                loss, grads = simcse_loss(Batch(batch_pairs), params, vocab, cfg.simcse_temperature, max_tokens)
            lr = lr_at(step, cfg, total)
            adam_step(params, grads, state, lr)
            row = LogRow(step_offset + step, epoch, loss, lr)
            if step % cfg.eval_every_steps == 0 or step == total:
                evaluate(step_offset + step, epoch, row)
            log.append(row)

    return TrainResult(best["params"], best["step"], best["score"], log)
