"""Training loops shared by teacher prep, warm-up KD, and candidate scoring."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import data as datamod
from . import distill, genotype as gt, tensor
from .errors import TrainingError
from .model import Model
from .optim import AdamState
from .tensor import Tape, Tensor, backward

PRETRAIN_LR = 1e-4
SEARCH_FINETUNE_LR = 4e-4
RETRAIN_FINETUNE_LR = 5e-5
MASK_PROB = 0.15


def genotype_seed(g):
    """Stable 32-bit seed derived from the canonical serialization."""
    digest = hashlib.sha256(gt.serialize(g).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _check_finite(value, step):
    if not np.isfinite(value):
        raise TrainingError(f"loss diverged to {value}", step=step)


# -- supervised teacher objectives ------------------------------------------

def masked_token_loss(model, ids, pattern, labels, head):
    arts = model.forward(ids)
    logits = model.token_logits(arts, head)
    lp = tensor.log_softmax(logits, axis=-1)
    picked = tensor.gather_last(lp, labels)
    weights = Tensor(pattern.astype(np.float64))
    count = max(1.0, float(pattern.sum()))
    return tensor.scale(tensor.tsum(tensor.mul(picked, weights)), -1.0 / count)


def task_supervised_loss(model, ids, labels, task, head):
    arts = model.forward(ids, head=head)
    if task.kind == "classification":
        lp = tensor.log_softmax(arts.logits, axis=-1)
        picked = tensor.gather_last(lp, np.asarray(labels, dtype=np.int64))
        return tensor.scale(tensor.tmean(picked), -1.0)
    target = Tensor(np.asarray(labels, dtype=np.float64).reshape(-1, 1))
    return distill.mse(arts.logits, target)


def train_teacher(cfg, corpus, tasks, pretrain_steps=300, finetune_steps=300,
                  batch=16, seed=0, log=None):
    """MLM-style pretraining then joint multi-task fine-tuning; the fixture
    teacher every other stage distills from."""
    teacher = Model.build(cfg, seed=seed)
    teacher.add_task_head("mlm", cfg.vocab, seed=seed + 1)
    for t in tasks:
        teacher.add_task_head(t.task_id, t.n_out, seed=seed + 2)

    opt = AdamState(teacher.trainable(), PRETRAIN_LR, pretrain_steps,
                    allow_missing=True)
    stream = datamod.mlm_batches(corpus, MASK_PROB, batch,
                                 np.random.default_rng([seed, 1]), epochs=1000)
    for step in range(pretrain_steps):
        ids, pattern, original = next(stream)
        with Tape():
            loss = masked_token_loss(teacher, ids, pattern, original, "mlm")
            backward(loss)
        _check_finite(loss.item(), step)
        if log is not None:
            log.append({"phase": "teacher-pretrain", "step": step, "total": loss.item()})
        opt.step()
        opt.zero_grad()

    opt = AdamState(teacher.trainable(), 5e-4, finetune_steps,
                    allow_missing=True)
    streams = [datamod.task_batches(t, batch, np.random.default_rng([seed, 2, i]),
                                    epochs=1000) for i, t in enumerate(tasks)]
    for step in range(finetune_steps):
        task = tasks[step % len(tasks)]
        ids, labels = next(streams[step % len(tasks)])
        with Tape():
            loss = task_supervised_loss(teacher, ids, labels, task, task.task_id)
            backward(loss)
        _check_finite(loss.item(), step)
        if log is not None:
            log.append({"phase": "teacher-finetune", "task": task.task_id,
                        "step": step, "total": loss.item()})
        opt.step()
        opt.zero_grad()
    return teacher


def accuracy(model, task, head, batch=64):
    hits = total = 0
    x, y = task.holdout_x, task.holdout_y
    for start in range(0, x.shape[0], batch):
        ids = x[start:start + batch]
        labels = y[start:start + batch]
        arts = model.forward(ids, head=head)
        z = arts.logits.values
        if task.kind == "classification":
            hits += int((z.argmax(axis=1) == labels).sum())
        else:
            hits += int((np.abs(z[:, 0] - labels) < 0.1).sum())
        total += ids.shape[0]
    return hits / total


# -- knowledge distillation loops -------------------------------------------

@dataclass
class CachedBatch:
    ids: np.ndarray
    labels: np.ndarray | None
    teacher: object  # ForwardArtifacts, computed once, no grad


def cache_teacher_batches(teacher, batches, head=None):
    out = []
    for ids, labels in batches:
        arts = teacher.forward(ids, head=head)
        out.append(CachedBatch(ids=ids, labels=labels, teacher=arts))
    return out


def kd_pretrain_steps(student, cached, kd_cfg, opt, log=None, phase="kd-pretrain"):
    """One gamma=0 KD pass over `cached` batches (teacher side precomputed)."""
    last = float("nan")
    for step, cb in enumerate(cached):
        with Tape():
            arts = student.forward(cb.ids)
            loss = distill.total_loss(arts, cb.teacher, kd_cfg)
            backward(loss.total)
        last = loss.total.item()
        _check_finite(last, step)
        if log is not None:
            rec = {"phase": phase, "step": step}
            rec.update(loss.scalars())
            log.append(rec)
        opt.step()
        opt.zero_grad()
    return last


def kd_finetune_steps(student, cached, kd_cfg, opt, head, log=None,
                      phase="kd-finetune"):
    """gamma=1 KD pass against cached teacher bundles that carry logits."""
    last = float("nan")
    for step, cb in enumerate(cached):
        with Tape():
            arts = student.forward(cb.ids, head=head)
            loss = distill.total_loss(arts, cb.teacher, kd_cfg)
            backward(loss.total)
        last = loss.total.item()
        _check_finite(last, step)
        if log is not None:
            rec = {"phase": phase, "step": step}
            rec.update(loss.scalars())
            log.append(rec)
        opt.step()
        opt.zero_grad()
    return last


def kd_holdout_loss(student, cached, kd_cfg, head=None):
    total = 0.0
    for cb in cached:
        arts = student.forward(cb.ids, head=head)
        total += distill.total_loss(arts, cb.teacher, kd_cfg).total.item()
    return total / max(1, len(cached))
