import numpy as np
import pytest

from ffnas import data as datamod
from ffnas import train, warmup
from ffnas.model import build_supernet, student_config, teacher_config
from ffnas.tensor import Tape, backward


class Fixture:
    """Bundle of corpus/tasks/teacher/supernet shared by a test tier."""

    def __init__(self, corpus, tasks, teacher, frozen):
        self.corpus = corpus
        self.tasks = tasks
        self.teacher = teacher
        self.frozen = frozen


@pytest.fixture(scope="session")
def tiny():
    """Micro-scale stack for fast unit tests (seconds to build)."""
    dc = datamod.DataConfig(vocab=64, seq_len=8)
    corpus = datamod.gen_corpus(0, 300, dc)
    tasks = datamod.default_tasks(0, dc, size=120)
    tcfg = teacher_config(vocab=64, max_len=16, layers=2, hidden=32, heads=2,
                          embed_factor=8, d_ref=128)
    teacher = train.train_teacher(tcfg, corpus, tasks, pretrain_steps=25,
                                  finetune_steps=18, batch=8, seed=0)
    scfg = student_config(vocab=64, max_len=16, hidden=16, heads=2,
                          embed_factor=4, d_ref=16)
    sup = build_supernet(scfg, seed=1)
    frozen = warmup.pretrain_supernet(sup, teacher, corpus, steps=20, batch=4)
    return Fixture(corpus, tasks, teacher, frozen)


@pytest.fixture(scope="session")
def desk():
    """Default desk-scale stack; used by the acceptance suite."""
    dc = datamod.DataConfig(vocab=512, seq_len=16)
    corpus = datamod.gen_corpus(0, 1200, dc)
    tasks = datamod.default_tasks(0, dc, size=800)
    teacher = train.train_teacher(teacher_config(), corpus, tasks,
                                  pretrain_steps=300, finetune_steps=1500,
                                  batch=16, seed=0)
    sup = build_supernet(student_config(), seed=1)
    frozen = warmup.pretrain_supernet(sup, teacher, corpus, steps=500, batch=8)
    return Fixture(corpus, tasks, teacher, frozen)


def finite_difference(f, tensors, h=1e-4):
    """Max relative error between taped grads and central differences.

    `f` rebuilds the scalar loss from `tensors` on every call. The error is
    |analytic - numeric| / max(1, |analytic|, |numeric|), maximized over
    all entries of all tensors.
    """
    for t in tensors:
        t.grad = None
    with Tape():
        loss = f()
        backward(loss)
    worst = 0.0
    for t in tensors:
        analytic = t.grad.copy() if t.grad is not None else np.zeros_like(t.values)
        flat = t.values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - num) / max(1.0, abs(a), abs(num))
            worst = max(worst, err)
    return worst
