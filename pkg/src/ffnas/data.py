"""Synthetic corpus and toy tasks.

The corpus is an order-2 Markov chain with factored transition logits
P(c | a, b) proportional to exp(U[a, c] + W[b, c]); rows are computed on
demand so the vocabulary can stay at a few hundred without a vocab^3 table.
Tasks plant token patterns whose labels a rule can read off perfectly, so a
capable model has something real to learn. Token ids 0 (pad) and 1 (mask)
are reserved; corpus tokens live in [2, vocab).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InputError

PAD_ID = 0
MASK_ID = 1
FIRST_TOKEN = 2
# kept small so planted tokens perturb the sequence distribution about as
# much as the classification tasks' single markers do
MAX_MARKER_COUNT = 2


@dataclass
class DataConfig:
    vocab: int = 512
    seq_len: int = 16
    logit_scale: float = 2.0     # higher -> peakier transition rows


@dataclass
class Corpus:
    seed: int
    sequences: np.ndarray        # (size, seq_len) int64
    cfg: DataConfig

    @property
    def size(self):
        return self.sequences.shape[0]


class MarkovGenerator:
    """Order-2 chain over [FIRST_TOKEN, vocab) with factored logits."""

    def __init__(self, seed, cfg):
        self.cfg = cfg
        self.n = cfg.vocab - FIRST_TOKEN
        rng = np.random.default_rng([seed, 0xC0])
        self.u = rng.normal(0.0, cfg.logit_scale, (self.n, self.n))
        self.w = rng.normal(0.0, cfg.logit_scale, (self.n, self.n))
        self.init = rng.dirichlet(np.ones(self.n))

    def transition_row(self, a, b):
        """Exact P(next | a, b) over the full vocab (reserved ids get 0)."""
        logits = self.u[a - FIRST_TOKEN] + self.w[b - FIRST_TOKEN]
        logits = logits - logits.max()
        p = np.exp(logits)
        p /= p.sum()
        row = np.zeros(self.cfg.vocab)
        row[FIRST_TOKEN:] = p
        return row

    def sample(self, rng, size):
        L = self.cfg.seq_len
        seqs = np.empty((size, L), dtype=np.int64)
        seqs[:, 0] = rng.choice(self.n, size=size, p=self.init)
        seqs[:, 1] = rng.choice(self.n, size=size, p=self.init)
        for t in range(2, L):
            logits = self.u[seqs[:, t - 2]] + self.w[seqs[:, t - 1]]
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            cum = p.cumsum(axis=1)
            r = rng.random(size)[:, None]
            seqs[:, t] = np.minimum((r >= cum).sum(axis=1), self.n - 1)
        return seqs + FIRST_TOKEN


def gen_corpus(seed, size, cfg=None):
    if size <= 0:
        raise InputError("corpus size must be positive")
    cfg = cfg or DataConfig()
    gen = MarkovGenerator(seed, cfg)
    rng = np.random.default_rng([seed, 0xC1])
    return Corpus(seed=seed, sequences=gen.sample(rng, size), cfg=cfg)


@dataclass
class TaskDataset:
    task_id: str
    kind: str                    # "classification" | "regression"
    n_out: int
    train_x: np.ndarray
    train_y: np.ndarray
    holdout_x: np.ndarray
    holdout_y: np.ndarray
    markers: tuple = ()

    def rule_labels(self, x):
        """The planted rule itself; perfect by construction."""
        if self.kind == "classification" and self.n_out == 2:
            return np.isin(x, self.markers).any(axis=1).astype(np.int64)
        if self.kind == "classification":
            hits = np.stack([np.isin(x, [m]).any(axis=1) for m in self.markers], axis=1)
            return hits.argmax(axis=1).astype(np.int64)
        return (x == self.markers[0]).sum(axis=1) / MAX_MARKER_COUNT


def _marker_tokens(rng, vocab, count):
    # top-of-range ids, rarely produced by the chain's own sampling
    return tuple(int(v) for v in rng.choice(
        np.arange(vocab - 16, vocab), size=count, replace=False))


def gen_task(seed, kind, cfg=None, size=800, split=0.8, task_id=None):
    """Planted-pattern dataset; labels are exact functions of the tokens."""
    cfg = cfg or DataConfig()
    base = gen_corpus(seed * 7919 + 13, size, cfg)
    x = base.sequences.copy()
    rng = np.random.default_rng([seed, 0xA5])
    L = cfg.seq_len

    if kind == "classification2":
        markers = _marker_tokens(rng, cfg.vocab, 1)
        x[np.isin(x, markers)] = FIRST_TOKEN  # scrub accidental hits
        plant = rng.random(size) < 0.5
        cols = rng.integers(0, L, size=size)
        x[plant, cols[plant]] = markers[0]
        y = plant.astype(np.int64)
        kind_out, n_out = "classification", 2
    elif kind == "classification3":
        markers = _marker_tokens(rng, cfg.vocab, 3)
        x[np.isin(x, markers)] = FIRST_TOKEN
        which = rng.integers(0, 3, size=size)
        cols = rng.integers(0, L, size=size)
        x[np.arange(size), cols] = np.asarray(markers)[which]
        y = which.astype(np.int64)
        kind_out, n_out = "classification", 3
    elif kind == "regression":
        # label = planted marker count / MAX_MARKER_COUNT
        markers = _marker_tokens(rng, cfg.vocab, 1)
        x[np.isin(x, markers)] = FIRST_TOKEN
        counts = rng.integers(0, MAX_MARKER_COUNT + 1, size=size)
        for i in range(size):
            if counts[i]:
                cols = rng.choice(L, size=counts[i], replace=False)
                x[i, cols] = markers[0]
        y = counts / MAX_MARKER_COUNT
        kind_out, n_out = "regression", 1
    else:
        raise InputError(f"unknown task kind {kind!r}")

    n_train = int(round(size * split))
    return TaskDataset(
        task_id=task_id or kind, kind=kind_out, n_out=n_out,
        train_x=x[:n_train], train_y=y[:n_train],
        holdout_x=x[n_train:], holdout_y=y[n_train:], markers=markers)


DEFAULT_TASK_KINDS = ("classification2", "classification3", "regression")


def default_tasks(seed, cfg=None, size=800):
    return [gen_task(seed + i, kind, cfg, size=size, task_id=f"task{i}")
            for i, kind in enumerate(DEFAULT_TASK_KINDS)]


def mlm_batches(corpus, mask_prob, batch, rng, epochs=1):
    """Yield (masked_ids, mask_positions, original_ids) batches; teacher and
    student must consume the same stream object to stay in lockstep."""
    if not 0.0 <= mask_prob < 1.0:
        raise ContractError("mask_prob must be in [0, 1)")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    n = corpus.size
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n - batch + 1, batch):
            idx = order[start:start + batch]
            original = corpus.sequences[idx]
            ids = original.copy()
            if mask_prob > 0.0:
                pattern = rng.random(ids.shape) < mask_prob
                ids[pattern] = MASK_ID
            else:
                pattern = np.zeros(ids.shape, dtype=bool)
            yield ids, pattern, original


def corpus_jsonl(corpus):
    lines = [json.dumps({"seed": corpus.seed, "vocab": corpus.cfg.vocab,
                         "seq_len": corpus.cfg.seq_len})]
    for row in corpus.sequences:
        lines.append(json.dumps({"tokens": row.tolist()}))
    return "\n".join(lines) + "\n"


def tasks_jsonl(tasks):
    lines = []
    for t in tasks:
        lines.append(json.dumps({
            "task": t.task_id, "kind": t.kind, "n_out": t.n_out,
            "markers": list(t.markers)}, sort_keys=True))
        for split, x, y in (("train", t.train_x, t.train_y),
                            ("holdout", t.holdout_x, t.holdout_y)):
            for row, label in zip(x, y):
                lines.append(json.dumps({
                    "task": t.task_id, "split": split,
                    "tokens": row.tolist(),
                    "label": label.item() if hasattr(label, "item") else label},
                    sort_keys=True))
    return "\n".join(lines) + "\n"


def fixture_hash(text):
    import hashlib
    return hashlib.sha256(text.encode()).hexdigest()


def task_batches(task, batch, rng, split="train", epochs=1):
    x = task.train_x if split == "train" else task.holdout_x
    y = task.train_y if split == "train" else task.holdout_y
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n - batch + 1, batch):
            idx = order[start:start + batch]
            yield x[idx], y[idx]
