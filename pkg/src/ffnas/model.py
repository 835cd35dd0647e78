"""Toy transformer encoder with factorized embeddings and genotype-driven FFNs."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import genotype as gt
from . import tensor
from .errors import ContractError, InputError
from .tensor import Tensor

INIT_STD = 0.02


@dataclass
class ModelConfig:
    layers: int = 2            # M
    hidden: int = 32           # d
    heads: int = 4             # h
    max_len: int = 32          # L
    vocab: int = 512
    embed_factor: int = 8      # factorized embedding inner size
    d_ref: int = 32            # reference intermediate size the ratio multiplies
    max_nodes: int = gt.DEFAULT_MAX_NODES
    genotype: gt.FfnGenotype | None = None

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ContractError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        for name in ("layers", "hidden", "heads", "max_len", "vocab",
                     "embed_factor", "d_ref"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if self.genotype is None:
            self.genotype = gt.baseline_genotype(self.layers)

    def with_genotype(self, g):
        return replace(self, genotype=g)


def teacher_config(**over):
    base = dict(layers=4, hidden=64, heads=4, max_len=32, vocab=512,
                embed_factor=16, d_ref=256)
    base.update(over)
    return ModelConfig(**base)


def student_config(**over):
    base = dict(layers=2, hidden=32, heads=4, max_len=32, vocab=512,
                embed_factor=8, d_ref=32)
    base.update(over)
    return ModelConfig(**base)


@dataclass
class ForwardArtifacts:
    """Everything the distillation losses consume."""

    embeddings: Tensor                 # (B, Ls, d)
    attentions: list                   # M x (B, h, Ls, Ls), post-softmax
    hidden: list                       # M x (B, Ls, d)
    logits: Tensor | None = None       # (B, k) when a head was requested


def ffn_weight_names(layer, spec):
    """(name, node_idx, stack_idx) for every linear node of one layer's FFN."""
    out = []
    for s in range(spec.stack):
        for i, node in enumerate(spec.nodes):
            if node.kind == "linear":
                out.append((f"L{layer}.ffn.s{s}.n{i}", i, s))
    return out


class Model:
    """Parameter container plus forward pass. Confine one instance to one
    execution context while gradients are being recorded."""

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = params

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, cfg, seed=0):
        rng = np.random.default_rng(seed)
        p = {}

        def norm(name, *shape):
            p[name] = Tensor(rng.normal(0.0, INIT_STD, shape), requires_grad=True,
                             name=name)

        def zeros(name, *shape):
            p[name] = Tensor(np.zeros(shape), requires_grad=True, name=name)

        def ones(name, *shape):
            p[name] = Tensor(np.ones(shape), requires_grad=True, name=name)

        d, e = cfg.hidden, cfg.embed_factor
        norm("embed.tok", cfg.vocab, e)
        norm("embed.proj.w", e, d)
        zeros("embed.proj.b", d)
        norm("embed.pos", cfg.max_len, d)
        ones("embed.ln.g", d)
        zeros("embed.ln.b", d)
        for li in range(cfg.layers):
            for proj in ("q", "k", "v", "o"):
                norm(f"L{li}.attn.{proj}.w", d, d)
                zeros(f"L{li}.attn.{proj}.b", d)
            ones(f"L{li}.ln1.g", d)
            zeros(f"L{li}.ln1.b", d)
            ones(f"L{li}.ln2.g", d)
            zeros(f"L{li}.ln2.b", d)
            spec = cfg.genotype.layers[li]
            widths, err = gt.node_widths(spec, d, cfg.d_ref)
            if err is not None:
                raise ContractError(f"layer {li}: {err}")
            for name, i, _s in ffn_weight_names(li, spec):
                in_w = widths[spec.nodes[i].pred[0]]
                out_w = widths[i]
                norm(f"{name}.w", in_w, out_w)
                zeros(f"{name}.b", out_w)
        return cls(cfg, p)

    def add_task_head(self, task_id, n_out, seed=0):
        rng = np.random.default_rng(seed)
        self.params[f"head.{task_id}.w"] = Tensor(
            rng.normal(0.0, INIT_STD, (self.cfg.hidden, n_out)),
            requires_grad=True, name=f"head.{task_id}.w")
        self.params[f"head.{task_id}.b"] = Tensor(
            np.zeros(n_out), requires_grad=True, name=f"head.{task_id}.b")

    def head_names(self):
        return sorted({k.rsplit(".", 1)[0] for k in self.params if k.startswith("head.")})

    def trainable(self, include_heads=True):
        items = sorted(self.params)
        if not include_heads:
            items = [k for k in items if not k.startswith("head.")]
        return [self.params[k] for k in items]

    def named_values(self):
        return {k: t.values for k, t in self.params.items()}

    def load_values(self, named, strict=True):
        for k, arr in named.items():
            if k in self.params:
                self.params[k].values = np.array(arr, dtype=np.float64)
            elif strict:
                raise InputError(f"checkpoint key {k} not in model")

    # -- forward ------------------------------------------------------------

    def _ffn_weights(self, layer, spec):
        per_stack = []
        for s in range(spec.stack):
            nodes = {}
            for i, node in enumerate(spec.nodes):
                if node.kind == "linear":
                    nodes[i] = (self.params[f"L{layer}.ffn.s{s}.n{i}.w"],
                                self.params[f"L{layer}.ffn.s{s}.n{i}.b"])
            per_stack.append(nodes)
        return per_stack

    def forward(self, ids, mask=None, head=None):
        """Run the encoder; `head` selects a task head for logits.

        ids: (B, Ls) or (Ls,) integer token ids. mask: optional (B, Ls)
        of 0/1; masked-out positions neither attend nor get attended to.
        """
        cfg = self.cfg
        ids = np.asarray(ids)
        if ids.ndim == 1:
            ids = ids[None, :]
        if ids.ndim != 2:
            raise InputError(f"ids must be 1-d or 2-d, got shape {ids.shape}")
        B, Ls = ids.shape
        if Ls > cfg.max_len:
            raise InputError(f"sequence length {Ls} exceeds max_len {cfg.max_len}")
        if ids.min() < 0 or ids.max() >= cfg.vocab:
            raise InputError(f"token ids outside vocab of {cfg.vocab}")

        p = self.params
        d, h = cfg.hidden, cfg.heads
        dh = d // h

        tok = tensor.embedding(p["embed.tok"], ids)
        proj = tensor.matmul(tok, p["embed.proj.w"]) + p["embed.proj.b"]
        pos = tensor.embedding(p["embed.pos"], np.arange(Ls))
        x = tensor.layer_norm(proj + pos, p["embed.ln.g"], p["embed.ln.b"])
        embeddings = x

        add_mask = None
        if mask is not None:
            mask = np.asarray(mask, dtype=np.float64).reshape(B, Ls)
            add_mask = (1.0 - mask)[:, None, None, :] * -1e9

        def split_heads(t):
            t = tensor.reshape(t, (B, Ls, h, dh))
            return tensor.transpose(t, (0, 2, 1, 3))

        attentions, hidden = [], []
        for li in range(cfg.layers):
            q = split_heads(tensor.matmul(x, p[f"L{li}.attn.q.w"]) + p[f"L{li}.attn.q.b"])
            k = split_heads(tensor.matmul(x, p[f"L{li}.attn.k.w"]) + p[f"L{li}.attn.k.b"])
            v = split_heads(tensor.matmul(x, p[f"L{li}.attn.v.w"]) + p[f"L{li}.attn.v.b"])

            scores = tensor.matmul(q, tensor.transpose(k, (0, 1, 3, 2))) / math.sqrt(dh)
            if add_mask is not None:
                scores = tensor.add_const(scores, add_mask)
            attn = tensor.softmax(scores, axis=-1)
            attentions.append(attn)

            ctx = tensor.matmul(attn, v)
            ctx = tensor.reshape(tensor.transpose(ctx, (0, 2, 1, 3)), (B, Ls, d))
            ctx = tensor.matmul(ctx, p[f"L{li}.attn.o.w"]) + p[f"L{li}.attn.o.b"]
            x = tensor.layer_norm(x + ctx, p[f"L{li}.ln1.g"], p[f"L{li}.ln1.b"])

            spec = cfg.genotype.layers[li]
            ffn = gt.evaluate_dag(spec, x, self._ffn_weights(li, spec))
            x = tensor.layer_norm(x + ffn, p[f"L{li}.ln2.g"], p[f"L{li}.ln2.b"])
            hidden.append(x)

        logits = None
        if head is not None:
            pooled = tensor.tmean(x, axis=1)
            logits = tensor.matmul(pooled, p[f"head.{head}.w"]) + p[f"head.{head}.b"]

        return ForwardArtifacts(embeddings, attentions, hidden, logits)

    def token_logits(self, artifacts, head):
        """Per-position logits from the last hidden state (mask-prediction head)."""
        x = artifacts.hidden[-1]
        return tensor.matmul(x, self.params[f"head.{head}.w"]) + self.params[f"head.{head}.b"]


def config_meta(cfg):
    return {
        "layers": cfg.layers, "hidden": cfg.hidden, "heads": cfg.heads,
        "max_len": cfg.max_len, "vocab": cfg.vocab,
        "embed_factor": cfg.embed_factor, "d_ref": cfg.d_ref,
        "max_nodes": cfg.max_nodes, "genotype": cfg.genotype.to_dict(),
    }


def config_from_meta(meta):
    import json as _json

    from . import genotype as _gt
    g = _gt.deserialize(_json.dumps(meta["genotype"]))
    return ModelConfig(
        layers=meta["layers"], hidden=meta["hidden"], heads=meta["heads"],
        max_len=meta["max_len"], vocab=meta["vocab"],
        embed_factor=meta["embed_factor"], d_ref=meta["d_ref"],
        max_nodes=meta["max_nodes"], genotype=g)


def save_model(path, model, extra_meta=None):
    from . import checkpoint
    meta = {"model": config_meta(model.cfg)}
    heads = {}
    for k in model.params:
        if k.startswith("head.") and k.endswith(".w"):
            task = k[len("head."):-len(".w")]
            heads[task] = model.params[k].shape[1]
    meta["heads"] = heads
    if extra_meta:
        meta.update(extra_meta)
    checkpoint.save_archive(path, model.named_values(), meta=meta)


def load_model(path):
    from . import checkpoint
    named, meta = checkpoint.load_archive(path)
    model = Model.build(config_from_meta(meta["model"]), seed=0)
    for task, n_out in meta.get("heads", {}).items():
        model.add_task_head(task, n_out)
    model.load_values(named)
    return model, meta


def build_supernet(cfg, seed=0):
    """Maximal donor model: every layer at stack 4, ratio 1, full-width banks."""
    g = gt.baseline_genotype(cfg.layers, stack=max(gt.STACK_CHOICES),
                             ratio=max(gt.RATIO_CHOICES))
    return Model.build(cfg.with_genotype(g), seed=seed)


def bank_nodes(spec):
    """Indices of the expand and contract bank linears in a donor layer dag."""
    expand = next(i for i, n in enumerate(spec.nodes)
                  if n.kind == "linear" and n.expand)
    contract = next(i for i, n in enumerate(spec.nodes)
                    if n.kind == "linear" and not n.expand)
    return expand, contract
