"""Attention / hidden / embedding / prediction distillation losses.

Per student layer m with matched teacher layer n:
    attn_m = (1/h) * sum_i MSE(A_i_m_S, A_i_n_T)
    hidn_m = MSE(H_m_S @ W_h, H_n_T)
embedding and prediction terms:
    embd = MSE(E_S @ W_e, E_T)
    pred = soft cross-entropy between logits at temperature t
and the combined objective is
    sum_m (attn_m + hidn_m) + embd + gamma * pred.

MSE reduces by mean over elements so losses stay comparable across widths.
With gamma == 0 the prediction term is skipped outright, which is the
pre-training mode; gradients flow into the student and into W_h / W_e.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import ContractError
from .tensor import Tensor


def uniform_mapping(student_layers, teacher_layers):
    """n = m * (teacher_M / student_M), 1-based; strictly increasing."""
    if student_layers > teacher_layers:
        raise ContractError("student deeper than teacher")
    step = teacher_layers / student_layers
    return tuple((m, int(round(m * step))) for m in range(1, student_layers + 1))


@dataclass
class KdConfig:
    gamma: float = 0.0
    temperature: float = 1.0
    w_h: Tensor | None = None      # (d_student, d_teacher)
    w_e: Tensor | None = None      # (embed_student, embed_teacher)
    mapping: tuple | None = None   # ((m, n), ...) 1-based
    # soft CE is degenerate on width-1 regression heads; those use MSE
    pred_kind: str = "ce"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ContractError("temperature must be positive")
        if self.gamma < 0:
            raise ContractError("gamma must be nonnegative")

    def trainable(self):
        return [t for t in (self.w_h, self.w_e) if t is not None and t.requires_grad]


def init_alignment(d_student, d_teacher, rng=None, scale=1.0):
    """Identity when square, otherwise a scaled random map with orthonormal
    rows (or columns, whichever direction is short)."""
    if d_student == d_teacher:
        return Tensor(np.eye(d_student), requires_grad=True, name="align")
    rng = rng or np.random.default_rng(0)
    a = rng.normal(0.0, 1.0, (d_student, d_teacher))
    if d_student <= d_teacher:
        q, _ = np.linalg.qr(a.T)   # (d_teacher, d_student), orthonormal columns
        w = q.T
    else:
        q, _ = np.linalg.qr(a)     # (d_student, d_teacher), orthonormal columns
        w = q
    return Tensor(scale * w, requires_grad=True, name="align")


def make_kd_config(student_cfg, teacher_cfg, gamma=0.0, temperature=1.0, seed=0):
    rng = np.random.default_rng(seed)
    return KdConfig(
        gamma=gamma, temperature=temperature,
        w_h=init_alignment(student_cfg.hidden, teacher_cfg.hidden, rng),
        w_e=init_alignment(student_cfg.hidden, teacher_cfg.hidden, rng),
        mapping=uniform_mapping(student_cfg.layers, teacher_cfg.layers))


def mse(a, b):
    diff = tensor.sub(a, b)
    return tensor.tmean(tensor.mul(diff, diff))


def attn_loss(student_attn, teacher_attn, mapping):
    """Per-layer head-averaged attention-map MSE; returns (per_layer, total)."""
    per_layer = []
    for m, n in mapping:
        a_s = student_attn[m - 1]
        a_t = teacher_attn[n - 1]
        if a_s.shape[1] != a_t.shape[1]:
            raise ContractError(
                f"head counts differ: student {a_s.shape[1]}, teacher {a_t.shape[1]}")
        if a_s.shape != a_t.shape:
            raise ContractError(
                f"attention shapes differ: {a_s.shape} vs {a_t.shape}")
        # mean over (batch, heads, L, L) == (1/h) sum_i MSE(head i)
        per_layer.append(mse(a_s, a_t))
    total = per_layer[0]
    for l in per_layer[1:]:
        total = total + l
    return per_layer, total


def hidden_loss(student_hidden, teacher_hidden, w_h, mapping):
    per_layer = []
    for m, n in mapping:
        h_s = student_hidden[m - 1]
        h_t = teacher_hidden[n - 1]
        if h_s.shape[-1] != w_h.shape[0] or w_h.shape[1] != h_t.shape[-1]:
            raise ContractError(
                f"alignment {w_h.shape} incompatible with hidden "
                f"{h_s.shape} -> {h_t.shape}")
        per_layer.append(mse(tensor.matmul(h_s, w_h), h_t))
    total = per_layer[0]
    for l in per_layer[1:]:
        total = total + l
    return per_layer, total


def embed_loss(student_embed, teacher_embed, w_e):
    if student_embed.shape[-1] != w_e.shape[0] or w_e.shape[1] != teacher_embed.shape[-1]:
        raise ContractError(
            f"alignment {w_e.shape} incompatible with embeddings "
            f"{student_embed.shape} -> {teacher_embed.shape}")
    return mse(tensor.matmul(student_embed, w_e), teacher_embed)


def pred_loss(student_logits, teacher_logits, temperature=1.0):
    """Soft cross-entropy, mean over the batch; teacher side carries no grad."""
    if student_logits.shape != teacher_logits.shape:
        raise ContractError(
            f"logit widths differ: {student_logits.shape} vs {teacher_logits.shape}")
    t = float(temperature)
    log_p_s = tensor.log_softmax(student_logits / t, axis=-1)
    p_t = tensor.softmax(teacher_logits.detach() / t, axis=-1)
    ce = tensor.tsum(tensor.mul(p_t, log_p_s), axis=-1)
    return tensor.scale(tensor.tmean(ce), -1.0)


@dataclass
class LossBreakdown:
    attn: list = field(default_factory=list)
    hidn: list = field(default_factory=list)
    embd: Tensor | None = None
    pred: Tensor | None = None
    total: Tensor | None = None

    def scalars(self):
        out = {
            "l_attn": float(sum(t.item() for t in self.attn)),
            "l_hidn": float(sum(t.item() for t in self.hidn)),
            "l_embd": self.embd.item() if self.embd is not None else 0.0,
            "l_pred": self.pred.item() if self.pred is not None else 0.0,
        }
        out["total"] = self.total.item()
        return out


def total_loss(student, teacher, cfg):
    """Combine the four losses per the configured gamma and mapping."""
    mapping = cfg.mapping or uniform_mapping(len(student.hidden), len(teacher.hidden))
    out = LossBreakdown()
    out.attn, attn_total = attn_loss(student.attentions, teacher.attentions, mapping)
    out.hidn, hidn_total = hidden_loss(student.hidden, teacher.hidden, cfg.w_h, mapping)
    out.embd = embed_loss(student.embeddings, teacher.embeddings, cfg.w_e)
    base = attn_total + hidn_total + out.embd
    if cfg.gamma == 0.0:
        out.total = base
    else:
        if student.logits is None or teacher.logits is None:
            raise ContractError("gamma > 0 needs logits in both bundles")
        if cfg.pred_kind == "mse":
            out.pred = mse(student.logits, teacher.logits.detach())
        else:
            out.pred = pred_loss(student.logits, teacher.logits, cfg.temperature)
        out.total = base + tensor.scale(out.pred, cfg.gamma)
    return out
