"""Distillation losses: the four terms, their identities, and gradients."""

import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import finite_difference
from ffnas import tensor as T
from ffnas.distill import (KdConfig, attn_loss, embed_loss, hidden_loss,
                           pred_loss, total_loss, uniform_mapping)
from ffnas.errors import ContractError
from ffnas.model import ForwardArtifacts, Model, student_config
from ffnas.tensor import Tensor


def rnd(*shape, seed=0):
    return np.random.default_rng(seed).normal(size=shape)


def make_bundle(layers=2, heads=2, L=4, d=6, logits=None, seed=0):
    rng = np.random.default_rng(seed)
    attn_raw = [rng.normal(size=(1, heads, L, L)) for _ in range(layers)]
    attn = [Tensor(np.exp(a) / np.exp(a).sum(-1, keepdims=True)) for a in attn_raw]
    hidden = [Tensor(rng.normal(size=(1, L, d))) for _ in range(layers)]
    emb = Tensor(rng.normal(size=(1, L, d)))
    z = Tensor(logits) if logits is not None else None
    return ForwardArtifacts(emb, attn, hidden, z)


def identity_kd(d, layers_s=2, layers_t=2, gamma=0.0):
    return KdConfig(gamma=gamma, temperature=1.0,
                    w_h=Tensor(np.eye(d), requires_grad=True),
                    w_e=Tensor(np.eye(d), requires_grad=True),
                    mapping=uniform_mapping(layers_s, layers_t))


class TestMapping:
    def test_uniform_divides_evenly(self):
        assert uniform_mapping(2, 4) == ((1, 2), (2, 4))
        assert uniform_mapping(3, 6) == ((1, 2), (2, 4), (3, 6))
        assert uniform_mapping(4, 4) == ((1, 1), (2, 2), (3, 3), (4, 4))

    def test_strictly_increasing_and_covers_top(self):
        for s, t in [(2, 4), (3, 6), (2, 6), (4, 12), (3, 4)]:
            mapping = uniform_mapping(s, t)
            ns = [n for _m, n in mapping]
            assert all(b > a for a, b in zip(ns, ns[1:]))
            if t % s == 0:
                assert ns[-1] == t

    def test_student_deeper_rejected(self):
        with pytest.raises(ContractError):
            uniform_mapping(6, 4)


class TestAttnLoss:
    def test_identical_maps_zero(self):
        b = make_bundle(seed=1)
        per, total = attn_loss(b.attentions, b.attentions,
                               uniform_mapping(2, 2))
        assert total.item() == 0.0 and all(l.item() == 0.0 for l in per)

    def test_constant_difference(self):
        a_s = [Tensor(np.full((1, 1, 2, 2), 0.5))]
        a_t = [Tensor(np.zeros((1, 1, 2, 2)))]
        _per, total = attn_loss(a_s, a_t, ((1, 1),))
        assert abs(total.item() - 0.25) < 1e-15

    def test_flat_loop_oracle(self):
        s = make_bundle(seed=2)
        t = make_bundle(seed=3)
        mapping = uniform_mapping(2, 2)
        per, total = attn_loss(s.attentions, t.attentions, mapping)
        ref_total = 0.0
        for m, n in mapping:
            a = s.attentions[m - 1].values
            b = t.attentions[n - 1].values
            acc = 0.0
            cnt = 0
            for idx in np.ndindex(a.shape):
                acc += (a[idx] - b[idx]) ** 2
                cnt += 1
            ref_total += acc / cnt
        assert abs(total.item() - ref_total) < 1e-12

    def test_head_mismatch_rejected(self):
        s = make_bundle(heads=2, seed=4)
        t = make_bundle(heads=4, seed=5)
        with pytest.raises(ContractError):
            attn_loss(s.attentions, t.attentions, uniform_mapping(2, 2))

    def test_head_average_semantics(self):
        # mean over the full (B, h, L, L) block == (1/h) sum of per-head MSEs
        s = make_bundle(heads=3, seed=6)
        t = make_bundle(heads=3, seed=7)
        _per, total = attn_loss(s.attentions[:1], t.attentions[:1], ((1, 1),))
        a, b = s.attentions[0].values, t.attentions[0].values
        per_head = [((a[:, i] - b[:, i]) ** 2).mean() for i in range(3)]
        assert abs(total.item() - np.mean(per_head)) < 1e-12


class TestHiddenEmbedLoss:
    def test_identity_alignment_zero(self):
        b = make_bundle(seed=8)
        kd = identity_kd(6)
        _per, total = hidden_loss(b.hidden, b.hidden, kd.w_h,
                                  uniform_mapping(2, 2))
        assert total.item() == 0.0
        assert embed_loss(b.embeddings, b.embeddings, kd.w_e).item() == 0.0

    def test_exact_alignment_case(self):
        h_s = [Tensor(np.array([[[1.0]]]))]
        h_t = [Tensor(np.array([[[2.0]]]))]
        w = Tensor(np.array([[2.0]]))
        _per, total = hidden_loss(h_s, h_t, w, ((1, 1),))
        assert total.item() == 0.0

    def test_flat_loop_oracle(self):
        s = make_bundle(seed=9)
        t = make_bundle(seed=10, d=8)
        w_h = Tensor(rnd(6, 8, seed=11))
        mapping = uniform_mapping(2, 2)
        _per, total = hidden_loss(s.hidden, t.hidden, w_h, mapping)
        ref = 0.0
        for m, n in mapping:
            proj = s.hidden[m - 1].values @ w_h.values
            diff = proj - t.hidden[n - 1].values
            acc = 0.0
            cnt = 0
            for idx in np.ndindex(diff.shape):
                acc += diff[idx] ** 2
                cnt += 1
            ref += acc / cnt
        assert abs(total.item() - ref) < 1e-12

    def test_extent_mismatch_rejected(self):
        s = make_bundle(seed=12)
        t = make_bundle(seed=13, d=8)
        with pytest.raises(ContractError):
            hidden_loss(s.hidden, t.hidden, Tensor(np.eye(6)),
                        uniform_mapping(2, 2))


class TestPredLoss:
    def test_equal_logits_gives_entropy(self):
        z = np.array([[1.0, 2.0, 0.5]])
        loss = pred_loss(Tensor(z), Tensor(z), 1.0).item()
        p = np.exp(z) / np.exp(z).sum()
        entropy = -(p * np.log(p)).sum()
        assert abs(loss - entropy) < 1e-12
        assert loss > 0.0

    def test_one_hot_teacher_limit(self):
        z_t = np.array([[50.0, 0.0]])
        z_s = np.array([[1.0, 3.0]])
        loss = pred_loss(Tensor(z_s), Tensor(z_t), 1.0).item()
        lp = z_s - np.log(np.exp(z_s).sum())
        assert abs(loss - (-lp[0, 0])) < 1e-6  # CE against the argmax class

    def test_closed_form_ln2(self):
        z_s = Tensor(np.array([[0.0, 0.0]]))
        z_t = Tensor(np.array([[math.log(3.0), 0.0]]))
        loss = pred_loss(z_s, z_t, 1.0).item()
        assert abs(loss - math.log(2.0)) < 1e-10

    def test_temperature_scales_softness(self):
        z_s = Tensor(rnd(2, 4, seed=14))
        z_t = Tensor(rnd(2, 4, seed=15))
        l1 = pred_loss(z_s, z_t, 1.0).item()
        l_hot = pred_loss(z_s, z_t, 100.0).item()
        assert l1 != l_hot

    def test_width_mismatch_rejected(self):
        with pytest.raises(ContractError):
            pred_loss(Tensor(rnd(1, 3)), Tensor(rnd(1, 4)), 1.0)


class TestTotalLoss:
    def test_identical_bundles_gamma0_zero(self):
        b = make_bundle(seed=16)
        kd = identity_kd(6)
        out = total_loss(b, b, kd)
        assert out.total.item() == 0.0
        assert out.pred is None

    def test_additivity_gamma1(self):
        s = make_bundle(seed=17, logits=rnd(1, 3, seed=18))
        t = make_bundle(seed=19, logits=rnd(1, 3, seed=20))
        kd = replace(identity_kd(6), gamma=1.0)
        out = total_loss(s, t, kd)
        parts = (sum(l.item() for l in out.attn)
                 + sum(l.item() for l in out.hidn)
                 + out.embd.item() + out.pred.item())
        assert abs(out.total.item() - parts) < 1e-12

    def test_gamma_linearity_exact(self):
        s = make_bundle(seed=21, logits=rnd(1, 3, seed=22))
        t = make_bundle(seed=23, logits=rnd(1, 3, seed=24))
        kd0 = identity_kd(6)
        base = total_loss(s, t, kd0).total.item()
        pred = pred_loss(s.logits, t.logits, 1.0).item()
        for gamma in (0.25, 1.0, 3.0):
            tot = total_loss(s, t, replace(kd0, gamma=gamma)).total.item()
            assert tot == base + gamma * pred  # bitwise: total is base + g*pred

    def test_nonnegativity(self):
        for seed in range(5):
            s = make_bundle(seed=100 + seed)
            t = make_bundle(seed=200 + seed)
            kd = identity_kd(6)
            assert total_loss(s, t, kd).total.item() >= 0.0

    def test_gamma_without_logits_rejected(self):
        s = make_bundle(seed=25)
        t = make_bundle(seed=26)
        with pytest.raises(ContractError):
            total_loss(s, t, replace(identity_kd(6), gamma=1.0))

    def test_scalars_log_record_fields(self):
        s = make_bundle(seed=27, logits=rnd(1, 3, seed=28))
        t = make_bundle(seed=29, logits=rnd(1, 3, seed=30))
        out = total_loss(s, t, replace(identity_kd(6), gamma=1.0))
        rec = out.scalars()
        assert set(rec) == {"l_attn", "l_hidn", "l_embd", "l_pred", "total"}


def test_end_to_end_gradient_through_total_loss():
    """Eq. 4 gradients through a 1-layer student/teacher pair."""
    cfg = student_config(vocab=16, max_len=6, layers=1, hidden=4, heads=2,
                         embed_factor=2, d_ref=4)
    student = Model.build(cfg, seed=31)
    student.add_task_head("t", 2, seed=32)
    teacher = Model.build(cfg, seed=33)
    teacher.add_task_head("t", 2, seed=34)
    ids = np.array([[2, 5, 3]])
    t_arts = teacher.forward(ids, head="t")
    kd = KdConfig(gamma=1.0, temperature=1.0,
                  w_h=Tensor(np.eye(4), requires_grad=True),
                  w_e=Tensor(np.eye(4), requires_grad=True),
                  mapping=uniform_mapping(1, 1))

    probes = [student.params["L0.attn.q.w"], student.params["L0.ffn.s0.n1.w"],
              student.params["embed.tok"], kd.w_h, kd.w_e]

    def loss():
        arts = student.forward(ids, head="t")
        return total_loss(arts, t_arts, kd).total

    err = finite_difference(loss, probes)
    assert err < 1e-4, f"relative error {err}"


def test_alignment_gradients_flow(tiny):
    from ffnas import warmup
    from ffnas.tensor import Tape, backward
    handle = tiny.frozen
    student = warmup.inherit_weights(handle, handle.model.cfg.genotype)
    kd = warmup.make_candidate_kd(handle, gamma=0.0)
    ids = tiny.corpus.sequences[:2]
    t_arts = tiny.teacher.forward(ids)
    with Tape():
        arts = student.forward(ids)
        out = total_loss(arts, t_arts, kd)
        backward(out.total)
    assert kd.w_h.grad is not None and np.abs(kd.w_h.grad).sum() > 0
    assert kd.w_e.grad is not None and np.abs(kd.w_e.grad).sum() > 0
