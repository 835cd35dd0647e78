"""Transformer model: forward correctness, artifacts, supernet, cost model."""

import math

import numpy as np
import pytest

from ffnas import cost as costmod
from ffnas import genotype as gt
from ffnas import warmup
from ffnas.errors import InputError
from ffnas.kernels import numpy_ops
from ffnas.model import Model, ModelConfig, build_supernet, student_config


def small_cfg(**over):
    base = dict(vocab=32, max_len=8, layers=2, hidden=8, heads=2,
                embed_factor=4, d_ref=8)
    base.update(over)
    return student_config(**base)


def test_attention_rows_sum_to_one():
    m = Model.build(small_cfg(), seed=0)
    ids = np.random.default_rng(0).integers(2, 32, size=(3, 8))
    arts = m.forward(ids)
    for a in arts.attentions:
        np.testing.assert_allclose(a.values.sum(axis=-1), 1.0, atol=1e-9)


def test_zero_head_gives_uniform_logits():
    m = Model.build(small_cfg(), seed=0)
    m.add_task_head("t", 4)
    m.params["head.t.w"].values[:] = 0.0
    m.params["head.t.b"].values[:] = 0.0
    ids = np.random.default_rng(1).integers(2, 32, size=(2, 8))
    arts = m.forward(ids, head="t")
    probs = numpy_ops.softmax_fwd(arts.logits.values)
    np.testing.assert_allclose(probs, 0.25, atol=1e-12)


def test_artifact_completeness():
    cfg = small_cfg(layers=3)
    m = Model.build(cfg, seed=0)
    m.add_task_head("t", 2)
    ids = np.random.default_rng(2).integers(2, 32, size=(2, 6))
    arts = m.forward(ids, head="t")
    assert len(arts.attentions) == 3 and len(arts.hidden) == 3
    assert arts.embeddings.shape == (2, 6, cfg.hidden)
    for a in arts.attentions:
        assert a.shape == (2, cfg.heads, 6, 6)
    for h in arts.hidden:
        assert h.shape == (2, 6, cfg.hidden)
    assert arts.logits.shape == (2, 2)


def test_out_of_vocab_rejected():
    m = Model.build(small_cfg(), seed=0)
    with pytest.raises(InputError):
        m.forward(np.array([[1, 2, 99]]))
    with pytest.raises(InputError):
        m.forward(np.zeros((1, 100), dtype=int))


def test_forward_deterministic():
    m = Model.build(small_cfg(), seed=0)
    ids = np.random.default_rng(3).integers(2, 32, size=(2, 8))
    a = m.forward(ids)
    b = m.forward(ids)
    for x, y in zip(a.hidden, b.hidden):
        assert np.array_equal(x.values, y.values)


def test_single_layer_hand_oracle():
    """1 layer, 1 head, d=4: replay the whole forward in plain numpy."""
    cfg = ModelConfig(layers=1, hidden=4, heads=1, max_len=4, vocab=8,
                      embed_factor=2, d_ref=4,
                      genotype=gt.baseline_genotype(1, op="ReLU"))
    m = Model.build(cfg, seed=5)
    ids = np.array([[2, 5, 3]])
    arts = m.forward(ids)

    p = {k: t.values for k, t in m.params.items()}

    def ln(x, g, b, eps=1e-12):
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        return (x - mu) / np.sqrt(var + eps) * g + b

    tok = p["embed.tok"][ids[0]]                       # (3, 2)
    proj = tok @ p["embed.proj.w"] + p["embed.proj.b"]  # (3, 4)
    x = ln(proj + p["embed.pos"][:3], p["embed.ln.g"], p["embed.ln.b"])
    np.testing.assert_allclose(arts.embeddings.values[0], x, atol=1e-10)

    q = x @ p["L0.attn.q.w"] + p["L0.attn.q.b"]
    k = x @ p["L0.attn.k.w"] + p["L0.attn.k.b"]
    v = x @ p["L0.attn.v.w"] + p["L0.attn.v.b"]
    scores = q @ k.T / math.sqrt(4)
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    attn = e / e.sum(axis=-1, keepdims=True)
    np.testing.assert_allclose(arts.attentions[0].values[0, 0], attn, atol=1e-10)

    ctx = attn @ v
    ctx = ctx @ p["L0.attn.o.w"] + p["L0.attn.o.b"]
    x = ln(x + ctx, p["L0.ln1.g"], p["L0.ln1.b"])

    hidden = np.maximum(x @ p["L0.ffn.s0.n1.w"] + p["L0.ffn.s0.n1.b"], 0.0)
    ffn = hidden @ p["L0.ffn.s0.n3.w"] + p["L0.ffn.s0.n3.b"]
    x = ln(x + ffn, p["L0.ln2.g"], p["L0.ln2.b"])
    np.testing.assert_allclose(arts.hidden[0].values[0], x, atol=1e-10, rtol=0)


def test_mask_blocks_attention():
    m = Model.build(small_cfg(), seed=0)
    ids = np.random.default_rng(4).integers(2, 32, size=(1, 8))
    mask = np.ones((1, 8))
    mask[0, 5:] = 0
    arts = m.forward(ids, mask=mask)
    attended = arts.attentions[0].values[0, :, :, 5:]
    assert attended.max() < 1e-6


class TestSupernet:
    def test_params_geq_any_sampled_candidate(self):
        cfg = small_cfg(d_ref=8)
        sup = build_supernet(cfg)
        sup_params = costmod.count_params(sup.cfg).params_total
        rng = np.random.default_rng(5)
        space = gt.SearchSpaceDef(layers=cfg.layers)
        for _ in range(100):
            g = gt.sample_uniform(space, rng)
            cand = costmod.count_params(cfg.with_genotype(g)).params_total
            assert sup_params >= cand

    def test_paper_scale_supernet_smoke(self):
        cfg = ModelConfig(layers=6, hidden=540, heads=4, max_len=16, vocab=128,
                          embed_factor=128, d_ref=540)
        sup = build_supernet(cfg, seed=0)
        ids = np.random.default_rng(6).integers(2, 128, size=(2, 8))
        arts = sup.forward(ids)
        assert len(arts.hidden) == 6
        assert np.isfinite(arts.hidden[-1].values).all()

    def test_supernet_genotype_valid_and_maximal(self):
        cfg = small_cfg()
        sup = build_supernet(cfg)
        assert gt.validate(sup.cfg.genotype, sup.cfg) == []
        for spec in sup.cfg.genotype.layers:
            assert spec.stack == 4 and spec.ratio == 1


class TestCost:
    def test_paper_arithmetic(self):
        cfg = ModelConfig(layers=1, hidden=768, heads=12, max_len=128,
                          vocab=100, embed_factor=128, d_ref=3072,
                          genotype=gt.baseline_genotype(1))
        assert costmod.mha_layer_params(768) == 2_362_368
        assert costmod.ffn_layer_params(cfg.genotype.layers[0], 768, 3072) \
            == 4_722_432
        assert costmod.mha_layer_mult_adds(768, 128) == 314_572_800

    def test_ffn_mha_weight_ratio_at_4d(self):
        d = 64
        spec = gt.baseline_layer()
        ffn_w = costmod.ffn_layer_params(spec, d, 4 * d) - (4 * d + d)  # drop biases
        mha_w = costmod.mha_layer_params(d) - 4 * d
        assert ffn_w / mha_w == 2.0

    def test_standard_ffn_mult_adds_is_2Lddi(self):
        d, di, L = 32, 128, 16
        spec = gt.baseline_layer()
        ma = costmod.ffn_layer_mult_adds(spec, d, di, L)
        # two matmuls plus one elementwise activation pass
        assert ma == 2 * L * d * di + L * di

    def test_monotone_in_stack_and_ratio(self):
        from fractions import Fraction
        cfg = small_cfg(d_ref=16)
        # pairwise checks along each axis
        for ratio in (Fraction(1, 4), Fraction(1, 2)):
            for s in (1, 2, 3):
                g1 = gt.baseline_genotype(cfg.layers, stack=s, ratio=ratio)
                g2 = gt.baseline_genotype(cfg.layers, stack=s + 1, ratio=ratio)
                c1 = costmod.genotype_cost(cfg, g1, L=8)
                c2 = costmod.genotype_cost(cfg, g2, L=8)
                assert c2.params_total >= c1.params_total
                assert c2.mult_adds_total >= c1.mult_adds_total
        for s in (1, 4):
            prev = None
            for ratio in (Fraction(1, 4), Fraction(1, 3), Fraction(1, 2),
                          Fraction(1)):
                g = gt.baseline_genotype(cfg.layers, stack=s, ratio=ratio)
                c = costmod.genotype_cost(cfg, g, L=8)
                if prev is not None:
                    assert c.params_total >= prev.params_total
                    assert c.mult_adds_total >= prev.mult_adds_total
                prev = c

    def test_totals_are_sums_of_parts(self):
        cfg = small_cfg()
        r = costmod.genotype_cost(cfg, cfg.genotype, L=8)
        assert r.params_total == (r.params_mha + r.params_ffn
                                  + r.params_embedding + r.params_other)
        assert r.mult_adds_total == (r.mult_adds_mha + r.mult_adds_ffn
                                     + r.mult_adds_other)


def test_weight_slicing_forward_equivalence(tiny):
    """Inherited candidate's first expand-linear output equals the leading
    channels of the supernet's expand map on the same input."""
    handle = tiny.frozen
    cfg = handle.model.cfg
    from fractions import Fraction
    g = gt.baseline_genotype(cfg.layers, stack=1, ratio=Fraction(1, 2))
    student = warmup.inherit_weights(handle, g)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, cfg.hidden))
    w_mid = gt.intermediate_width(Fraction(1, 2), cfg.d_ref)

    sup_w = handle.model.params["L0.ffn.s0.n1.w"].values
    sup_b = handle.model.params["L0.ffn.s0.n1.b"].values
    stu_w = student.params["L0.ffn.s0.n1.w"].values
    stu_b = student.params["L0.ffn.s0.n1.b"].values
    full = x @ sup_w + sup_b
    sliced = x @ stu_w + stu_b
    assert stu_w.shape == (cfg.hidden, w_mid)
    np.testing.assert_allclose(sliced, full[:, :w_mid], atol=1e-12, rtol=0)
