"""Analytic parameter and Mult-Adds accounting.

Per layer: MHA Mult-Adds = 4Ld^2 + L^2 d, MHA params = 4d^2 + 4d. FFN cost
is counted node by node over the genotype dag: a linear node contributes
L * in_w * out_w Mult-Adds and in_w * out_w + out_w params, an elementwise
primitive contributes L * width Mult-Adds and no params, all multiplied by
the stack number. For the standard two-linear FFN that reduces to
2 * L * d * d_i Mult-Adds and 2 * d * d_i + d_i + d params.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import genotype as gt


@dataclass
class CostReport:
    params_mha: int = 0
    params_ffn: int = 0
    params_embedding: int = 0
    params_other: int = 0          # layer norms and task heads
    mult_adds_mha: int = 0
    mult_adds_ffn: int = 0
    mult_adds_other: int = 0       # embedding projection and primitives outside FFN

    @property
    def params_total(self):
        return (self.params_mha + self.params_ffn
                + self.params_embedding + self.params_other)

    @property
    def mult_adds_total(self):
        return self.mult_adds_mha + self.mult_adds_ffn + self.mult_adds_other

    def to_dict(self):
        return {
            "params_mha": self.params_mha,
            "params_ffn": self.params_ffn,
            "params_embedding": self.params_embedding,
            "params_other": self.params_other,
            "params_total": self.params_total,
            "mult_adds_mha": self.mult_adds_mha,
            "mult_adds_ffn": self.mult_adds_ffn,
            "mult_adds_other": self.mult_adds_other,
            "mult_adds_total": self.mult_adds_total,
        }


def mha_layer_params(d):
    return 4 * d * d + 4 * d


def mha_layer_mult_adds(d, L):
    return 4 * L * d * d + L * L * d


def ffn_layer_params(spec, d, d_ref):
    widths, err = gt.node_widths(spec, d, d_ref)
    if err is not None:
        raise ValueError(err)
    per_stack = 0
    for i, node in enumerate(spec.nodes):
        if node.kind == "linear":
            in_w = widths[node.pred[0]]
            per_stack += in_w * widths[i] + widths[i]
    return spec.stack * per_stack


def ffn_layer_mult_adds(spec, d, d_ref, L):
    widths, err = gt.node_widths(spec, d, d_ref)
    if err is not None:
        raise ValueError(err)
    per_stack = 0
    for i, node in enumerate(spec.nodes):
        if node.kind == "linear":
            per_stack += L * widths[node.pred[0]] * widths[i]
        elif node.kind == "math":
            per_stack += L * widths[i]
    return spec.stack * per_stack


def count_params(cfg):
    d, e = cfg.hidden, cfg.embed_factor
    r = CostReport()
    r.params_embedding = cfg.vocab * e + e * d + d + cfg.max_len * d
    r.params_other = 2 * d  # embedding layer norm
    for li in range(cfg.layers):
        r.params_mha += mha_layer_params(d)
        r.params_other += 4 * d  # two layer norms
        r.params_ffn += ffn_layer_params(cfg.genotype.layers[li], d, cfg.d_ref)
    return r


def count_mult_adds(cfg, L=None):
    d, e = cfg.hidden, cfg.embed_factor
    L = cfg.max_len if L is None else L
    r = CostReport()
    r.mult_adds_other = L * cfg.vocab * 0 + L * e * d  # factorized projection
    for li in range(cfg.layers):
        r.mult_adds_mha += mha_layer_mult_adds(d, L)
        r.mult_adds_ffn += ffn_layer_mult_adds(cfg.genotype.layers[li], d, cfg.d_ref, L)
    return r


def genotype_cost(cfg, g, L=None):
    """Combined report for a candidate genotype under `cfg`'s dimensions."""
    cfg = cfg.with_genotype(g)
    p = count_params(cfg)
    m = count_mult_adds(cfg, L)
    p.mult_adds_mha = m.mult_adds_mha
    p.mult_adds_ffn = m.mult_adds_ffn
    p.mult_adds_other = m.mult_adds_other
    return p
