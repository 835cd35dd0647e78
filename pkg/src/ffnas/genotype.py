"""FFN genotypes: expression dags plus stack number and expansion ratio.

A layer's dag is a list of nodes in execution order. Node 0 is the input
(width d); linear nodes either expand to the intermediate width
round(ratio * d_ref) or contract back to d; math nodes apply one of the ten
searchable primitives. The designated output node must carry width d so the
sublayer composes with the residual stream.

Serialized form (documented in docs/genotype_schema.md):
    {"layers": [{"nodes": [...], "output": k, "stack": s, "ratio": "1/2"}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import primitives, tensor
from .errors import EmptySpaceError, GenotypeParseError, ShapeError

STACK_CHOICES = (1, 2, 3, 4)
RATIO_CHOICES = (Fraction(1), Fraction(1, 2), Fraction(1, 3), Fraction(1, 4))
DEFAULT_MAX_NODES = 8


@dataclass(frozen=True)
class DagNode:
    kind: str                      # input | linear | math
    pred: tuple = ()
    expand: bool | None = None     # linear only
    op: str | None = None          # math only

    def to_dict(self):
        if self.kind == "input":
            return {"kind": "input"}
        if self.kind == "linear":
            return {"kind": "linear", "expand": self.expand, "pred": list(self.pred)}
        return {"kind": "math", "op": self.op, "pred": list(self.pred)}


def input_node():
    return DagNode("input")


def linear_node(pred, expand):
    return DagNode("linear", (int(pred),), expand=bool(expand))


def math_node(op, preds):
    return DagNode("math", tuple(int(p) for p in preds), op=op)


@dataclass(frozen=True)
class LayerFfnSpec:
    nodes: tuple                   # tuple[DagNode, ...]
    output: int
    stack: int
    ratio: Fraction

    def to_dict(self):
        return {
            "nodes": [n.to_dict() for n in self.nodes],
            "output": self.output,
            "stack": self.stack,
            "ratio": str(self.ratio),
        }


@dataclass(frozen=True)
class FfnGenotype:
    layers: tuple                  # tuple[LayerFfnSpec, ...]

    def to_dict(self):
        return {"layers": [l.to_dict() for l in self.layers]}


def intermediate_width(ratio, d_ref):
    """round(ratio * d_ref) with conventional .5-up rounding, floor 1."""
    return max(1, int(np.floor(float(ratio) * d_ref + 0.5)))


def baseline_layer(stack=1, ratio=Fraction(1), op="GeLU"):
    """The standard two-linear FFN: input -> expand -> op -> contract."""
    nodes = (input_node(), linear_node(0, True), math_node(op, (1,)),
             linear_node(2, False))
    return LayerFfnSpec(nodes=nodes, output=3, stack=stack, ratio=ratio)


def baseline_genotype(layers, stack=1, ratio=Fraction(1), op="GeLU"):
    return FfnGenotype(tuple(baseline_layer(stack, ratio, op) for _ in range(layers)))


def double_depth(g):
    """Repeat each layer spec twice (the depth-doubling transform)."""
    doubled = []
    for layer in g.layers:
        doubled.append(layer)
        doubled.append(layer)
    return FfnGenotype(tuple(doubled))


# ---------------------------------------------------------------------------
# validation

def node_widths(spec, d, d_ref):
    """Per-node widths, or (None, violation) when the flow is inconsistent."""
    w_mid = intermediate_width(spec.ratio, d_ref)
    widths = []
    for i, node in enumerate(spec.nodes):
        if node.kind == "input":
            widths.append(d)
        elif node.kind == "linear":
            widths.append(w_mid if node.expand else d)
        else:
            pw = {widths[p] for p in node.pred if p < i}
            if len(pw) != 1:
                return None, f"node {i}: {node.op} mixes predecessor widths {sorted(pw)}"
            widths.append(pw.pop())
    return widths, None


def validate(g, cfg):
    """Spec-level checks; returns a list of violations (empty means ok)."""
    violations = []
    if len(g.layers) != cfg.layers:
        violations.append(
            f"genotype has {len(g.layers)} layers, model has {cfg.layers}")
    for li, spec in enumerate(g.layers):
        tag = f"layer {li}"
        if spec.stack not in STACK_CHOICES:
            violations.append(f"{tag}: stack {spec.stack} outside {STACK_CHOICES}")
        if spec.ratio not in RATIO_CHOICES:
            violations.append(f"{tag}: ratio {spec.ratio} outside allowed set")
        n = len(spec.nodes)
        if n > cfg.max_nodes:
            violations.append(f"{tag}: {n} nodes exceeds budget {cfg.max_nodes}")
        if n == 0 or spec.nodes[0].kind != "input":
            violations.append(f"{tag}: node 0 must be the input node")
            continue
        if sum(1 for nd in spec.nodes if nd.kind == "input") != 1:
            violations.append(f"{tag}: exactly one input node required")
        has_expand = has_contract = False
        structurally_sound = True
        for i, node in enumerate(spec.nodes):
            if any(p >= i or p < 0 for p in node.pred):
                violations.append(f"{tag}: node {i} has non-causal predecessor")
                structurally_sound = False
            if node.kind == "linear":
                if len(node.pred) != 1:
                    violations.append(f"{tag}: linear node {i} needs 1 predecessor")
                    structurally_sound = False
                has_expand |= bool(node.expand)
                has_contract |= not node.expand
            elif node.kind == "math":
                if node.op not in primitives.ARITY:
                    violations.append(f"{tag}: node {i} has unknown op {node.op!r}")
                    structurally_sound = False
                elif len(node.pred) != primitives.ARITY[node.op]:
                    violations.append(
                        f"{tag}: node {i} ({node.op}) has arity "
                        f"{primitives.ARITY[node.op]} but {len(node.pred)} predecessor(s)")
                    structurally_sound = False
            elif node.kind != "input":
                violations.append(f"{tag}: node {i} has unknown kind {node.kind!r}")
                structurally_sound = False
        if not has_expand:
            violations.append(f"{tag}: no expanding linear node")
        if not has_contract:
            violations.append(f"{tag}: no contracting linear node")
        if not 0 <= spec.output < n:
            violations.append(f"{tag}: output index {spec.output} out of range")
            continue
        if not structurally_sound:
            continue
        widths, err = node_widths(spec, cfg.hidden, cfg.d_ref)
        if err is not None:
            violations.append(f"{tag}: {err}")
        elif widths[spec.output] != cfg.hidden:
            violations.append(
                f"{tag}: output width {widths[spec.output]} != hidden {cfg.hidden}")
    return violations


# ---------------------------------------------------------------------------
# serialization

def serialize(g):
    """Canonical text: equal genotypes serialize to identical bytes."""
    return json.dumps(g.to_dict(), sort_keys=True, separators=(",", ":"))


def _node_from_dict(d, where):
    kind = d.get("kind")
    if kind == "input":
        return input_node()
    if kind == "linear":
        if "expand" not in d or "pred" not in d or len(d["pred"]) != 1:
            raise GenotypeParseError("linear node needs expand and one pred", where)
        return linear_node(d["pred"][0], d["expand"])
    if kind == "math":
        if "op" not in d or "pred" not in d:
            raise GenotypeParseError("math node needs op and pred", where)
        return math_node(d["op"], d["pred"])
    raise GenotypeParseError(f"unknown node kind {kind!r}", where)


def deserialize(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise GenotypeParseError(f"invalid JSON: {e.msg}", f"char {e.pos}") from None
    if not isinstance(data, dict) or "layers" not in data:
        raise GenotypeParseError("top level must be an object with 'layers'", "root")
    layers = []
    for li, layer in enumerate(data["layers"]):
        where = f"layers[{li}]"
        try:
            nodes = tuple(_node_from_dict(nd, f"{where}.nodes[{i}]")
                          for i, nd in enumerate(layer["nodes"]))
            ratio = Fraction(layer["ratio"])
            spec = LayerFfnSpec(nodes=nodes, output=int(layer["output"]),
                                stack=int(layer["stack"]), ratio=ratio)
        except GenotypeParseError:
            raise
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
            raise GenotypeParseError(f"bad layer record: {e}", where) from None
        layers.append(spec)
    return FfnGenotype(tuple(layers))


# ---------------------------------------------------------------------------
# sampling

@dataclass
class SearchSpaceDef:
    """Free and fixed dimensions of one search stage."""

    layers: int
    ops: tuple = primitives.PRIMITIVE_NAMES
    stacks: tuple = STACK_CHOICES
    ratios: tuple = RATIO_CHOICES
    max_nodes: int = DEFAULT_MAX_NODES
    fixed_dags: tuple | None = None     # per-layer (nodes, output) to reuse
    fixed_stacks: tuple | None = None
    fixed_ratios: tuple | None = None

    def check(self):
        if self.layers < 1:
            raise EmptySpaceError("space needs at least one layer")
        if self.fixed_dags is None and not self.ops:
            raise EmptySpaceError("no operations to sample dags from")
        if self.fixed_stacks is None and not self.stacks:
            raise EmptySpaceError("no stack numbers to sample")
        if self.fixed_ratios is None and not self.ratios:
            raise EmptySpaceError("no expansion ratios to sample")


def freeze_dags(space, g):
    """Space with every layer's dag pinned to `g`'s (stage-2 winner -> stage 3)."""
    return SearchSpaceDef(
        layers=space.layers, ops=space.ops, stacks=space.stacks,
        ratios=space.ratios, max_nodes=space.max_nodes,
        fixed_dags=tuple((l.nodes, l.output) for l in g.layers),
        fixed_stacks=space.fixed_stacks, fixed_ratios=space.fixed_ratios)


def freeze_sizes(space, g):
    """Space with stacks/ratios pinned to `g`'s (stage-1 winner -> stage 2)."""
    return SearchSpaceDef(
        layers=space.layers, ops=space.ops, stacks=space.stacks,
        ratios=space.ratios, max_nodes=space.max_nodes,
        fixed_dags=space.fixed_dags,
        fixed_stacks=tuple(l.stack for l in g.layers),
        fixed_ratios=tuple(l.ratio for l in g.layers))


def sample_dag(rng, ops, max_nodes):
    """input -> expand -> chain of math nodes -> contract; no dead nodes.

    The sampled space keeps exactly one expand and one contract linear so
    every candidate slices cleanly out of the supernet's two weight banks.
    Binary ops pull their second operand from any earlier intermediate
    node, which is what creates branchy expressions.
    """
    k = int(rng.integers(0, max_nodes - 3 + 1))
    nodes = [input_node(), linear_node(0, True)]
    for j in range(2, 2 + k):
        op = ops[int(rng.integers(0, len(ops)))]
        if primitives.ARITY[op] == 1:
            nodes.append(math_node(op, (j - 1,)))
        else:
            other = int(rng.integers(1, j))
            nodes.append(math_node(op, (j - 1, other)))
    nodes.append(linear_node(len(nodes) - 1, False))
    return tuple(nodes), len(nodes) - 1


def sample_uniform(space, rng):
    """Draw a genotype with every free dimension uniform over its domain."""
    space.check()
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    layers = []
    for li in range(space.layers):
        if space.fixed_dags is not None:
            nodes, output = space.fixed_dags[li]
        else:
            nodes, output = sample_dag(rng, space.ops, space.max_nodes)
        if space.fixed_stacks is not None:
            stack = space.fixed_stacks[li]
        else:
            stack = space.stacks[int(rng.integers(0, len(space.stacks)))]
        if space.fixed_ratios is not None:
            ratio = space.fixed_ratios[li]
        else:
            ratio = space.ratios[int(rng.integers(0, len(space.ratios)))]
        layers.append(LayerFfnSpec(nodes=nodes, output=output,
                                   stack=int(stack), ratio=Fraction(ratio)))
    return FfnGenotype(tuple(layers))


# ---------------------------------------------------------------------------
# execution

def evaluate_dag(spec, x, stack_weights):
    """Run one layer's FFN: the dag applied `spec.stack` times sequentially.

    `stack_weights[s][i]` holds the (W, b) tensor pair for linear node i in
    stack repetition s. Widths follow the dag; a mismatch between x and a
    weight's input extent is a ShapeError.
    """
    if len(stack_weights) != spec.stack:
        raise ShapeError(f"need weights for {spec.stack} stacks, "
                         f"got {len(stack_weights)}")
    cur = x
    for s in range(spec.stack):
        values = []
        for i, node in enumerate(spec.nodes):
            if node.kind == "input":
                values.append(cur)
            elif node.kind == "linear":
                w, b = stack_weights[s][i]
                src = values[node.pred[0]]
                if src.shape[-1] != w.shape[0]:
                    raise ShapeError(
                        f"linear node {i}: input width {src.shape[-1]} "
                        f"!= weight rows {w.shape[0]}")
                values.append(tensor.matmul(src, w) + b)
            else:
                args = [values[p] for p in node.pred]
                values.append(primitives.apply_primitive(node.op, *args))
        cur = values[spec.output]
    return cur
