"""Warm-up knowledge distillation: supernet pretraining, frozen/activated
modes, and the weight-inheritance slicing rules.

The supernet is the maximal model (stack 4, ratio 1). Each layer/stack owns
one expand bank (d x d_i_max) and one contract bank (d_i_max x d); a
candidate's expand linear takes the leading output channels of the expand
bank, its contract linear the leading input rows of the contract bank, and
stacks are taken bottom-to-top. Frozen handles make every parameter array
read-only, so any mutation attempt fails loudly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data as datamod
from . import distill, genotype as gt, train
from .errors import CapacityError, ModeError
from .model import Model, bank_nodes
from .optim import AdamState
from .tensor import Tape, Tensor, backward

FROZEN = "frozen"
ACTIVATED = "activated"


@dataclass
class SupernetHandle:
    model: Model
    mode: str
    stage: str = "init"
    steps_trained: int = 0
    kd_cfg: distill.KdConfig | None = None
    shared_opt: AdamState | None = None

    def __post_init__(self):
        self._apply_mode()

    def _apply_mode(self):
        writeable = self.mode != FROZEN
        for t in self.model.params.values():
            t.values.flags.writeable = writeable
        if self.kd_cfg is not None:
            for t in self.kd_cfg.trainable():
                t.values.flags.writeable = writeable

    def freeze(self):
        self.mode = FROZEN
        self._apply_mode()
        return self

    def activate(self):
        self.mode = ACTIVATED
        self._apply_mode()
        return self

    def require(self, mode):
        if self.mode != mode:
            raise ModeError(f"handle is {self.mode}, operation needs {mode}")

    def checkpoint_meta(self):
        return {"mode": self.mode, "stage": self.stage,
                "steps_trained": self.steps_trained}


def _capacity_check(handle, genotype):
    sup = handle.model.cfg
    errs = gt.validate(genotype, sup)
    if errs:
        raise CapacityError("invalid genotype: " + "; ".join(errs))
    for li, spec in enumerate(genotype.layers):
        sup_spec = sup.genotype.layers[li]
        if spec.stack > sup_spec.stack:
            raise CapacityError(
                f"layer {li}: stack {spec.stack} exceeds supernet {sup_spec.stack}")
        w_cand = gt.intermediate_width(spec.ratio, sup.d_ref)
        w_sup = gt.intermediate_width(sup_spec.ratio, sup.d_ref)
        if w_cand > w_sup:
            raise CapacityError(
                f"layer {li}: width {w_cand} exceeds supernet bank {w_sup}")


def _ffn_param_map(handle, genotype):
    """(student_name, supernet_name, row_count, col_count) for FFN linears."""
    sup_cfg = handle.model.cfg
    out = []
    for li, spec in enumerate(genotype.layers):
        widths, err = gt.node_widths(spec, sup_cfg.hidden, sup_cfg.d_ref)
        if err is not None:
            raise CapacityError(f"layer {li}: {err}")
        sup_spec = sup_cfg.genotype.layers[li]
        exp_node, con_node = bank_nodes(sup_spec)
        for s in range(spec.stack):
            for i, node in enumerate(spec.nodes):
                if node.kind != "linear":
                    continue
                bank = exp_node if node.expand else con_node
                rows = widths[node.pred[0]]
                cols = widths[i]
                out.append((f"L{li}.ffn.s{s}.n{i}",
                            f"L{li}.ffn.s{s}.n{bank}", rows, cols))
    return out


def inherit_weights(handle, genotype):
    """Materialize a student whose weights are copied slices of the supernet."""
    _capacity_check(handle, genotype)
    sup = handle.model
    student_cfg = sup.cfg.with_genotype(genotype)
    student = Model.build(student_cfg, seed=train.genotype_seed(genotype))
    for name, t in student.params.items():
        if ".ffn." not in name and name in sup.params:
            t.values = sup.params[name].values.copy()
    for name, t in sup.params.items():
        if name.startswith("head."):
            student.params[name] = Tensor(t.values.copy(), requires_grad=True,
                                          name=name)
    for sname, bname, rows, cols in _ffn_param_map(handle, genotype):
        bank_w = sup.params[f"{bname}.w"].values
        bank_b = sup.params[f"{bname}.b"].values
        if rows > bank_w.shape[0] or cols > bank_w.shape[1]:
            raise CapacityError(
                f"{sname}: slice {rows}x{cols} exceeds bank {bank_w.shape}")
        student.params[f"{sname}.w"].values = bank_w[:rows, :cols].copy()
        student.params[f"{sname}.b"].values = bank_b[:cols].copy()
    return student


def make_candidate_kd(handle, gamma, temperature=1.0):
    """KD config for a candidate, alignments copied from the warmed supernet."""
    base = handle.kd_cfg
    return distill.KdConfig(
        gamma=gamma, temperature=temperature,
        w_h=Tensor(base.w_h.values.copy(), requires_grad=True, name="align.h"),
        w_e=Tensor(base.w_e.values.copy(), requires_grad=True, name="align.e"),
        mapping=base.mapping)


def slice_views(handle, genotype):
    """Candidate as live views of supernet storage (stage-3 weight sharing).

    FFN linears become tensors wrapping numpy views of the banks; everything
    else (embeddings, MHA, layer norms, task heads) is the supernet's own
    tensor object. Requires at most one expand and one contract linear per
    dag so no two views alias the same bank region.
    """
    _capacity_check(handle, genotype)
    for li, spec in enumerate(genotype.layers):
        kinds = [n.expand for n in spec.nodes if n.kind == "linear"]
        if kinds.count(True) > 1 or kinds.count(False) > 1:
            raise CapacityError(
                f"layer {li}: shared-view execution needs a single "
                "expand and a single contract linear")
    sup = handle.model
    params = dict(sup.params)
    slicers = {}
    for sname, bname, rows, cols in _ffn_param_map(handle, genotype):
        # np.asarray in the Tensor constructor keeps these as live views
        vt = Tensor(sup.params[f"{bname}.w"].values[:rows, :cols],
                    requires_grad=True, name=f"{sname}.w<-{bname}")
        bt = Tensor(sup.params[f"{bname}.b"].values[:cols],
                    requires_grad=True, name=f"{sname}.b<-{bname}")
        params[f"{sname}.w"] = vt
        params[f"{sname}.b"] = bt
        slicers[f"{bname}.w"] = (vt, np.s_[:rows, :cols])
        slicers[f"{bname}.b"] = (bt, np.s_[:cols])
    return Model(sup.cfg.with_genotype(genotype), params), slicers


def save_handle(path, handle, extra_meta=None):
    """Checkpoint the supernet plus its KD alignments, tagged with mode/stage."""
    from . import checkpoint, model as modelmod
    named = dict(handle.model.named_values())
    named["kd.align.h"] = handle.kd_cfg.w_h.values
    named["kd.align.e"] = handle.kd_cfg.w_e.values
    meta = dict(handle.checkpoint_meta())
    meta["model"] = modelmod.config_meta(handle.model.cfg)
    meta["heads"] = {k[len("head."):-len(".w")]: handle.model.params[k].shape[1]
                     for k in handle.model.params
                     if k.startswith("head.") and k.endswith(".w")}
    meta["kd_mapping"] = list(handle.kd_cfg.mapping)
    if extra_meta:
        meta.update(extra_meta)
    checkpoint.save_archive(path, named, meta=meta)


def load_handle(path, mode=None):
    from . import checkpoint, model as modelmod
    named, meta = checkpoint.load_archive(path)
    w_h = named.pop("kd.align.h")
    w_e = named.pop("kd.align.e")
    sup = Model.build(modelmod.config_from_meta(meta["model"]), seed=0)
    for task, n_out in meta.get("heads", {}).items():
        sup.add_task_head(task, n_out)
    sup.load_values(named)
    kd_cfg = distill.KdConfig(
        gamma=0.0, temperature=1.0,
        w_h=Tensor(w_h, requires_grad=True, name="align.h"),
        w_e=Tensor(w_e, requires_grad=True, name="align.e"),
        mapping=tuple(tuple(p) for p in meta["kd_mapping"]))
    handle = SupernetHandle(model=sup, mode=mode or meta.get("mode", FROZEN),
                            stage=meta.get("stage", "init"),
                            steps_trained=meta.get("steps_trained", 0),
                            kd_cfg=kd_cfg)
    return handle, meta


def pretrain_supernet(supernet, teacher, corpus, steps, mode=FROZEN,
                      batch=8, lr=train.PRETRAIN_LR, seed=0, log=None,
                      stage="warmup"):
    """gamma=0 KD from the teacher over the masked-corpus stream."""
    kd_cfg = distill.make_kd_config(supernet.cfg, teacher.cfg, gamma=0.0,
                                    seed=seed)
    handle = SupernetHandle(model=supernet, mode=ACTIVATED, stage=stage,
                            kd_cfg=kd_cfg)
    if steps > 0:
        stream = datamod.mlm_batches(corpus, train.MASK_PROB, batch,
                                     np.random.default_rng([seed, 3]),
                                     epochs=10_000)
        # lazy teacher bundles: a long pretraining run never holds them all
        def lazy_batches():
            for _ in range(steps):
                ids, _pattern, _orig = next(stream)
                yield train.CachedBatch(ids=ids, labels=None,
                                        teacher=teacher.forward(ids))
        opt = AdamState(supernet.trainable() + kd_cfg.trainable(), lr, steps)
        train.kd_pretrain_steps(supernet, lazy_batches(), kd_cfg, opt, log=log,
                                phase="supernet-pretrain")
        handle.steps_trained = steps
    if mode == FROZEN:
        handle.freeze()
    return handle


def multitask_finetune(handle, teacher, tasks, steps, batch=8,
                       lr=train.SEARCH_FINETUNE_LR, seed=0, log=None):
    """gamma=1 multi-task KD on the activated supernet (stage-3 warm-up).

    Task heads are created on the supernet (trunk shared, heads per task)
    and on loan to every candidate sliced from it afterwards.
    """
    handle.require(ACTIVATED)
    sup = handle.model
    for t in tasks:
        if f"head.{t.task_id}.w" not in sup.params:
            sup.add_task_head(t.task_id, t.n_out, seed=seed + 11)
    kd = make_candidate_kd(handle, gamma=1.0)
    opt = AdamState(sup.trainable() + kd.trainable(), lr, max(1, steps),
                    allow_missing=True)
    streams = [datamod.task_batches(t, batch, np.random.default_rng([seed, 7, i]),
                                    epochs=10_000) for i, t in enumerate(tasks)]
    from dataclasses import replace as _dc_replace
    for step in range(steps):
        task = tasks[step % len(tasks)]
        ids, _labels = next(streams[step % len(tasks)])
        t_arts = teacher.forward(ids, head=task.task_id)
        kd_t = _dc_replace(kd, pred_kind="mse" if task.kind == "regression"
                           else "ce")
        with Tape():
            arts = sup.forward(ids, head=task.task_id)
            loss = distill.total_loss(arts, t_arts, kd_t)
            backward(loss.total)
        train._check_finite(loss.total.item(), step)
        if log is not None:
            rec = {"phase": "supernet-multitask", "task": task.task_id, "step": step}
            rec.update(loss.scalars())
            log.append(rec)
        opt.step()
        opt.zero_grad()
    handle.kd_cfg = kd
    handle.steps_trained += steps
    return handle


def shared_subnet_step(handle, genotype, cached_batch, kd_cfg, head,
                       total_steps, lr=train.SEARCH_FINETUNE_LR):
    """One weight-sharing training step: forward through sliced views,
    backprop, update only the touched supernet parameters in place."""
    handle.require(ACTIVATED)
    view_model, slicers = slice_views(handle, genotype)
    with Tape():
        arts = view_model.forward(cached_batch.ids, head=head)
        loss = distill.total_loss(arts, cached_batch.teacher, kd_cfg)
        backward(loss.total)
    train._check_finite(loss.total.item(), 0)

    if handle.shared_opt is None:
        params = handle.model.trainable() + handle.kd_cfg.trainable()
        handle.shared_opt = AdamState(params, lr, total_steps)
    opt = handle.shared_opt
    name_to_idx = {p.name: i for i, p in enumerate(opt.params)}

    view_params = {}
    slice_map = {}
    for bank_name, (vt, sl) in slicers.items():
        if vt.grad is None:
            continue
        i = name_to_idx[bank_name]
        view_params[i] = vt
        slice_map[i] = sl
    for i, p in enumerate(opt.params):
        if p.grad is not None:
            view_params[i] = p
    opt.sliced(slice_map).step(view_params)

    for p in opt.params:
        p.grad = None
    for vt, _sl in slicers.values():
        vt.grad = None
    handle.steps_trained += 1
    return loss
