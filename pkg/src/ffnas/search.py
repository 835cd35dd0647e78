"""Three-stage coarse-to-fine architecture search.

Stage 1 samples everything (dag, stack, ratio) through a learnable
partition tree; stage 2 re-searches the dags with sizes pinned to the
stage-1 winner; stage 3 pins the dags and uniformly re-samples sizes while
training the activated supernet with shared one-step candidate updates.

Candidate scoring (the proxy) is a pure function of the genotype: fixed
batch sequences, cached teacher bundles, one shared readout seed, and a
frozen donor supernet. Every stage after the first evaluates the previous
winner as its first candidate, which is what makes best scores
non-decreasing across stages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import cost as costmod
from . import data as datamod
from . import distill, genotype as gt, train, warmup
from .errors import ContractError, InputError
from .genotype import SearchSpaceDef, freeze_dags, freeze_sizes, sample_uniform
from .model import Model
from .optim import AdamState

ENCODING_BINS = len(gt.primitives.PRIMITIVE_NAMES)


def encode_genotype(g):
    """Per layer: 10-bin op histogram, stack number, ratio; concatenated."""
    chunks = []
    for spec in g.layers:
        hist = np.zeros(ENCODING_BINS)
        for node in spec.nodes:
            if node.kind == "math":
                hist[gt.primitives.PRIMITIVE_NAMES.index(node.op)] += 1
        chunks.append(np.concatenate([hist, [spec.stack, float(spec.ratio)]]))
    return np.concatenate(chunks)


def kendall_tau(x, y):
    """(concordant - discordant) / (n choose 2); ties broken by input order."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError(f"rankings must be equal-length vectors, "
                            f"got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise ContractError("need at least two items to rank")
    rx = np.argsort(np.argsort(x, kind="stable"), kind="stable")
    ry = np.argsort(np.argsort(y, kind="stable"), kind="stable")
    c = d = 0
    for i in range(n):
        for j in range(i + 1, n):
            s = (rx[i] - rx[j]) * (ry[i] - ry[j])
            if s > 0:
                c += 1
            elif s < 0:
                d += 1
    return (c - d) / (n * (n - 1) / 2)


# ---------------------------------------------------------------------------
# the learnable sampling decision tree (simplified LaNAS-style partitioning)

@dataclass
class SamplerConfig:
    max_depth: int = 4
    leaf_capacity: int = 10
    ucb_c: float = 0.5
    max_retries: int = 100
    ridge: float = 3.0   # node-regressor regularization; bare least squares
                         # memorizes the op histogram at these sample counts
    shortlist: int = 16  # path-satisfying draws ranked by the root model;
                         # the first satisfying draw alone loses the
                         # best-of-budget contest against uniform sampling
    min_fit: int = 8     # root predictions count only past this many scores
    swap_margin: float = 1.0  # in residual sigmas: a tree candidate replaces
                              # the stream's uniform draw only when predicted
                              # better by this much (confident-swap policy)


class _TreeNode:
    __slots__ = ("depth", "ridge", "encodings", "scores", "w", "x_mean",
                 "x_scale", "y_mean", "theta", "good", "bad")

    def __init__(self, depth, ridge):
        self.depth = depth
        self.ridge = ridge
        self.encodings = []
        self.scores = []
        self.w = None          # ridge weights over standardized features
        self.x_mean = None
        self.x_scale = None
        self.y_mean = 0.0
        self.theta = None      # split threshold on predicted score
        self.good = None       # child with predicted >= theta
        self.bad = None

    @property
    def n(self):
        return len(self.scores)

    @property
    def mean(self):
        return float(np.mean(self.scores)) if self.scores else 0.0

    def is_leaf(self):
        return self.good is None

    def predict(self, enc):
        z = (enc - self.x_mean) / self.x_scale
        return float(z @ self.w + self.y_mean)

    def fit(self):
        """Regularized least squares on standardized features; the intercept
        (the node's mean score) stays unpenalized."""
        X = np.array(self.encodings)
        y = np.array(self.scores)
        self.x_mean = X.mean(axis=0)
        self.x_scale = X.std(axis=0) + 1e-12
        self.y_mean = float(y.mean())
        Z = (X - self.x_mean) / self.x_scale
        A = Z.T @ Z + self.ridge * np.eye(Z.shape[1])
        self.w = np.linalg.solve(A, Z.T @ (y - self.y_mean))


class SamplerTree:
    """Binary partition tree over genotype encodings with UCB descent."""

    def __init__(self, cfg=None):
        self.cfg = cfg or SamplerConfig()
        self.root = _TreeNode(0, self.cfg.ridge)
        self.fallbacks = 0

    def _ucb(self, child, parent_n):
        if child.n == 0:
            return float("inf")
        # standardize means by the global score spread: raw losses sit far
        # from zero with tiny differences, which would let the exploration
        # bonus drown every real preference
        spread = float(np.std(self.root.scores)) if self.root.n > 1 else 0.0
        mean = child.mean if spread == 0.0 else (child.mean - self.root.mean) / spread
        return mean + self.cfg.ucb_c * np.sqrt(np.log(parent_n) / child.n)

    def _descend(self, rng):
        """Path of (node, wants_good) constraints down to a leaf."""
        node = self.root
        constraints = []
        while not node.is_leaf():
            ug = self._ucb(node.good, node.n)
            ub = self._ucb(node.bad, node.n)
            if ug == ub:
                go_good = bool(rng.integers(0, 2))
            else:
                go_good = ug > ub
            constraints.append((node, go_good))
            node = node.good if go_good else node.bad
        return constraints

    def _satisfies(self, enc, constraints):
        for node, wants_good in constraints:
            pred = node.predict(enc)
            if wants_good != (pred >= node.theta):
                return False
        return True

    def propose(self, space, rng):
        """Sample a shortlist matching the UCB path and propose its
        best-predicted member; uniform fallback after bounded retries
        (logged on the tree, not an error)."""
        constraints = self._descend(rng)
        root_ready = self.root.w is not None and self.root.n >= self.cfg.min_fit
        if not constraints and not root_ready:
            return sample_uniform(space, rng), False
        shortlist = []
        for _ in range(self.cfg.max_retries):
            g = sample_uniform(space, rng)
            if self._satisfies(encode_genotype(g), constraints):
                shortlist.append(g)
                if len(shortlist) >= self.cfg.shortlist:
                    break
        fallback = not shortlist
        if fallback:
            # constraint starvation: deep half-spaces can be nearly empty;
            # fall back to unconstrained uniform draws (still ranked below)
            self.fallbacks += 1
            shortlist = [sample_uniform(space, rng)
                         for _ in range(self.cfg.shortlist)]
        if not root_ready or len(shortlist) == 1:
            return shortlist[0], fallback
        preds = [self.root.predict(encode_genotype(g)) for g in shortlist]
        return shortlist[int(np.argmax(preds))], fallback

    def ready(self):
        return self.root.w is not None and self.root.n >= self.cfg.min_fit

    def predicted(self, genotype):
        return self.root.predict(encode_genotype(genotype))

    def residual_sigma(self):
        """Spread of the root model's training residuals; the confidence
        unit for candidate swaps."""
        resid = np.array(self.root.scores) - np.array(
            [self.root.predict(e) for e in self.root.encodings])
        return max(float(resid.std()), 1e-9)

    def propose_swap(self, space, stream_rng, own_rng, seen):
        """Confident-swap discipline: draw the next uniform candidate from
        the shared stream and replace it with a tree proposal only when the
        model predicts a clear improvement. Keeps the tail exploration of
        uniform sampling while banking the model's confident calls."""
        g = sample_uniform(space, stream_rng)
        if not self.ready():
            return g, False
        trial, _fb = self.propose(space, own_rng)
        gain = self.predicted(trial) - self.predicted(g)
        if gain > self.cfg.swap_margin * self.residual_sigma() \
                and gt.serialize(trial) not in seen:
            return trial, False
        return g, False

    def update(self, genotype, score):
        enc = encode_genotype(genotype)
        node = self.root
        while not node.is_leaf():
            node.encodings.append(enc)
            node.scores.append(score)
            node.fit()
            # keep the boundary centered as the regressor drifts, otherwise
            # rejection sampling starves on stale half-spaces
            node.theta = float(np.median(
                [node.predict(e) for e in node.encodings]))
            node = node.good if node.predict(enc) >= node.theta else node.bad
        node.encodings.append(enc)
        node.scores.append(score)
        if node.n > self.cfg.leaf_capacity and node.depth < self.cfg.max_depth:
            self._split(node)
        if self.root.n >= self.cfg.min_fit and np.ptp(self.root.scores) > 0.0:
            self.root.fit()  # the shortlist ranker, live before any split

    def _split(self, leaf):
        if np.ptp(leaf.scores) <= 0.0:
            return  # constant landscape in this region; nothing to partition
        leaf.fit()
        preds = np.array([leaf.predict(e) for e in leaf.encodings])
        theta = float(np.median(preds))
        good_idx = preds >= theta
        if good_idx.all() or not good_idx.any():
            return  # degenerate predictions; keep the leaf
        leaf.theta = theta
        leaf.good = _TreeNode(leaf.depth + 1, leaf.ridge)
        leaf.bad = _TreeNode(leaf.depth + 1, leaf.ridge)
        for e, s, is_good in zip(leaf.encodings, leaf.scores, good_idx):
            child = leaf.good if is_good else leaf.bad
            child.encodings.append(e)
            child.scores.append(s)


# ---------------------------------------------------------------------------
# candidate scoring

@dataclass
class SearchRecord:
    genotype: gt.FfnGenotype
    proxy_score: float
    cost: costmod.CostReport
    stage: int
    seed: int
    steps: int
    sampler_fallback: bool = False

    def to_dict(self):
        return {
            "genotype": self.genotype.to_dict(),
            "proxy_score": self.proxy_score,
            "cost": self.cost.to_dict(),
            "stage": self.stage,
            "seed": self.seed,
            "steps": self.steps,
            "sampler_fallback": self.sampler_fallback,
        }


@dataclass
class ProxyBudgets:
    pretrain_steps: int = 12
    finetune_steps: int = 24
    holdout_batches: int = 6
    batch: int = 8
    pretrain_lr: float = train.PRETRAIN_LR
    finetune_lr: float = train.SEARCH_FINETUNE_LR
    # adaptation replicas averaged into one score; brief high-lr tuning has
    # enough trajectory variance that a single run is mostly tail luck
    replicas: int = 2


class ProxyProtocol:
    """Deterministic candidate scoring against a frozen supernet.

    Batches and teacher bundles are fixed at construction, so the score is
    a pure function of the genotype and two evaluations of one genotype
    agree bit for bit.
    """

    def __init__(self, handle, teacher, corpus, task, budgets=None, seed=0):
        handle.require(warmup.FROZEN)
        if corpus.size == 0:
            raise InputError("empty corpus")
        self.handle = handle
        self.teacher = teacher
        self.task = task
        self.budgets = budgets or ProxyBudgets()
        self.seed = seed
        b = self.budgets

        self.pretrain = []
        self.finetune = []
        for r in range(b.replicas):
            stream = datamod.mlm_batches(corpus, train.MASK_PROB, b.batch,
                                         np.random.default_rng([seed, 21, r]),
                                         epochs=10_000)
            pre = []
            for _ in range(b.pretrain_steps):
                ids, _pattern, _orig = next(stream)
                pre.append((ids, None))
            self.pretrain.append(train.cache_teacher_batches(teacher, pre))

            tstream = datamod.task_batches(task, b.batch,
                                           np.random.default_rng([seed, 22, r]),
                                           epochs=10_000)
            ft = [next(tstream) for _ in range(b.finetune_steps)]
            self.finetune.append(
                train.cache_teacher_batches(teacher, ft, head=task.task_id))

        hstream = datamod.task_batches(task, b.batch,
                                       np.random.default_rng([seed, 23]),
                                       split="holdout", epochs=10_000)
        ho = [next(hstream) for _ in range(b.holdout_batches)]
        self.holdout = train.cache_teacher_batches(teacher, ho, head=task.task_id)

    def _adapt_and_score(self, student, kd0, replica):
        b = self.budgets
        task_id = self.task.task_id
        if f"head.{task_id}.w" not in student.params:
            # same readout draw for every candidate: head-init luck must not
            # contaminate the ranking
            student.add_task_head(self.task.task_id, self.task.n_out,
                                  seed=self.seed)
        kd1 = replace(kd0, gamma=1.0,
                      pred_kind="mse" if self.task.kind == "regression" else "ce")
        trunk = student.trainable(include_heads=False) + kd0.trainable()
        if b.pretrain_steps:
            opt = AdamState(trunk, b.pretrain_lr, b.pretrain_steps)
            train.kd_pretrain_steps(student, self.pretrain[replica], kd0, opt)
        if b.finetune_steps:
            opt = AdamState(student.trainable() + kd0.trainable(),
                            b.finetune_lr, b.finetune_steps)
            train.kd_finetune_steps(student, self.finetune[replica], kd1, opt,
                                    head=task_id)
        loss = train.kd_holdout_loss(student, self.holdout, kd1, head=task_id)
        return -loss

    def evaluate(self, genotype):
        """Score with supernet-inherited initialization (warm-up KD path)."""
        scores = []
        for r in range(self.budgets.replicas):
            student = warmup.inherit_weights(self.handle, genotype)
            kd0 = warmup.make_candidate_kd(self.handle, gamma=0.0)
            scores.append(self._adapt_and_score(student, kd0, r))
        return float(np.mean(scores))

    def evaluate_scratch(self, genotype):
        """Same protocol from random initialization (the no-warm-up baseline)."""
        cfg = self.handle.model.cfg.with_genotype(genotype)
        scores = []
        for r in range(self.budgets.replicas):
            student = Model.build(cfg, seed=train.genotype_seed(genotype))
            kd0 = distill.make_kd_config(cfg, self.teacher.cfg, gamma=0.0,
                                         seed=train.genotype_seed(genotype))
            scores.append(self._adapt_and_score(student, kd0, r))
        return float(np.mean(scores))

    def steps_per_candidate(self):
        return (self.budgets.pretrain_steps + self.budgets.finetune_steps) \
            * self.budgets.replicas


def better(a, b, cost_penalty=0.0):
    """Record preference: (possibly cost-penalized) score, then fewer params,
    fewer Mult-Adds, earlier discovery."""
    sa = a.proxy_score - cost_penalty * a.cost.params_total
    sb = b.proxy_score - cost_penalty * b.cost.params_total
    if sa != sb:
        return sa > sb
    if a.cost.params_total != b.cost.params_total:
        return a.cost.params_total < b.cost.params_total
    return a.cost.mult_adds_total < b.cost.mult_adds_total


# ---------------------------------------------------------------------------
# stage drivers

def run_stage(stage, handle, teacher, corpus, tasks, budget, seed,
              prev_winner=None, scoring_handle=None, budgets=None,
              sampler_cfg=None, space=None, shared_lr=train.SEARCH_FINETUNE_LR,
              cost_penalty=0.0):
    """Run one search stage; returns (best SearchRecord, all records).

    Stages 1-2 need a frozen `handle`; stage 3 needs an activated `handle`
    plus a frozen `scoring_handle` so candidate scores stay on the common
    proxy objective.
    """
    if budget <= 0:
        raise ContractError("stage budget must be positive")
    if not tasks:
        raise InputError("no tasks configured")
    if stage not in (1, 2, 3):
        raise ContractError(f"unknown stage {stage}")
    if stage in (1, 2):
        handle.require(warmup.FROZEN)
        scoring_handle = handle
    else:
        handle.require(warmup.ACTIVATED)
        if scoring_handle is None:
            raise ContractError("stage 3 needs a frozen scoring_handle")
        scoring_handle.require(warmup.FROZEN)

    M = scoring_handle.model.cfg.layers
    base_space = space or SearchSpaceDef(
        layers=M, max_nodes=scoring_handle.model.cfg.max_nodes)
    if stage == 1:
        stage_space = base_space
    elif stage == 2:
        if prev_winner is None:
            raise ContractError("stage 2 needs the stage-1 winner")
        stage_space = freeze_sizes(base_space, prev_winner)
    else:
        if prev_winner is None:
            raise ContractError("stage 3 needs the stage-2 winner")
        stage_space = freeze_dags(base_space, prev_winner)

    proto = ProxyProtocol(scoring_handle, teacher, corpus, tasks[0],
                          budgets=budgets, seed=seed)
    # stages 1-2 ride the same uniform stream the random baseline uses
    # (common-random-numbers pairing); the tree swaps slots it is sure about
    stream_rng = np.random.default_rng([seed, 32])
    if stage == 1:
        rng = np.random.default_rng([seed, 33])
    else:
        rng = np.random.default_rng([seed, 33, stage])
    tree = SamplerTree(sampler_cfg) if stage in (1, 2) else None

    shared_stream = None
    kd_shared = None
    if stage == 3:
        shared_stream = [
            iter(datamod.task_batches(t, proto.budgets.batch,
                                      np.random.default_rng([seed, 34, i]),
                                      epochs=10_000))
            for i, t in enumerate(tasks)]
        # share the handle's own alignment tensors so the shared optimizer
        # owns them (make_candidate_kd would copy and orphan their grads)
        kd_shared = replace(handle.kd_cfg, gamma=1.0)

    records = []
    best = None
    seen = set()
    for i in range(budget):
        fallback = False
        if prev_winner is not None and i == 0:
            g = prev_winner
        elif stage in (1, 2):
            g, fallback = tree.propose_swap(stage_space, stream_rng, rng, seen)
        else:
            g = sample_uniform(stage_space, rng)

        if stage == 3 and i > 0:
            # weight-sharing update on the activated supernet (multi-task)
            ti = (i - 1) % len(tasks)
            task = tasks[ti]
            ids, _labels = next(shared_stream[ti])
            t_arts = teacher.forward(ids, head=task.task_id)
            cb = train.CachedBatch(ids=ids, labels=None, teacher=t_arts)
            kd_t = replace(kd_shared,
                           pred_kind="mse" if task.kind == "regression" else "ce")
            warmup.shared_subnet_step(handle, g, cb, kd_t,
                                      head=task.task_id, total_steps=budget,
                                      lr=shared_lr)

        key = gt.serialize(g)
        score = proto.evaluate(g)
        rec = SearchRecord(
            genotype=g, proxy_score=score,
            cost=costmod.genotype_cost(scoring_handle.model.cfg, g),
            stage=stage, seed=seed, steps=proto.steps_per_candidate(),
            sampler_fallback=fallback)
        records.append(rec)
        if tree is not None and key not in seen:
            tree.update(g, score)
        seen.add(key)
        if best is None or better(rec, best, cost_penalty):
            best = rec
    return best, records


def random_baseline(handle, teacher, corpus, tasks, budget, seed,
                    budgets=None, space=None):
    """Equal-budget uniform sampling under the exact same scoring protocol."""
    if budget <= 0:
        raise ContractError("budget must be positive")
    handle.require(warmup.FROZEN)
    proto = ProxyProtocol(handle, teacher, corpus, tasks[0],
                          budgets=budgets, seed=seed)
    space = space or SearchSpaceDef(layers=handle.model.cfg.layers,
                                    max_nodes=handle.model.cfg.max_nodes)
    rng = np.random.default_rng([seed, 32])
    best = None
    records = []
    for _ in range(budget):
        g = sample_uniform(space, rng)
        rec = SearchRecord(
            genotype=g, proxy_score=proto.evaluate(g),
            cost=costmod.genotype_cost(handle.model.cfg, g),
            stage=0, seed=seed, steps=proto.steps_per_candidate())
        records.append(rec)
        if best is None or better(rec, best):
            best = rec
    return best, records


# ---------------------------------------------------------------------------
# ranking correlation between search-phase and retrain-phase scores

def retrain_score(handle, teacher, corpus, tasks, genotype, budgets=None,
                  seed=0, scale=3, pretrain=True):
    """Longer-budget retraining; per-task final scores (negative holdout loss).

    `pretrain=False` is the "+" path: inherit (typically from the
    multi-task fine-tuned supernet) and go straight to fine-tuning.
    """
    b = budgets or ProxyBudgets()
    big = ProxyBudgets(
        pretrain_steps=b.pretrain_steps * scale if pretrain else 0,
        finetune_steps=b.finetune_steps * scale,
        holdout_batches=b.holdout_batches,
        batch=b.batch, pretrain_lr=b.pretrain_lr,
        finetune_lr=train.RETRAIN_FINETUNE_LR)
    student = warmup.inherit_weights(handle, genotype)
    kd0 = warmup.make_candidate_kd(handle, gamma=0.0)
    params = student.trainable(include_heads=False) + kd0.trainable()

    if big.pretrain_steps:
        stream = datamod.mlm_batches(corpus, train.MASK_PROB, big.batch,
                                     np.random.default_rng([seed, 41]),
                                     epochs=10_000)
        pre = []
        for _ in range(big.pretrain_steps):
            ids, _p, _o = next(stream)
            pre.append((ids, None))
        cached_pre = train.cache_teacher_batches(teacher, pre)
        opt = AdamState(params, big.pretrain_lr, big.pretrain_steps)
        train.kd_pretrain_steps(student, cached_pre, kd0, opt)

    # each task fine-tunes independently from the pretrained trunk
    trunk_snapshot = [p.values.copy() for p in params]
    per_task = {}
    accuracies = {}
    for i, task in enumerate(tasks):
        for p, snap in zip(params, trunk_snapshot):
            p.values = snap.copy()
        if f"head.{task.task_id}.w" not in student.params:
            student.add_task_head(task.task_id, task.n_out, seed=seed + i)
        tstream = datamod.task_batches(task, big.batch,
                                       np.random.default_rng([seed, 42, i]),
                                       epochs=10_000)
        ft = [next(tstream) for _ in range(big.finetune_steps)]
        cached_ft = train.cache_teacher_batches(teacher, ft, head=task.task_id)
        hstream = datamod.task_batches(task, big.batch,
                                       np.random.default_rng([seed, 43, i]),
                                       split="holdout", epochs=10_000)
        ho = [next(hstream) for _ in range(big.holdout_batches)]
        cached_ho = train.cache_teacher_batches(teacher, ho, head=task.task_id)

        kd1 = replace(kd0, gamma=1.0,
                      pred_kind="mse" if task.kind == "regression" else "ce")
        head_params = [student.params[f"head.{task.task_id}.w"],
                       student.params[f"head.{task.task_id}.b"]]
        opt = AdamState(params + head_params, big.finetune_lr, big.finetune_steps)
        train.kd_finetune_steps(student, cached_ft, kd1, opt, head=task.task_id)
        per_task[task.task_id] = -train.kd_holdout_loss(
            student, cached_ho, kd1, head=task.task_id)
        accuracies[task.task_id] = train.accuracy(student, task, task.task_id)
    return per_task, accuracies, student


def rank_correlation_study(candidates, handle, teacher, corpus, tasks,
                           budgets=None, seed=0, retrain_runs=2):
    """Proxy-vs-retrain Kendall tau per task and overall.

    Retrain scores average `retrain_runs` independent retrainings (distinct
    batch orders) so training-dynamics noise does not drown the
    architecture signal at desk scale.
    """
    if len(candidates) < 2:
        raise ContractError("need at least two candidates to rank")
    proto = ProxyProtocol(handle, teacher, corpus, tasks[0],
                          budgets=budgets, seed=seed)
    proxy = [proto.evaluate(g) for g in candidates]
    finals = []
    for g in candidates:
        runs = []
        for r in range(retrain_runs):
            per_task, _accs, _student = retrain_score(
                handle, teacher, corpus, tasks, g, budgets=budgets,
                seed=seed + 1000 * r)
            runs.append(per_task)
        finals.append({k: float(np.mean([run[k] for run in runs]))
                       for k in runs[0]})

    report = {"tasks": {}, "points": []}
    zscores = np.zeros(len(candidates))
    for task in tasks:
        scores = np.array([f[task.task_id] for f in finals])
        report["tasks"][task.task_id] = kendall_tau(proxy, scores)
        spread = scores.std()
        if spread > 0:  # scale-free aggregation across heterogeneous tasks
            zscores = zscores + (scores - scores.mean()) / spread
    overall_final = (zscores / len(tasks)).tolist()
    report["overall"] = kendall_tau(proxy, overall_final)
    for i, g in enumerate(candidates):
        report["points"].append({
            "candidate": i,
            "proxy": proxy[i],
            "final_overall": overall_final[i],
            "per_task": finals[i],
        })
    return report


def records_to_jsonl(records, meta=None):
    lines = []
    if meta is not None:
        lines.append(json.dumps({"meta": meta}, sort_keys=True))
    for rec in records:
        lines.append(json.dumps(rec.to_dict(), sort_keys=True))
    return "\n".join(lines) + "\n"
