"""Command-line pipeline driver.

    ffnas train-teacher      fixture teacher on the synthetic corpus + tasks
    ffnas pretrain-supernet  warm up the donor supernet with gamma=0 KD
    ffnas search --stage N   the three coarse-to-fine stages
    ffnas retrain [--plus]   retrain the stage-3 winner (plain or "+")
    ffnas eval               holdout metrics of a retrained model
    ffnas cost               analytic cost table (CSV)
    ffnas nonlin-surface     FFN nonlinearity surface (CSV)
    ffnas rankcorr           search-vs-retrain rank correlation
    ffnas transform          genotype transforms (depth doubling)

Exit codes: 0 ok, 2 missing upstream artifact, 3 config schema violation.
Every JSON artifact embeds the resolved config and a version string; JSONL
logs carry them in a first meta line; CSVs get a .meta.json sidecar.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import cost as costmod
from . import data as datamod
from . import genotype as gt
from . import search as searchmod
from . import surface as surfmod
from . import train, warmup
from .errors import ConfigError, FfnasError, MissingArtifactError
from .model import ModelConfig, build_supernet, load_model, save_model


def _teacher_cfg(cfg):
    return ModelConfig(
        layers=cfg["teacher_layers"], hidden=cfg["teacher_hidden"],
        heads=cfg["teacher_heads"], max_len=cfg["max_len"],
        vocab=cfg["vocab"], embed_factor=cfg["teacher_embed_factor"],
        d_ref=cfg["teacher_d_ref"], max_nodes=cfg["max_nodes"],
        genotype=gt.baseline_genotype(cfg["teacher_layers"]))


def _student_cfg(cfg):
    return ModelConfig(
        layers=cfg["student_layers"], hidden=cfg["student_hidden"],
        heads=cfg["student_heads"], max_len=cfg["max_len"],
        vocab=cfg["vocab"], embed_factor=cfg["student_embed_factor"],
        d_ref=cfg["student_d_ref"], max_nodes=cfg["max_nodes"])


def _data_cfg(cfg):
    return datamod.DataConfig(vocab=cfg["vocab"], seq_len=cfg["seq_len"])


def _make_data(cfg):
    corpus = datamod.gen_corpus(cfg["seed"], cfg["corpus_size"], _data_cfg(cfg))
    tasks = datamod.default_tasks(cfg["seed"], _data_cfg(cfg), size=cfg["task_size"])
    return corpus, tasks


def _budgets(cfg):
    return searchmod.ProxyBudgets(
        pretrain_steps=cfg["proxy_pretrain_steps"],
        finetune_steps=cfg["proxy_finetune_steps"],
        holdout_batches=cfg["proxy_holdout_batches"],
        batch=cfg["proxy_batch"],
        pretrain_lr=cfg["lr_pretrain"],
        finetune_lr=cfg["lr_finetune_search"])


def _sampler_cfg(cfg):
    return searchmod.SamplerConfig(
        max_depth=cfg["sampler_depth"],
        leaf_capacity=cfg["sampler_leaf_capacity"],
        ucb_c=cfg["sampler_ucb_c"],
        max_retries=cfg["sampler_retries"])


def _provenance(cfg):
    return {"version": cfgmod.version_string(), "config": cfg}


def _require(path):
    p = Path(path)
    if not p.exists():
        raise MissingArtifactError(str(p))
    return p


def _write_json(path, payload, cfg):
    body = dict(_provenance(cfg))
    body.update(payload)
    Path(path).write_text(json.dumps(body, sort_keys=True, indent=1) + "\n")


def _write_jsonl(path, records, cfg):
    lines = [json.dumps({"meta": _provenance(cfg)}, sort_keys=True)]
    lines += [json.dumps(r, sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def _verify_fixture_hashes(out, cfg):
    """Regenerate data and compare against fixture hashes from train-teacher."""
    fix = out / "data_hashes.json"
    if not fix.exists():
        return
    stored = json.loads(fix.read_text())
    corpus, tasks = _make_data(cfg)
    got = {"corpus": datamod.fixture_hash(datamod.corpus_jsonl(corpus)),
           "tasks": datamod.fixture_hash(datamod.tasks_jsonl(tasks))}
    if got != stored.get("hashes"):
        raise ConfigError(
            "regenerated data does not match recorded fixtures; "
            "the config's data keys changed since train-teacher ran")


def _load_winner_genotype(path):
    data = json.loads(_require(path).read_text())
    return gt.deserialize(json.dumps(data["genotype"]))


# ---------------------------------------------------------------------------
# commands

def cmd_train_teacher(cfg, out):
    corpus, tasks = _make_data(cfg)
    (out / "corpus.jsonl").write_text(datamod.corpus_jsonl(corpus))
    (out / "tasks.jsonl").write_text(datamod.tasks_jsonl(tasks))
    _write_json(out / "data_hashes.json", {"hashes": {
        "corpus": datamod.fixture_hash(datamod.corpus_jsonl(corpus)),
        "tasks": datamod.fixture_hash(datamod.tasks_jsonl(tasks))}}, cfg)

    log = []
    teacher = train.train_teacher(
        _teacher_cfg(cfg), corpus, tasks,
        pretrain_steps=cfg["teacher_pretrain_steps"],
        finetune_steps=cfg["teacher_finetune_steps"],
        batch=cfg["teacher_batch"], seed=cfg["seed"], log=log)
    accs = {t.task_id: train.accuracy(teacher, t, t.task_id) for t in tasks}
    save_model(out / "teacher.ckpt", teacher,
               extra_meta={"provenance": _provenance(cfg)})
    _write_jsonl(out / "teacher_log.jsonl", log, cfg)
    _write_json(out / "teacher_eval.json", {"holdout_accuracy": accs}, cfg)
    print("teacher holdout accuracy:",
          " ".join(f"{k}={v:.3f}" for k, v in accs.items()))
    return 0


def cmd_pretrain_supernet(cfg, out):
    _verify_fixture_hashes(out, cfg)
    teacher, _ = load_model(_require(out / "teacher.ckpt"))
    corpus, _tasks = _make_data(cfg)
    supernet = build_supernet(_student_cfg(cfg), seed=cfg["seed"] + 1)
    log = []
    handle = warmup.pretrain_supernet(
        supernet, teacher, corpus, cfg["supernet_pretrain_steps"],
        mode=warmup.FROZEN, batch=cfg["supernet_batch"],
        lr=cfg["lr_pretrain"], seed=cfg["seed"], log=log, stage="warmup")
    warmup.save_handle(out / "supernet.ckpt", handle,
                       extra_meta={"provenance": _provenance(cfg)})
    _write_jsonl(out / "supernet_log.jsonl", log, cfg)
    print(f"supernet warmed for {handle.steps_trained} steps "
          f"({warmup.FROZEN}); saved")
    return 0


def _stage_artifacts(out, stage):
    return out / f"stage{stage}_winner.json", out / f"stage{stage}_log.jsonl"


def cmd_search(cfg, out, stage):
    _verify_fixture_hashes(out, cfg)
    teacher, _ = load_model(_require(out / "teacher.ckpt"))
    corpus, tasks = _make_data(cfg)
    budgets = _budgets(cfg)
    budget = cfg[f"stage{stage}_budget"]

    prev_winner = None
    if stage >= 2:
        prev_winner = _load_winner_genotype(_stage_artifacts(out, stage - 1)[0])

    frozen, _ = warmup.load_handle(_require(out / "supernet.ckpt"),
                                   mode=warmup.FROZEN)
    if stage in (1, 2):
        handle, scoring = frozen, None
    else:
        # stage 3: warm the supernet again, activated, then multi-task tune
        activated, _ = warmup.load_handle(out / "supernet.ckpt",
                                          mode=warmup.ACTIVATED)
        activated.stage = "stage3"
        if cfg["stage3_warm_pretrain_steps"]:
            stream = datamod.mlm_batches(
                corpus, train.MASK_PROB, cfg["supernet_batch"],
                np.random.default_rng([cfg["seed"], 51]), epochs=10_000)

            def lazy():
                for _ in range(cfg["stage3_warm_pretrain_steps"]):
                    ids, _p, _o = next(stream)
                    yield train.CachedBatch(ids=ids, labels=None,
                                            teacher=teacher.forward(ids))
            from .optim import AdamState
            kd0 = replace(activated.kd_cfg, gamma=0.0)
            opt = AdamState(activated.model.trainable() + kd0.trainable(),
                            cfg["lr_pretrain"], cfg["stage3_warm_pretrain_steps"])
            train.kd_pretrain_steps(activated.model, lazy(), kd0, opt)
        warmup.multitask_finetune(activated, teacher, tasks,
                                  cfg["stage3_multitask_steps"],
                                  batch=cfg["proxy_batch"],
                                  lr=cfg["lr_finetune_search"],
                                  seed=cfg["seed"])
        handle, scoring = activated, frozen

    best, records = searchmod.run_stage(
        stage, handle, teacher, corpus, tasks, budget, cfg["seed"],
        prev_winner=prev_winner, scoring_handle=scoring, budgets=budgets,
        sampler_cfg=_sampler_cfg(cfg),
        space=gt.SearchSpaceDef(layers=cfg["student_layers"],
                                max_nodes=cfg["max_nodes"]),
        shared_lr=cfg["lr_finetune_search"],
        cost_penalty=cfg["cost_penalty"])

    winner_path, log_path = _stage_artifacts(out, stage)
    _write_json(winner_path, {
        "stage": stage, "genotype": best.genotype.to_dict(),
        "proxy_score": best.proxy_score, "cost": best.cost.to_dict()}, cfg)
    _write_jsonl(log_path, [r.to_dict() for r in records], cfg)

    if stage == 3:
        warmup.save_handle(out / "supernet_mt.ckpt", handle,
                           extra_meta={"provenance": _provenance(cfg)})
        winners = {}
        for s in (1, 2, 3):
            wp = _stage_artifacts(out, s)[0]
            winners[f"stage{s}"] = json.loads(wp.read_text())["proxy_score"]
        _write_json(out / "final_report.json", {
            "stage_winners": winners,
            "tau_report": None,
            "budgets": {f"stage{s}": cfg[f"stage{s}_budget"] for s in (1, 2, 3)},
            "seeds": [cfg["seed"]]}, cfg)
    print(f"stage {stage} best proxy score: {best.proxy_score:.6f} "
          f"({len(records)} candidates)")
    return 0


def cmd_retrain(cfg, out, plus=False):
    _verify_fixture_hashes(out, cfg)
    teacher, _ = load_model(_require(out / "teacher.ckpt"))
    corpus, tasks = _make_data(cfg)
    genotype_ = _load_winner_genotype(_stage_artifacts(out, 3)[0])
    donor = "supernet_mt.ckpt" if plus else "supernet.ckpt"
    handle, _ = warmup.load_handle(_require(out / donor), mode=warmup.FROZEN)
    per_task, accs, student = searchmod.retrain_score(
        handle, teacher, corpus, tasks, genotype_,
        budgets=_budgets(cfg), seed=cfg["seed"],
        scale=cfg["retrain_scale"], pretrain=not plus)
    name = "retrained_plus" if plus else "retrained"
    save_model(out / f"{name}.ckpt", student,
               extra_meta={"provenance": _provenance(cfg),
                           "variant": "plus" if plus else "plain"})
    _write_json(out / f"{name}_eval.json",
                {"per_task_score": per_task, "holdout_accuracy": accs,
                 "variant": "plus" if plus else "plain"}, cfg)
    print(f"{name}:",
          " ".join(f"{k}={v:.3f}" for k, v in accs.items()))
    return 0


def cmd_eval(cfg, out, ckpt=None):
    _verify_fixture_hashes(out, cfg)
    path = _require(ckpt or (out / "retrained.ckpt"))
    model, _meta = load_model(path)
    _corpus, tasks = _make_data(cfg)
    report = {}
    for t in tasks:
        if f"head.{t.task_id}.w" not in model.params:
            continue
        report[t.task_id] = {"holdout_accuracy": train.accuracy(model, t, t.task_id)}
    _write_json(out / "eval.json", {"checkpoint": str(path), "tasks": report}, cfg)
    print("eval:", " ".join(f"{k}={v['holdout_accuracy']:.3f}"
                            for k, v in report.items()))
    return 0


def cmd_cost(cfg, out, genotype_path=None, seq_len=None):
    scfg = _student_cfg(cfg)
    if genotype_path is not None:
        g = gt.deserialize(Path(_require(genotype_path)).read_text())
        scfg = scfg.with_genotype(g)
    L = seq_len or cfg["max_len"]
    rows = []
    for li, spec in enumerate(scfg.genotype.layers):
        rows.append({
            "layer": li,
            "params_mha": costmod.mha_layer_params(scfg.hidden),
            "params_ffn": costmod.ffn_layer_params(spec, scfg.hidden, scfg.d_ref),
            "mult_adds_mha": costmod.mha_layer_mult_adds(scfg.hidden, L),
            "mult_adds_ffn": costmod.ffn_layer_mult_adds(spec, scfg.hidden,
                                                         scfg.d_ref, L),
        })
    report = costmod.genotype_cost(scfg, scfg.genotype, L)
    path = out / "cost.csv"
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
        total = {k: sum(r[k] for r in rows) for k in rows[0] if k != "layer"}
        total["layer"] = "total"
        writer.writerow(total)
    _write_json(out / "cost.meta.json", {"totals": report.to_dict(),
                                         "seq_len": L}, cfg)
    print(f"cost table written to {path}")
    return 0


def cmd_nonlin_surface(cfg, out, genotype_path=None):
    if genotype_path is not None:
        g = gt.deserialize(Path(_require(genotype_path)).read_text())
    else:
        winner = _stage_artifacts(out, 3)[0]
        if winner.exists():
            g = _load_winner_genotype(winner)
        else:
            g = gt.baseline_genotype(cfg["student_layers"])
    rows = surfmod.nonlinearity_surface(g, cfg["student_d_ref"],
                                        resolution=cfg["surface_resolution"])
    surfmod.write_surface_csv(out / "surface.csv", rows)
    _write_json(out / "surface.meta.json", {
        "rows": int(rows.shape[0]),
        "flagged": int(rows[:, 3].sum()),
        "resolution": cfg["surface_resolution"]}, cfg)
    print(f"surface: {rows.shape[0]} cells, {int(rows[:, 3].sum())} flagged")
    return 0


def cmd_rankcorr(cfg, out):
    _verify_fixture_hashes(out, cfg)
    teacher, _ = load_model(_require(out / "teacher.ckpt"))
    corpus, tasks = _make_data(cfg)
    handle, _ = warmup.load_handle(_require(out / "supernet.ckpt"),
                                   mode=warmup.FROZEN)
    space = gt.SearchSpaceDef(layers=cfg["student_layers"],
                              max_nodes=cfg["max_nodes"])
    runs = []
    for s in range(cfg["rankcorr_seeds"]):
        seed = cfg["seed"] + s
        rng = np.random.default_rng([seed, 61])
        candidates = [gt.sample_uniform(space, rng)
                      for _ in range(cfg["rankcorr_candidates"])]
        report = searchmod.rank_correlation_study(
            candidates, handle, teacher, corpus, tasks,
            budgets=_budgets(cfg), seed=seed)
        report["seed"] = seed
        runs.append(report)
    overall = [r["overall"] for r in runs]
    payload = {
        "runs": runs,
        "overall_taus": overall,
        "positive_fraction": float(np.mean([t > 0 for t in overall])),
    }
    _write_json(out / "rankcorr.json", payload, cfg)

    final = out / "final_report.json"
    if final.exists():
        report = json.loads(final.read_text())
        report["tau_report"] = {"overall_taus": overall,
                                "positive_fraction": payload["positive_fraction"]}
        report["seeds"] = sorted(set(report.get("seeds", []))
                                 | {cfg["seed"] + s
                                    for s in range(cfg["rankcorr_seeds"])})
        final.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    print("rankcorr overall taus:", " ".join(f"{t:+.3f}" for t in overall))
    return 0


def cmd_transform(cfg, out, genotype_path, double_depth, hidden):
    g = gt.deserialize(Path(_require(genotype_path)).read_text())
    if double_depth:
        g = gt.double_depth(g)
    path = out / "transformed_genotype.json"
    path.write_text(gt.serialize(g) + "\n")
    suggestion = {"student_layers": len(g.layers)}
    if hidden:
        suggestion["student_hidden"] = hidden
    _write_json(out / "transformed_config.json", {"suggest": suggestion}, cfg)
    print(f"transformed genotype with {len(g.layers)} layers -> {path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="ffnas", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out-dir", default="runs/default",
                       help="artifact directory")

    for name in ("train-teacher", "pretrain-supernet", "rankcorr"):
        common(sub.add_parser(name))

    p = sub.add_parser("search")
    common(p)
    p.add_argument("--stage", type=int, required=True, choices=(1, 2, 3))

    p = sub.add_parser("retrain")
    common(p)
    p.add_argument("--plus", action="store_true",
                   help="inherit from the multi-task supernet; skip pretraining")

    p = sub.add_parser("eval")
    common(p)
    p.add_argument("--checkpoint", help="model to evaluate "
                   "(default: <out-dir>/retrained.ckpt)")

    p = sub.add_parser("cost")
    common(p)
    p.add_argument("--genotype", help="genotype JSON file (default baseline)")
    p.add_argument("--seq-len", type=int, help="sequence length for Mult-Adds")

    p = sub.add_parser("nonlin-surface")
    common(p)
    p.add_argument("--genotype", help="genotype JSON file "
                   "(default: stage-3 winner, else baseline)")

    p = sub.add_parser("transform")
    common(p)
    p.add_argument("--genotype", required=True)
    p.add_argument("--double-depth", action="store_true")
    p.add_argument("--hidden", type=int,
                   help="suggested hidden size for the deeper model")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config, args.set, args.seed)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "train-teacher":
            return cmd_train_teacher(cfg, out)
        if args.command == "pretrain-supernet":
            return cmd_pretrain_supernet(cfg, out)
        if args.command == "search":
            return cmd_search(cfg, out, args.stage)
        if args.command == "retrain":
            return cmd_retrain(cfg, out, plus=args.plus)
        if args.command == "eval":
            return cmd_eval(cfg, out, args.checkpoint)
        if args.command == "cost":
            return cmd_cost(cfg, out, args.genotype, args.seq_len)
        if args.command == "nonlin-surface":
            return cmd_nonlin_surface(cfg, out, args.genotype)
        if args.command == "rankcorr":
            return cmd_rankcorr(cfg, out)
        if args.command == "transform":
            return cmd_transform(cfg, out, args.genotype,
                                 args.double_depth, args.hidden)
        raise AssertionError(args.command)
    except MissingArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FfnasError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
