"""Command-line surface: exit codes, config schema, artifact contents."""

import json
from pathlib import Path

import pytest

from ffnas import cli
from ffnas import genotype as gt
from ffnas.config import default_config, load_config
from ffnas.errors import ConfigError

SMALL = {
    "vocab": 64, "seq_len": 8, "max_len": 16,
    "teacher_layers": 2, "teacher_hidden": 32, "teacher_heads": 2,
    "teacher_embed_factor": 8, "teacher_d_ref": 128,
    "student_layers": 2, "student_hidden": 16, "student_heads": 2,
    "student_embed_factor": 4, "student_d_ref": 16,
    "corpus_size": 200, "task_size": 80,
    "teacher_pretrain_steps": 8, "teacher_finetune_steps": 6, "teacher_batch": 8,
    "supernet_pretrain_steps": 6, "supernet_batch": 4,
    "stage3_warm_pretrain_steps": 3, "stage3_multitask_steps": 3,
    "proxy_pretrain_steps": 2, "proxy_finetune_steps": 3,
    "proxy_holdout_batches": 1, "proxy_batch": 4,
    "stage1_budget": 3, "stage2_budget": 2, "stage3_budget": 2,
    "retrain_scale": 1, "rankcorr_candidates": 3, "rankcorr_seeds": 1,
    "surface_resolution": 8,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    cfg_path = out / "small.json"
    cfg_path.write_text(json.dumps(SMALL))
    return out, str(cfg_path)


def run(workdir, *args):
    out, cfg_path = workdir
    return cli.main([*args, "--config", cfg_path, "--out-dir", str(out)])


class TestConfig:
    def test_defaults_complete(self):
        cfg = default_config()
        assert cfg["lr_pretrain"] == 1e-4
        assert cfg["lr_finetune_search"] == 4e-4
        assert cfg["lr_finetune_retrain"] == 5e-5

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"no_such_key": 1}')
        with pytest.raises(ConfigError):
            load_config(p)

    def test_type_mismatch_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"stage1_budget": "many"}')
        with pytest.raises(ConfigError):
            load_config(p)

    def test_overrides_apply(self):
        cfg = load_config(None, ["stage1_budget=7", "lr_pretrain=0.01"])
        assert cfg["stage1_budget"] == 7 and cfg["lr_pretrain"] == 0.01

    def test_bad_override_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, ["stage1_budget"])
        with pytest.raises(ConfigError):
            load_config(None, ["wat=1"])

    def test_head_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, ["teacher_heads=8"])


class TestExitCodes:
    def test_schema_violation_exits_3(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"junk": true}')
        assert cli.main(["cost", "--config", str(p),
                         "--out-dir", str(tmp_path)]) == 3

    def test_missing_upstream_exits_2(self, tmp_path):
        assert cli.main(["search", "--stage", "1",
                         "--out-dir", str(tmp_path / "empty")]) == 2

    def test_stage2_without_stage1_winner_exits_2(self, workdir, tmp_path):
        out, cfg_path = workdir
        fresh = tmp_path / "fresh"
        assert cli.main(["search", "--stage", "2", "--config", cfg_path,
                         "--out-dir", str(fresh)]) == 2


class TestPipeline:
    def test_full_pipeline(self, workdir):
        out, _cfg = workdir
        assert run(workdir, "train-teacher") == 0
        assert (out / "teacher.ckpt").exists()
        assert (out / "corpus.jsonl").exists()
        assert (out / "data_hashes.json").exists()

        assert run(workdir, "pretrain-supernet") == 0
        meta = json.loads(__import__("zipfile").ZipFile(
            out / "supernet.ckpt").read("index.json"))["meta"]
        assert meta["mode"] == "frozen"

        for stage in ("1", "2", "3"):
            assert run(workdir, "search", "--stage", stage) == 0
            assert (out / f"stage{stage}_winner.json").exists()
            assert (out / f"stage{stage}_log.jsonl").exists()
        assert (out / "supernet_mt.ckpt").exists()
        report = json.loads((out / "final_report.json").read_text())
        assert set(report["stage_winners"]) == {"stage1", "stage2", "stage3"}

        assert run(workdir, "retrain") == 0
        assert run(workdir, "retrain", "--plus") == 0
        assert run(workdir, "eval") == 0
        assert run(workdir, "nonlin-surface") == 0
        rows = (out / "surface.csv").read_text().splitlines()
        assert len(rows) == 1 + SMALL["surface_resolution"] ** 2
        assert run(workdir, "rankcorr") == 0
        report = json.loads((out / "final_report.json").read_text())
        assert report["tau_report"] is not None

    def test_winner_jsonl_logs_have_meta_line(self, workdir):
        out, _ = workdir
        lines = (out / "stage1_log.jsonl").read_text().splitlines()
        meta = json.loads(lines[0])["meta"]
        assert "version" in meta and "config" in meta
        assert json.loads(lines[1])["stage"] == 1

    def test_artifacts_embed_config_and_version(self, workdir):
        out, _ = workdir
        for name in ("stage1_winner.json", "eval.json", "rankcorr.json"):
            body = json.loads((out / name).read_text())
            assert body["version"].startswith("ffnas-")
            assert body["config"]["vocab"] == SMALL["vocab"]

    def test_reruns_reproduce_byte_identical_jsonl(self, workdir, tmp_path):
        out, cfg_path = workdir
        copy = tmp_path / "rerun"
        copy.mkdir()
        for name in ("teacher.ckpt", "supernet.ckpt", "data_hashes.json"):
            (copy / name).write_bytes((out / name).read_bytes())
        assert cli.main(["search", "--stage", "1", "--config", cfg_path,
                         "--out-dir", str(copy)]) == 0
        assert ((copy / "stage1_log.jsonl").read_bytes()
                == (out / "stage1_log.jsonl").read_bytes())
        assert ((copy / "stage1_winner.json").read_bytes()
                == (out / "stage1_winner.json").read_bytes())

    def test_fixture_hash_guard(self, workdir, tmp_path):
        out, cfg_path = workdir
        drifted = json.loads(Path(cfg_path).read_text())
        drifted["corpus_size"] = 999
        p = tmp_path / "drift.json"
        p.write_text(json.dumps(drifted))
        code = cli.main(["pretrain-supernet", "--config", str(p),
                         "--out-dir", str(out)])
        assert code == 3


class TestCost:
    def test_paper_dims_rows(self, tmp_path):
        cfg = dict(SMALL)
        cfg.update({"student_layers": 1, "student_hidden": 768,
                    "student_heads": 2, "teacher_heads": 2,
                    "student_d_ref": 3072, "max_len": 128})
        p = tmp_path / "paper.json"
        p.write_text(json.dumps(cfg))
        assert cli.main(["cost", "--config", str(p),
                         "--out-dir", str(tmp_path)]) == 0
        lines = (tmp_path / "cost.csv").read_text().splitlines()
        header = lines[0].split(",")
        row = dict(zip(header, lines[1].split(",")))
        assert row["params_mha"] == "2362368"
        assert row["params_ffn"] == "4722432"
        assert row["mult_adds_mha"] == "314572800"


class TestTransform:
    def test_double_depth(self, tmp_path):
        g = gt.baseline_genotype(2)
        src = tmp_path / "g.json"
        src.write_text(gt.serialize(g))
        assert cli.main(["transform", "--genotype", str(src), "--double-depth",
                         "--hidden", "12", "--out-dir", str(tmp_path)]) == 0
        doubled = gt.deserialize((tmp_path / "transformed_genotype.json").read_text())
        assert len(doubled.layers) == 4
        suggestion = json.loads((tmp_path / "transformed_config.json").read_text())
        assert suggestion["suggest"] == {"student_layers": 4, "student_hidden": 12}
