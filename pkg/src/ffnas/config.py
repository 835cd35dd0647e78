"""Flat run configuration: schema-validated keys, file plus flag overrides."""

from __future__ import annotations

import json
import subprocess
from pathlib import Path

from .errors import ConfigError

# name -> (type, default)
SCHEMA = {
    "seed": (int, 0),

    # teacher dimensions
    "teacher_layers": (int, 4),
    "teacher_hidden": (int, 64),
    "teacher_heads": (int, 4),
    "teacher_embed_factor": (int, 16),
    "teacher_d_ref": (int, 256),

    # student / supernet dimensions
    "student_layers": (int, 2),
    "student_hidden": (int, 32),
    "student_heads": (int, 4),
    "student_embed_factor": (int, 8),
    "student_d_ref": (int, 32),

    "vocab": (int, 512),
    "max_len": (int, 32),
    "seq_len": (int, 16),
    "max_nodes": (int, 8),

    # data
    "corpus_size": (int, 1200),
    "task_size": (int, 800),
    "task_split": (float, 0.8),

    # teacher training
    "teacher_pretrain_steps": (int, 300),
    "teacher_finetune_steps": (int, 1500),
    "teacher_batch": (int, 16),

    # supernet warm-up
    "supernet_pretrain_steps": (int, 500),
    "supernet_batch": (int, 8),
    "stage3_warm_pretrain_steps": (int, 120),
    "stage3_multitask_steps": (int, 90),

    # candidate scoring (proxy)
    "proxy_pretrain_steps": (int, 12),
    "proxy_finetune_steps": (int, 24),
    "proxy_holdout_batches": (int, 6),
    "proxy_batch": (int, 8),

    # learning rates
    "lr_pretrain": (float, 1e-4),
    "lr_finetune_search": (float, 4e-4),
    "lr_finetune_retrain": (float, 5e-5),

    # stage budgets
    "stage1_budget": (int, 50),
    "stage2_budget": (int, 30),
    "stage3_budget": (int, 30),
    "cost_penalty": (float, 0.0),

    # sampler tree
    "sampler_depth": (int, 4),
    "sampler_leaf_capacity": (int, 10),
    "sampler_ucb_c": (float, 0.5),
    "sampler_retries": (int, 100),

    # retraining / analysis
    "retrain_scale": (int, 3),
    "rankcorr_candidates": (int, 8),
    "rankcorr_seeds": (int, 5),
    "surface_resolution": (int, 100),
}


def default_config():
    return {k: v for k, (_t, v) in SCHEMA.items()}


def _coerce(key, value):
    typ, _default = SCHEMA[key]
    try:
        if typ is int:
            if isinstance(value, float) and value != int(value):
                raise ValueError("not an integer")
            return int(value)
        if typ is float:
            return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config key {key}: {value!r} is not {typ.__name__} ({e})")
    return value


def load_config(path=None, overrides=None, seed=None):
    """Defaults, then the JSON file, then key=value overrides; unknown keys
    and type mismatches are schema violations."""
    cfg = default_config()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path}: invalid JSON at char {e.pos}")
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path}: top level must be an object")
        for k, v in data.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key {k!r}")
            cfg[k] = _coerce(k, v)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        if k not in SCHEMA:
            raise ConfigError(f"unknown config key {k!r}")
        typ, _d = SCHEMA[k]
        try:
            cfg[k] = _coerce(k, typ(v) if typ is not int else int(v, 0))
        except (TypeError, ValueError):
            raise ConfigError(f"override {k}: {v!r} is not {typ.__name__}")
    if seed is not None:
        cfg["seed"] = int(seed)
    if cfg["teacher_heads"] != cfg["student_heads"]:
        raise ConfigError(
            "teacher_heads must equal student_heads (attention maps are "
            "distilled head by head)")
    for side in ("teacher", "student"):
        if cfg[f"{side}_hidden"] % cfg[f"{side}_heads"]:
            raise ConfigError(f"{side}_hidden must be divisible by {side}_heads")
    return cfg


_VERSION_CACHE = None


def version_string():
    """Package version with a git-describe suffix when available."""
    global _VERSION_CACHE
    if _VERSION_CACHE is None:
        base = "ffnas-0.1.0"
        try:
            rev = subprocess.run(
                ["git", "-C", str(Path(__file__).resolve().parent), "describe",
                 "--always", "--dirty"],
                capture_output=True, text=True, timeout=5)
            if rev.returncode == 0 and rev.stdout.strip():
                base = f"{base}+g{rev.stdout.strip()}"
        except (OSError, subprocess.SubprocessError):
            pass
        _VERSION_CACHE = base
    return _VERSION_CACHE
