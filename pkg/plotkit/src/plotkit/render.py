"""The four plot kinds over the documented export schemas.

surface      surface.csv           columns x,y,z,flag (flagged cells omitted)
tradeoff     stageN_log.jsonl      proxy_score vs cost.params_total
losscurve    *_log.jsonl           total vs step, one line per phase/task
rankscatter  rankcorr.json         proxy vs final_overall, tau annotated

Input schemas are checked before any drawing; a mismatch raises SchemaError
naming the missing columns or keys. Rendering is deterministic for
identical input and style.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("surface", "tradeoff", "losscurve", "rankscatter")


class SchemaError(Exception):
    """Input file does not match the plot kind's expected schema."""


@dataclass
class PlotJob:
    input_path: str
    kind: str
    output_path: str
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown plot kind {self.kind!r}; "
                              f"expected one of {KINDS}")


def _style(job, key, default):
    return job.style.get(key, default)


def _read_jsonl(path):
    records = []
    meta = None
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if "meta" in obj and len(obj) == 1:
            meta = obj["meta"]
        else:
            records.append(obj)
    return records, meta


def _new_figure(job, default_size):
    fig = plt.figure(figsize=_style(job, "figsize", default_size),
                     dpi=_style(job, "dpi", 100))
    return fig


def _save(fig, job):
    fig.savefig(job.output_path, format=_style(job, "format", "png"))
    plt.close(fig)


def _render_surface(job):
    path = Path(job.input_path)
    header = path.read_text().splitlines()[0].strip()
    expected = "x,y,z,flag"
    if header != expected:
        raise SchemaError(f"surface csv header is {header!r}, "
                          f"expected {expected!r}")
    data = np.genfromtxt(path, delimiter=",", names=True)
    x, y, z = data["x"], data["y"], data["flag"] * np.nan + data["z"]
    keep = data["flag"] == 0
    z = np.where(keep, data["z"], np.nan)

    xs = np.unique(x)
    ys = np.unique(y)
    if xs.size * ys.size != x.size:
        raise SchemaError("surface csv is not a full rectangular grid")
    zz = z.reshape(xs.size, ys.size)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")

    fig = _new_figure(job, (7, 6))
    ax = fig.add_subplot(111, projection="3d")
    ax.plot_surface(xx, yy, np.ma.masked_invalid(zz),
                    cmap=_style(job, "cmap", "viridis"),
                    linewidth=0, antialiased=True)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    ax.set_title(_style(job, "title", "FFN nonlinearity surface"))
    _save(fig, job)
    return {"output": job.output_path, "cells": int(x.size),
            "omitted": int((~keep).sum())}


def _render_tradeoff(job):
    records, _meta = _read_jsonl(job.input_path)
    if not records:
        raise SchemaError("tradeoff input has no candidate records")
    missing = [k for k in ("proxy_score", "cost") if k not in records[0]]
    if missing:
        raise SchemaError(f"tradeoff records lack fields: {missing}")
    cost_key = _style(job, "cost_key", "params_total")
    if cost_key not in records[0]["cost"]:
        raise SchemaError(f"cost records lack {cost_key!r}; have "
                          f"{sorted(records[0]['cost'])}")
    xs = [r["cost"][cost_key] for r in records]
    ys = [r["proxy_score"] for r in records]

    fig = _new_figure(job, (6, 4.5))
    ax = fig.add_subplot(111)
    ax.scatter(xs, ys, s=28, alpha=0.8, edgecolor="black", linewidth=0.4)
    ax.set_xlabel(cost_key)
    ax.set_ylabel("proxy score")
    ax.set_title(_style(job, "title", "score vs cost"))
    ax.grid(True, alpha=0.3)
    _save(fig, job)
    return {"output": job.output_path, "points": len(xs)}


def _series_key(record):
    for key in ("series", "task", "phase"):
        if key in record:
            return str(record[key])
    return "loss"


def _render_losscurve(job):
    records, _meta = _read_jsonl(job.input_path)
    if not records:
        raise SchemaError("losscurve input has no records")
    missing = [k for k in ("step", "total") if k not in records[0]]
    if missing:
        raise SchemaError(f"losscurve records lack fields: {missing}")
    series = {}
    for r in records:
        series.setdefault(_series_key(r), []).append((r["step"], r["total"]))

    fig = _new_figure(job, (6, 4.5))
    ax = fig.add_subplot(111)
    for name in sorted(series):
        pts = series[name]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(_style(job, "title", "training loss"))
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, job)
    return {"output": job.output_path, "series": sorted(series)}


def _render_rankscatter(job):
    data = json.loads(Path(job.input_path).read_text())
    run = data
    if "runs" in data:  # rankcorr.json holds several seeds; take the first
        if not data["runs"]:
            raise SchemaError("rankscatter input has an empty runs list")
        run = data["runs"][int(_style(job, "run_index", 0))]
    missing = [k for k in ("points", "overall") if k not in run]
    if missing:
        raise SchemaError(f"rankscatter input lacks keys: {missing}")
    pts = run["points"]
    if not pts or "proxy" not in pts[0] or "final_overall" not in pts[0]:
        raise SchemaError("rankscatter points need proxy and final_overall")

    xs = [p["proxy"] for p in pts]
    ys = [p["final_overall"] for p in pts]
    # the annotation must reproduce the input's bytes for tau exactly
    annotation = f"tau = {json.dumps(run['overall'])}"

    fig = _new_figure(job, (5.5, 5))
    ax = fig.add_subplot(111)
    ax.scatter(xs, ys, s=34, edgecolor="black", linewidth=0.4)
    ax.set_xlabel("search-phase proxy score")
    ax.set_ylabel("retrain-phase score")
    ax.set_title(_style(job, "title", "search vs retrain ranking"))
    ax.text(0.05, 0.95, annotation, transform=ax.transAxes,
            va="top", fontsize=11)
    ax.grid(True, alpha=0.3)
    _save(fig, job)
    return {"output": job.output_path, "points": len(pts),
            "annotation": annotation}


_RENDERERS = {
    "surface": _render_surface,
    "tradeoff": _render_tradeoff,
    "losscurve": _render_losscurve,
    "rankscatter": _render_rankscatter,
}


def render(job):
    """Render one job; returns a small result dict (output path, counts,
    and the annotation string for rankscatter)."""
    if not Path(job.input_path).exists():
        raise SchemaError(f"input file not found: {job.input_path}")
    return _RENDERERS[job.kind](job)
