"""Named-parameter archives.

A checkpoint is a zip holding `index.json` plus one raw binary entry per
parameter: little-endian float64, row-major. Writing is deterministic
(stored entries, fixed timestamps, sorted names) so identical parameters
produce byte-identical files, and round-trips are bit-exact.
"""

from __future__ import annotations

import json
import zipfile

import numpy as np

from .errors import InputError

_EPOCH = (1980, 1, 1, 0, 0, 0)
FORMAT_VERSION = 1


def save_archive(path, named_values, meta=None):
    """Write {name: ndarray} to `path`; `meta` lands in the JSON index."""
    names = sorted(named_values)
    index = {
        "format": FORMAT_VERSION,
        "dtype": "<f8",
        "meta": meta or {},
        "params": [],
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for i, name in enumerate(names):
            arr = np.asarray(named_values[name], dtype=np.float64)
            entry = f"p{i:05d}.bin"
            index["params"].append(
                {"name": name, "dims": list(arr.shape), "entry": entry})
            zf.writestr(zipfile.ZipInfo(entry, date_time=_EPOCH),
                        np.ascontiguousarray(arr).astype("<f8").tobytes())
        payload = json.dumps(index, sort_keys=True, indent=1)
        zf.writestr(zipfile.ZipInfo("index.json", date_time=_EPOCH), payload)


def load_archive(path):
    """Read a checkpoint; returns ({name: ndarray}, meta)."""
    with zipfile.ZipFile(path, "r") as zf:
        try:
            index = json.loads(zf.read("index.json"))
        except KeyError:
            raise InputError(f"{path}: not a checkpoint archive (no index.json)")
        if index.get("format") != FORMAT_VERSION:
            raise InputError(f"{path}: unsupported archive format {index.get('format')}")
        out = {}
        for rec in index["params"]:
            raw = zf.read(rec["entry"])
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            out[rec["name"]] = arr.reshape(rec["dims"]).copy()
    return out, index.get("meta", {})
