"""Archive format: bit-exact round trips, deterministic bytes."""

import hashlib

import numpy as np
import pytest

from ffnas.checkpoint import load_archive, save_archive
from ffnas.errors import InputError


def test_bit_exact_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    named = {
        "layer0/w": rng.normal(size=(7, 5)),
        "layer0/b": rng.normal(size=5),
        "scalarish": np.array([np.pi, -0.0, 1e-308, 1e308]),
    }
    path = tmp_path / "m.ckpt"
    save_archive(path, named, meta={"stage": "test", "mode": "frozen"})
    loaded, meta = load_archive(path)
    assert meta == {"stage": "test", "mode": "frozen"}
    assert set(loaded) == set(named)
    for k in named:
        assert loaded[k].dtype == np.float64
        assert loaded[k].shape == named[k].shape
        np.testing.assert_array_equal(loaded[k], named[k])
        # bit-exactness, not just value equality
        assert loaded[k].tobytes() == named[k].astype("<f8").tobytes()


def test_identical_params_identical_bytes(tmp_path):
    rng = np.random.default_rng(1)
    named = {"a": rng.normal(size=(3, 3)), "b": rng.normal(size=4)}
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_archive(p1, named, meta={"k": 1})
    save_archive(p2, {k: v.copy() for k, v in named.items()}, meta={"k": 1})
    h1 = hashlib.sha256(p1.read_bytes()).hexdigest()
    h2 = hashlib.sha256(p2.read_bytes()).hexdigest()
    assert h1 == h2


def test_non_archive_rejected(tmp_path):
    p = tmp_path / "junk.ckpt"
    import zipfile
    with zipfile.ZipFile(p, "w") as zf:
        zf.writestr("other.bin", b"xx")
    with pytest.raises(InputError):
        load_archive(p)


def test_model_roundtrip(tmp_path):
    from ffnas.model import Model, load_model, save_model, student_config
    cfg = student_config(vocab=32, max_len=8, hidden=8, heads=2,
                         embed_factor=4, d_ref=8)
    m = Model.build(cfg, seed=3)
    m.add_task_head("t0", 3, seed=4)
    save_model(tmp_path / "m.ckpt", m)
    loaded, meta = load_model(tmp_path / "m.ckpt")
    assert meta["heads"] == {"t0": 3}
    for k, t in m.params.items():
        np.testing.assert_array_equal(loaded.params[k].values, t.values)
    ids = np.array([[2, 3, 4, 5]])
    a = m.forward(ids, head="t0")
    b = loaded.forward(ids, head="t0")
    np.testing.assert_array_equal(a.logits.values, b.logits.values)
