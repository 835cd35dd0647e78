"""Backend parity and determinism of the hot kernels."""

import numpy as np
import pytest

from ffnas.kernels import numba_ops, numpy_ops

UNARY = ["gelu", "sigmoid", "tanh", "relu", "leaky_relu", "elu", "swish"]


@pytest.fixture
def arrays():
    rng = np.random.default_rng(7)
    return rng.normal(0.0, 2.0, 4096), rng.normal(0.0, 1.0, 4096)


@pytest.mark.parametrize("name", UNARY)
def test_unary_parity(name, arrays):
    x, g = arrays
    y_nb = getattr(numba_ops, f"{name}_fwd")(x)
    y_np = getattr(numpy_ops, f"{name}_fwd")(x)
    # libm vs numpy ufuncs differ by ulps at most
    np.testing.assert_allclose(y_nb, y_np, rtol=1e-12, atol=1e-14)
    src = y_np if name in ("sigmoid", "tanh") else x
    b_nb = getattr(numba_ops, f"{name}_bwd")(src, g)
    b_np = getattr(numpy_ops, f"{name}_bwd")(src, g)
    np.testing.assert_allclose(b_nb, b_np, rtol=1e-11, atol=1e-13)


def test_max_parity_and_ties(arrays):
    x, g = arrays
    y = x.copy()
    y[::3] = x[::3]  # force exact ties
    for ops in (numba_ops, numpy_ops):
        gx, gy = ops.max_bwd(x, y, g)
        tie = x == y
        np.testing.assert_array_equal(gx[tie], 0.5 * g[tie])
        np.testing.assert_array_equal(gy[tie], 0.5 * g[tie])
        np.testing.assert_array_equal(gx + gy, g)
    np.testing.assert_array_equal(numba_ops.max_fwd(x, y), numpy_ops.max_fwd(x, y))


def test_rowwise_parity():
    rng = np.random.default_rng(3)
    x = rng.normal(0.0, 3.0, (64, 24))
    g = rng.normal(size=(64, 24))
    np.testing.assert_allclose(numba_ops.softmax_fwd(x), numpy_ops.softmax_fwd(x),
                               rtol=1e-12, atol=1e-15)
    y = numpy_ops.softmax_fwd(x)
    np.testing.assert_allclose(numba_ops.softmax_bwd(y, g),
                               numpy_ops.softmax_bwd(y, g), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(numba_ops.log_softmax_fwd(x),
                               numpy_ops.log_softmax_fwd(x), rtol=1e-12, atol=1e-13)
    gamma = rng.normal(size=24)
    beta = rng.normal(size=24)
    ya, ma, ra = numba_ops.layer_norm_fwd(x, gamma, beta, 1e-12)
    yb, mb, rb = numpy_ops.layer_norm_fwd(x, gamma, beta, 1e-12)
    np.testing.assert_allclose(ya, yb, rtol=1e-11, atol=1e-12)
    for u, v in zip(numba_ops.layer_norm_bwd(x, gamma, ma, ra, g),
                    numpy_ops.layer_norm_bwd(x, gamma, mb, rb, g)):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-11)


def test_adam_parity_and_views():
    rng = np.random.default_rng(5)
    p0 = rng.normal(size=(12, 10))
    g = rng.normal(size=(12, 10))
    args = (1e-3, 0.9, 0.999, 1e-8, 0.01, 0.1, 1e-3)
    pa, ma, va = p0.copy(), np.zeros_like(p0), np.zeros_like(p0)
    pb, mb, vb = p0.copy(), np.zeros_like(p0), np.zeros_like(p0)
    numba_ops.adam_update(pa, g, ma, va, *args)
    numpy_ops.adam_update(pb, g, mb, vb, *args)
    np.testing.assert_allclose(pa, pb, rtol=1e-13, atol=1e-15)

    # strided views update in place without touching the rest
    for ops in (numba_ops, numpy_ops):
        p = p0.copy()
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        ops.adam_update(p[:6, :4], g[:6, :4], m[:6, :4], v[:6, :4], *args)
        np.testing.assert_array_equal(p[6:, :], p0[6:, :])
        np.testing.assert_array_equal(p[:, 4:], p0[:, 4:])
        assert not np.array_equal(p[:6, :4], p0[:6, :4])


@pytest.mark.parametrize("ops", [numba_ops, numpy_ops])
def test_within_backend_determinism(ops):
    rng = np.random.default_rng(11)
    x = rng.normal(size=2048)
    a = ops.gelu_fwd(x)
    b = ops.gelu_fwd(x.copy())
    np.testing.assert_array_equal(a, b)


def test_overflow_yields_inf_not_crash():
    big = np.array([-1e6, 1e6, 0.0])
    for ops in (numba_ops, numpy_ops):
        assert np.isfinite(ops.sigmoid_fwd(big)).all()
        y = ops.elu_fwd(big)
        assert y[0] == -1.0 and y[1] == 1e6


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_env_flag_selects_backend(backend):
    import os
    import subprocess
    import sys
    out = subprocess.run(
        [sys.executable, "-c",
         "from ffnas import kernels; print(kernels.BACKEND)"],
        env={**os.environ, "FFNAS_KERNELS": backend},
        capture_output=True, text=True, timeout=120)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == backend


def test_env_flag_rejects_unknown_backend():
    import os
    import subprocess
    import sys
    out = subprocess.run(
        [sys.executable, "-c", "import ffnas.kernels"],
        env={**os.environ, "FFNAS_KERNELS": "fortran"},
        capture_output=True, text=True, timeout=120)
    assert out.returncode != 0
    assert "FFNAS_KERNELS" in out.stderr
