"""Kernel backend selection.

The hot per-step loops (Table-1 elementwise primitives, softmax, layer norm,
Adam updates) exist twice: numba @njit kernels and pure-numpy fallbacks with
identical semantics. ``FFNAS_KERNELS=numpy`` or ``FFNAS_KERNELS=numba``
forces a backend; the default is numba when importable, else numpy.
Matrix products always go through numpy/BLAS.

``benchmarks/bench_kernels.py`` times the two backends side by side.
"""

import os

_requested = os.environ.get("FFNAS_KERNELS", "").strip().lower()

if _requested not in ("", "numpy", "numba"):
    raise ValueError(
        f"FFNAS_KERNELS must be 'numpy' or 'numba', got {_requested!r}"
    )

if _requested == "numpy":
    from . import numpy_ops as _impl
elif _requested == "numba":
    from . import numba_ops as _impl
else:
    try:
        from . import numba_ops as _impl
    except ImportError:
        from . import numpy_ops as _impl

BACKEND = _impl.BACKEND

C1 = _impl.C1
C2 = _impl.C2
C3 = _impl.C3
C4 = _impl.C4

gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
sigmoid_fwd = _impl.sigmoid_fwd
sigmoid_bwd = _impl.sigmoid_bwd
tanh_fwd = _impl.tanh_fwd
tanh_bwd = _impl.tanh_bwd
relu_fwd = _impl.relu_fwd
relu_bwd = _impl.relu_bwd
leaky_relu_fwd = _impl.leaky_relu_fwd
leaky_relu_bwd = _impl.leaky_relu_bwd
elu_fwd = _impl.elu_fwd
elu_bwd = _impl.elu_bwd
swish_fwd = _impl.swish_fwd
swish_bwd = _impl.swish_bwd
max_fwd = _impl.max_fwd
max_bwd = _impl.max_bwd
softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
log_softmax_fwd = _impl.log_softmax_fwd
log_softmax_bwd = _impl.log_softmax_bwd
layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd
adam_update = _impl.adam_update
