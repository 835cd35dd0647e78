"""FFN nonlinearity surfaces.

Probe protocol: the input embedding is the 2-d point (x, y) itself, MHA is
removed, every layer normalization becomes the per-position mean, and every
linear carries weight 1 / bias 0. The surface value is the mean of the last
layer's output. Overflow is possible by construction (all-ones linears keep
growing values), so non-finite cells are flagged rather than fatal.
"""

from __future__ import annotations

import numpy as np

from . import genotype as gt
from . import kernels

GRID_LO = -15.0
GRID_HI = 5.0

_UNARY_FWD = {
    "GeLU": kernels.gelu_fwd,
    "Sigmoid": kernels.sigmoid_fwd,
    "Tanh": kernels.tanh_fwd,
    "ReLU": kernels.relu_fwd,
    "LeakyReLU": kernels.leaky_relu_fwd,
    "ELU": kernels.elu_fwd,
    "Swish": kernels.swish_fwd,
}


def _apply_math(op, args):
    if op == "Add":
        return args[0] + args[1]
    if op == "Mul":
        return args[0] * args[1]
    if op == "Max":
        return np.maximum(args[0], args[1])
    a = np.ascontiguousarray(args[0])
    return _UNARY_FWD[op](a.reshape(-1)).reshape(a.shape)


def _ones_linear(x, out_w):
    # all-ones weight, zero bias: every output channel is the input sum
    s = x.sum(axis=1, keepdims=True)
    return np.repeat(s, out_w, axis=1)


def probe_forward(genotype, d_ref, points):
    """Evaluate the probe network at `points` (N, 2); returns z of shape (N,)."""
    v = np.asarray(points, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for spec in genotype.layers:
            widths, err = gt.node_widths(spec, 2, d_ref)
            if err is not None:
                raise ValueError(err)
            cur = v
            for _ in range(spec.stack):
                vals = []
                for i, node in enumerate(spec.nodes):
                    if node.kind == "input":
                        vals.append(cur)
                    elif node.kind == "linear":
                        vals.append(_ones_linear(vals[node.pred[0]], widths[i]))
                    else:
                        vals.append(_apply_math(node.op, [vals[p] for p in node.pred]))
                cur = vals[spec.output]
            u = v + cur
            m = u.mean(axis=1, keepdims=True)
            v = np.repeat(m, 2, axis=1)
        return v.mean(axis=1)


def nonlinearity_surface(genotype, d_ref, resolution=100, lo=GRID_LO, hi=GRID_HI):
    """Z over the uniform (x, y) grid; rows are (x, y, z, flag), row-major in x."""
    axis = np.linspace(lo, hi, resolution)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1)
    z = probe_forward(genotype, d_ref, pts)
    flag = (~np.isfinite(z)).astype(np.int64)
    return np.column_stack([pts[:, 0], pts[:, 1], z, flag.astype(np.float64)])


def write_surface_csv(path, rows):
    with open(path, "w") as f:
        f.write("x,y,z,flag\n")
        for x, y, z, flag in rows:
            f.write(f"{float(x)!r},{float(y)!r},{float(z)!r},{int(flag)}\n")


def read_surface_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data
