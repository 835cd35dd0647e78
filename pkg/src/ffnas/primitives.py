"""The searchable elementwise operation set.

Three binary aggregations (Add, Mul, Max) and seven unary activations, with
the constants c1=0.5, c2=sqrt(2/pi), c3=0.044715, c4=0.01 used by GeLU and
LeakyReLU.
"""

from . import kernels, tensor
from .errors import ArityError

C1 = kernels.C1
C2 = kernels.C2
C3 = kernels.C3
C4 = kernels.C4

_UNARY = {
    "GeLU": tensor.gelu,
    "Sigmoid": tensor.sigmoid,
    "Tanh": tensor.tanh,
    "ReLU": tensor.relu,
    "LeakyReLU": tensor.leaky_relu,
    "ELU": tensor.elu,
    "Swish": tensor.swish,
}

_BINARY = {
    "Add": tensor.add,
    "Mul": tensor.mul,
    "Max": tensor.maximum,
}

ARITY = {name: 1 for name in _UNARY}
ARITY.update({name: 2 for name in _BINARY})

PRIMITIVE_NAMES = tuple(sorted(ARITY))
UNARY_NAMES = tuple(sorted(_UNARY))
BINARY_NAMES = tuple(sorted(_BINARY))


def arity(op_id):
    try:
        return ARITY[op_id]
    except KeyError:
        raise ArityError(f"unknown primitive {op_id!r}") from None


def apply_primitive(op_id, *inputs):
    """Apply a Table-style primitive to 1 or 2 tensors, taping the backward rule."""
    n = arity(op_id)
    if len(inputs) != n:
        raise ArityError(f"{op_id} takes {n} input(s), got {len(inputs)}")
    if n == 1:
        return _UNARY[op_id](inputs[0])
    return _BINARY[op_id](inputs[0], inputs[1])
