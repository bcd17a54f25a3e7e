"""Matrix primitives, reverse-mode differentiation, losses, optimizers."""

from .checkpoint import load_checkpoint, save_checkpoint
from .optim import OptimizerState, adam_state, adam_step, gd_state, gd_step
from .tensor import (
    ShapeError,
    Tensor,
    add,
    add_constant,
    add_rowvec,
    backward,
    concat_cols,
    concat_rows,
    cross_entropy,
    gather_rows,
    layer_norm,
    matmul,
    mul,
    mul_colvec,
    relu,
    scale,
    sigmoid,
    slice_rows,
    softmax_rows,
    sub,
    sum_all,
    transpose,
    zero_grad,
)

__all__ = [
    "ShapeError",
    "Tensor",
    "OptimizerState",
    "add",
    "add_constant",
    "add_rowvec",
    "adam_state",
    "adam_step",
    "backward",
    "concat_cols",
    "concat_rows",
    "cross_entropy",
    "gather_rows",
    "gd_state",
    "gd_step",
    "layer_norm",
    "load_checkpoint",
    "matmul",
    "mul",
    "mul_colvec",
    "relu",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "slice_rows",
    "softmax_rows",
    "sub",
    "sum_all",
    "transpose",
    "zero_grad",
]
