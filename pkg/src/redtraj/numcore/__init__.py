from . import tensor as ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, numeric_grad, relative_error
from .nn import Dropout, Embedding, LayerNorm, Linear, Module, xavier_uniform
from .optim import AdamW, adamw_step
from .tensor import (
    Parameter,
    Tensor,
    backward,
    concat,
    cross_entropy,
    get_default_dtype,
    matmul,
    masked_fill,
    scale,
    set_debug,
    set_default_dtype,
    sin,
    softmax,
    softmax_rows,
    transpose,
)

__all__ = [
    "AdamW", "Dropout", "Embedding", "LayerNorm", "Linear", "Module", "Parameter", "Tensor",
    "adamw_step", "backward", "concat", "cross_entropy", "get_default_dtype", "grad_check",
    "load_checkpoint", "masked_fill", "matmul", "numeric_grad", "ops", "relative_error",
    "save_checkpoint", "scale", "set_debug", "set_default_dtype", "sin", "softmax", "softmax_rows", "transpose",
    "xavier_uniform",
]
