from .tensor import (
    Tensor,
    add,
    as_tensor,
    clip,
    concat,
    exp,
    grad_enabled,
    log,
    matmul,
    minimum,
    mul,
    no_grad,
    relu,
    reshape,
    silu,
    softplus,
    square,
    sub,
    tanh,
    tmean,
    tsum,
)
from .net import ParamStore, init_mlp, mlp_forward, mlp_forward_np
from .adam import AdamState, adam_step
from .checkpoint import load_params, save_params

__all__ = [
    "AdamState",
    "ParamStore",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "clip",
    "concat",
    "exp",
    "grad_enabled",
    "init_mlp",
    "load_params",
    "log",
    "matmul",
    "minimum",
    "mlp_forward",
    "mlp_forward_np",
    "mul",
    "no_grad",
    "relu",
    "reshape",
    "save_params",
    "silu",
    "softplus",
    "square",
    "sub",
    "tanh",
    "tmean",
    "tsum",
]
