from .tensor import (
    NonFiniteError,
    Tensor,
    cat,
    check_finite,
    is_grad_enabled,
    l2_normalize,
    no_grad,
    stack_rows,
)
from .layers import (
    ACTIVATIONS,
    INIT_SCHEME,
    BatchNorm,
    GRUCell,
    LayerNorm,
    Linear,
    MLP,
    Module,
    ModuleList,
    Parameter,
    as_input,
    concat_inputs,
)
from .optim import AdamW, clip_grad_norm, ema_update
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ACTIVATIONS",
    "AdamW",
    "BatchNorm",
    "GRUCell",
    "INIT_SCHEME",
    "LayerNorm",
    "Linear",
    "MLP",
    "Module",
    "ModuleList",
    "NonFiniteError",
    "Parameter",
    "Tensor",
    "as_input",
    "cat",
    "check_finite",
    "clip_grad_norm",
    "concat_inputs",
    "ema_update",
    "is_grad_enabled",
    "l2_normalize",
    "load_checkpoint",
    "no_grad",
    "save_checkpoint",
    "stack_rows",
]
