from .tensor import (
    NonFinite,
    NotScalar,
    ShapeMismatch,
    Tensor,
    absolute,
    backward,
    bmm,
    elu,
    matmul,
    relu,
    stack_cols,
    take_per_row,
)
from .layers import (
    MixerSpec,
    MlpSpec,
    mixer_forward,
    mixer_infer,
    mixer_init,
    mlp_forward,
    mlp_infer,
    mlp_init,
    sum_mixer,
    sum_mixer_infer,
)
from .optim import OptimizerState, optimizer_init, optimizer_step, zero_grads
from .params import load_params, save_params

__all__ = [
    "NonFinite", "NotScalar", "ShapeMismatch", "Tensor",
    "absolute", "backward", "bmm", "elu", "matmul", "relu",
    "stack_cols", "take_per_row",
    "MixerSpec", "MlpSpec", "mixer_forward", "mixer_infer", "mixer_init",
    "mlp_forward", "mlp_infer", "mlp_init", "sum_mixer", "sum_mixer_infer",
    "OptimizerState", "optimizer_init", "optimizer_step", "zero_grads",
    "load_params", "save_params",
]
