"""Small numpy tensor library with a reverse-mode tape and Adam."""
from monodream.nncore.tensor import (
    InvalidTarget,
    NonFiniteGradient,
    NotScalarLoss,
    ShapeMismatch,
    Tape,
    Tensor,
    as_tensor,
    backward,
    default_dtype,
    no_grad,
    set_default_dtype,
)
from monodream.nncore import ops
from monodream.nncore.ops import cross_entropy, mse
from monodream.nncore.optim import Adam, AdamState, adam_step, warmup_lr
from monodream.nncore.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from monodream.nncore.gradcheck import gradcheck, numeric_grad, relative_error

__all__ = [
    "Tensor", "Tape", "backward", "no_grad", "as_tensor", "ops", "cross_entropy", "mse",
    "Adam", "AdamState", "adam_step", "warmup_lr", "save_checkpoint", "load_checkpoint",
    "gradcheck", "numeric_grad", "relative_error", "ShapeMismatch", "NotScalarLoss", "InvalidTarget",
    "NonFiniteGradient", "CheckpointError", "set_default_dtype", "default_dtype",
]
