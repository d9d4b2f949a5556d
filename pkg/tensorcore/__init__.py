"""
Минимальный движок автоматического дифференцирования
Reverse-mode autodiff over float64 numpy arrays, Adam and checkpoints
"""
from tensorcore.tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat_cols,
    concat_rows,
    conv1d_valid,
    cross_entropy,
    custom_op,
    detach,
    dropout,
    exp,
    gather_rows,
    layer_norm,
    log,
    log_softmax_rows,
    logsumexp,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    scale,
    segment_logsumexp,
    softmax_rows,
    stop_gradient,
    sub,
    sum,
    take,
    transpose,
)
from tensorcore.optim import ParameterRegistry, adam_step, clip_grad_norm
from tensorcore.gradcheck import finite_diff_check
from tensorcore.checkpoint import load_arrays, load_checkpoint, save_arrays, save_checkpoint
