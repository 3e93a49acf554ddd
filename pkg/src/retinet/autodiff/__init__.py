"""A small reverse-mode autodiff engine for convolutional encoder-decoders."""

from .functional import (
    BatchNormState, add, batchnorm, concat_c, conv2d, conv3x3, conv_transpose2d,
    deconv4x4_s2, mse_loss, mul_elem, relu, scale, slice_c,
)
from .init import init_he, init_normal
from .optim import LrSchedule, poly_lr, sgd_step
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "BatchNormState", "LrSchedule", "Parameter", "Tensor", "add", "batchnorm",
    "concat_c", "conv2d", "conv3x3", "conv_transpose2d", "deconv4x4_s2",
    "init_he", "init_normal", "mse_loss", "mul_elem", "no_grad", "poly_lr",
    "relu", "scale", "sgd_step", "slice_c",
]
