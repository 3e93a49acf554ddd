"""Stateful layer wrappers around the functional ops."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .init import init_he, init_normal
from .tensor import Parameter, Tensor


class Module:
    training = True

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield f"{name}.{i}", v

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        """Non-trainable state (batch-norm running statistics) as ``(name, holder, attr)``."""
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.momentum_buffer = p.momentum_buffer.astype(dtype)
        for _, holder, attr in self.named_buffers():
            setattr(holder, attr, getattr(holder, attr).astype(dtype))
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv3x3(Module):
    def __init__(self, cin: int, cout: int, stride: int = 1, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.weight = Parameter(init_he((cout, cin, 3, 3), cin * 9, rng, dtype), "weight")
        self.bias = Parameter(np.zeros(cout, dtype=dtype), "bias")

    def forward(self, x: Tensor) -> Tensor:
        return F.conv3x3(x, self.weight, self.bias, self.stride)


class Deconv4x4(Module):
    """Stride-2 upsampling. ``normal_init`` draws weights from N(0, 1) instead of He."""

    def __init__(self, cin: int, cout: int, rng=None, normal_init: bool = False, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        shape = (cin, cout, 4, 4)
        if normal_init:
            w = init_normal(shape, 0.0, 1.0, rng, dtype)
        else:
            # each output pixel sees cin * 2 * 2 taps at stride 2
            w = init_he(shape, cin * 4, rng, dtype)
        self.weight = Parameter(w, "weight")
        self.bias = Parameter(np.zeros(cout, dtype=dtype), "bias")

    def forward(self, x: Tensor) -> Tensor:
        return F.deconv4x4_s2(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, dtype=np.float32):
        self.gamma = Parameter(np.ones(channels, dtype=dtype), "gamma")
        self.beta = Parameter(np.zeros(channels, dtype=dtype), "beta")
        self.state = F.BatchNormState.fresh(channels, dtype)

    def named_buffers(self, prefix: str = ""):
        yield prefix + "running_mean", self.state, "running_mean"
        yield prefix + "running_var", self.state, "running_var"

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm(x, self.gamma, self.beta, self.state, self.training)


class ConvBNReLU(Module):
    def __init__(self, cin: int, cout: int, stride: int = 1, rng=None,
                 batchnorm: bool = True, dtype=np.float32):
        self.conv = Conv3x3(cin, cout, stride, rng, dtype)
        self.bn = BatchNorm2d(cout, dtype) if batchnorm else None

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        if self.bn is not None:
            y = self.bn(y)
        return F.relu(y)
