"""Differentiable ops on ``(N, C, H, W)`` tensors.

Convolutions are cross-correlations evaluated with im2col and one matrix
product; their backward passes reuse the same gather/scatter helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, DomainError
from .tensor import Tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Gather patches of a padded ``(C, N, Hp, Wp)`` array into ``(C, k, k, N, Ho, Wo)``."""
    c, n = xp.shape[:2]
    cols = np.empty((c, k, k, n, ho, wo), dtype=xp.dtype)
    span_h = stride * (ho - 1) + 1
    span_w = stride * (wo - 1) + 1
    for ki in range(k):
        for kj in range(k):
            cols[:, ki, kj] = xp[:, :, ki:ki + span_h:stride, kj:kj + span_w:stride]
    return cols


def _col2im(cols: np.ndarray, shape, k: int, stride: int) -> np.ndarray:
    """Scatter-add ``(C, k, k, N, Ho, Wo)`` patches into a padded ``(C, N, Hp, Wp)`` array."""
    ho, wo = cols.shape[4:]
    out = np.zeros(shape, dtype=cols.dtype)
    span_h = stride * (ho - 1) + 1
    span_w = stride * (wo - 1) + 1
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki:ki + span_h:stride, kj:kj + span_w:stride] += cols[:, ki, kj]
    return out


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _cm(x: np.ndarray) -> np.ndarray:
    """``(N, C, H, W)`` to channel-major ``(C, N, H, W)``."""
    return x.transpose(1, 0, 2, 3)


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded cross-correlation; weights are ``(Cout, Cin, k, k)``."""
    x, w = _t(x), _t(w)
    n, c, h, wd = x.shape
    cout, cin, k, k2 = w.shape
    if cin != c or k != k2:
        raise DimensionError(f"conv2d: input has {c} channels, weights expect {cin}")
    ho, wo = conv_out_size(h, k, stride, padding), conv_out_size(wd, k, stride, padding)
    xp = _pad(_cm(x.data), padding)
    cols = _im2col(xp, k, stride, ho, wo).reshape(c * k * k, n * ho * wo)
    wmat = w.data.reshape(cout, c * k * k)
    out = wmat @ cols
    if b is not None:
        b = _t(b)
        out += b.data[:, None]
    out = np.ascontiguousarray(_cm(out.reshape(cout, n, ho, wo)))

    def backward(g):
        gT = np.ascontiguousarray(_cm(g)).reshape(cout, n * ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            dcols = (wmat.T @ gT).reshape(c, k, k, n, ho, wo)
            dxp = _col2im(dcols, xp.shape, k, stride)
            gx = _cm(dxp[:, :, padding:padding + h, padding:padding + wd])
        if w.requires_grad:
            gw = (gT @ cols.T).reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = gT.sum(axis=1)
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return Tensor.from_op(out, parents, backward, "conv2d")


def conv3x3(x, w, b=None, stride: int = 1) -> Tensor:
    """3x3 convolution with padding 1; output size is ``ceil(in / stride)``."""
    if stride not in (1, 2):
        raise DomainError(f"conv3x3 supports stride 1 or 2, got {stride}")
    if _t(w).shape[2:] != (3, 3):
        raise DimensionError(f"conv3x3 needs 3x3 weights, got {_t(w).shape}")
    return conv2d(x, w, b, stride=stride, padding=1)


def conv_transpose2d(x, w, b=None, stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed convolution (adjoint of :func:`conv2d`); weights are ``(Cin, Cout, k, k)``."""
    x, w = _t(x), _t(w)
    n, c, h, wd = x.shape
    cin, cout, k, k2 = w.shape
    if cin != c or k != k2:
        raise DimensionError(f"deconv: input has {c} channels, weights expect {cin}")
    hp, wp = (h - 1) * stride + k, (wd - 1) * stride + k
    xT = np.ascontiguousarray(_cm(x.data)).reshape(c, n * h * wd)
    wmat = w.data.reshape(cin, cout * k * k)
    cols = (wmat.T @ xT).reshape(cout, k, k, n, h, wd)
    full = _col2im(cols, (cout, n, hp, wp), k, stride)
    out = full[:, :, padding:hp - padding, padding:wp - padding]
    if b is not None:
        b = _t(b)
        out = out + b.data[:, None, None, None]
    out = np.ascontiguousarray(_cm(out))

    def backward(g):
        gp = _pad(_cm(g), padding)
        gcols = _im2col(gp, k, stride, h, wd).reshape(cout * k * k, n * h * wd)
        gx = gw = gb = None
        if x.requires_grad:
            gx = _cm((wmat @ gcols).reshape(c, n, h, wd))
        if w.requires_grad:
            gw = (xT @ gcols.T).reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return Tensor.from_op(out, parents, backward, "conv_transpose2d")


def deconv4x4_s2(x, w, b=None) -> Tensor:
    """4x4 transposed convolution, stride 2, padding 1: doubles height and width."""
    if _t(w).shape[2:] != (4, 4):
        raise DimensionError(f"deconv4x4_s2 needs 4x4 weights, got {_t(w).shape}")
    return conv_transpose2d(x, w, b, stride=2, padding=1)


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batchnorm(x, gamma, beta, state: BatchNormState, training: bool = True) -> Tensor:
    """Per-channel batch normalisation followed by an affine map.

    Training mode normalises with the biased batch variance and updates the
    running statistics in ``state``; eval mode uses the running statistics.
    """
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm affine parameters must have shape ({c},)")
    shape = (1, c, 1, 1)
    if training:
        m = n * h * w
        if m == 1:
            raise DomainError("batchnorm in training mode needs more than one value per channel")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        mom = state.momentum
        state.running_mean = ((1 - mom) * state.running_mean + mom * mean).astype(state.running_mean.dtype)
        unbiased = var * (m / (m - 1))
        state.running_var = ((1 - mom) * state.running_var + mom * unbiased).astype(state.running_var.dtype)
    else:
        mean = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)
    invstd = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(shape)) * invstd.reshape(shape)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def backward(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(shape)
            if training:
                m = n * h * w
                s1 = dxhat.sum(axis=(0, 2, 3)).reshape(shape)
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(shape)
                gx = (invstd.reshape(shape) / m) * (m * dxhat - s1 - xhat * s2)
            else:
                gx = dxhat * invstd.reshape(shape)
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), backward, "batchnorm")


def relu(x) -> Tensor:
    x = _t(x)
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype)
    return Tensor.from_op(out, (x,), lambda g: (g * mask,), "relu")


def concat_c(inputs) -> Tensor:
    """Concatenate along channels; backward splits the gradient back."""
    inputs = [_t(t) for t in inputs]
    if not inputs:
        raise DimensionError("concat_c needs at least one tensor")
    if len(inputs) == 1:
        return inputs[0]
    ref = inputs[0].shape
    for t in inputs[1:]:
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise DimensionError(f"concat_c: {t.shape} does not match {ref} outside channels")
    bounds = np.cumsum([0] + [t.shape[1] for t in inputs])
    out = np.concatenate([t.data for t in inputs], axis=1)

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(inputs)))

    return Tensor.from_op(out, inputs, backward, "concat_c")


def slice_c(x, start: int, stop: int) -> Tensor:
    x = _t(x)
    out = x.data[:, start:stop]

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return Tensor.from_op(np.ascontiguousarray(out), (x,), backward, "slice_c")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


def _check_broadcastable(a, b, op):
    if len(a.shape) != len(b.shape):
        raise DimensionError(f"{op}: rank mismatch {a.shape} vs {b.shape}")
    for sa, sb in zip(a.shape, b.shape):
        if sa != sb and 1 not in (sa, sb):
            raise DimensionError(f"{op}: cannot broadcast {a.shape} with {b.shape}")


def mul_elem(a, b) -> Tensor:
    """Element-wise product; size-1 axes broadcast (e.g. gray shading, global light)."""
    a, b = _t(a), _t(b)
    _check_broadcastable(a, b, "mul_elem")
    out = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), backward, "mul_elem")


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcastable(a, b, "add")
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), backward, "add")


def scale(x, c: float) -> Tensor:
    x = _t(x)
    return Tensor.from_op(x.data * x.dtype.type(c), (x,), lambda g: (g * x.dtype.type(c),), "scale")


def mse_loss(pred, target) -> Tensor:
    """Mean of squared differences over every element."""
    pred, target = _t(pred), _t(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray(np.sum(diff * diff) / n, dtype=pred.dtype)

    def backward(g):
        d = (2.0 / n) * g * diff
        return d, -d

    return Tensor.from_op(out, (pred, target), backward, "mse_loss")
