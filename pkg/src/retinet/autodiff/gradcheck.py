"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def _scalarize(out: Tensor, proj: np.ndarray) -> float:
    return float(np.sum(out.data * proj))


def gradient_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
                   rng: np.random.Generator, eps: float = 1e-6,
                   wrt: Sequence[int] | None = None) -> float:
    """Largest relative error between analytic and numeric gradients.

    ``fn`` maps tensors to a tensor; it is reduced to a scalar by a fixed
    random projection. The error for each input is
    ``max|analytic - numeric| / max(max|analytic|, max|numeric|)``.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    wrt = range(len(arrays)) if wrt is None else wrt
    tensors = [Tensor(a.copy(), requires_grad=i in wrt) for i, a in enumerate(arrays)]
    out = fn(*tensors)
    proj = rng.standard_normal(out.shape) if out.data.ndim else np.array(1.0)
    out.backward(proj)

    worst = 0.0
    for i in wrt:
        analytic = tensors[i].grad if tensors[i].grad is not None else np.zeros_like(arrays[i])
        numeric = np.zeros_like(arrays[i])
        flat = arrays[i].reshape(-1)
        nflat = numeric.reshape(-1)
        with no_grad():
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                plus = _scalarize(fn(*[Tensor(a) for a in arrays]), proj)
                flat[j] = orig - eps
                minus = _scalarize(fn(*[Tensor(a) for a in arrays]), proj)
                flat[j] = orig
                nflat[j] = (plus - minus) / (2 * eps)
        scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
        worst = max(worst, float(np.max(np.abs(analytic - numeric)) / scale))
    return worst
