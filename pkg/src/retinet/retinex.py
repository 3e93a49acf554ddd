"""Classical Retinex decomposition: threshold the log-gradients, reintegrate.

Large log-image derivatives are attributed to reflectance changes and the
remainder to shading. Reflectance is recovered from its gradients by a
least-squares (Poisson) solve using the same forward-difference stencil as
:func:`retinet.imaging.gradient`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .imaging import GradientField, IntrinsicSet, as_image, derive_shading, forward_differences

LOG_CLAMP = 1e-4


class PoissonConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RetinexParams:
    threshold: float = 0.075
    use_chromaticity: bool = False
    solver_tol: float = 1e-6
    solver_max_iters: int = 10_000

    def __post_init__(self):
        if self.threshold < 0:
            raise DomainError("threshold must be >= 0")
        if self.solver_tol <= 0:
            raise DomainError("solver_tol must be > 0")
        if self.solver_max_iters < 1:
            raise DomainError("solver_max_iters must be >= 1")


@dataclass
class PoissonSolution:
    image: np.ndarray
    iterations: int
    residual: float
    converged: bool


def log_image(I) -> np.ndarray:
    return np.log(np.maximum(as_image(I).astype(np.float64), LOG_CLAMP))


def _field(gx, gy) -> GradientField:
    return GradientField(gx, gy, np.sqrt(gx * gx + gy * gy))


def classification_masks(I, params: RetinexParams) -> tuple[np.ndarray, np.ndarray]:
    """Boolean ``(H, W)`` masks marking x- and y-derivatives classed as reflectance."""
    logI = log_image(I)
    if params.use_chromaticity:
        mean_c = np.mean(np.maximum(as_image(I).astype(np.float64), LOG_CLAMP), axis=2, keepdims=True)
        stat_src = logI - np.log(mean_c)
    else:
        stat_src = logI
    sx, sy = forward_differences(stat_src)
    mx = np.max(np.abs(sx), axis=2) > params.threshold
    my = np.max(np.abs(sy), axis=2) > params.threshold
    return mx, my


def classify_gradients(I, params: RetinexParams = RetinexParams()) -> tuple[GradientField, GradientField]:
    """Split log-image gradients into reflectance and shading parts.

    The two returned fields sum exactly to the log-image gradient.
    """
    gx, gy = forward_differences(log_image(I))
    mx, my = classification_masks(I, params)
    mx, my = mx[:, :, None], my[:, :, None]
    refl = _field(np.where(mx, gx, 0.0), np.where(my, gy, 0.0))
    shad = _field(np.where(mx, 0.0, gx), np.where(my, 0.0, gy))
    return refl, shad


def _grad_op(f):
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[:, :-1] = f[:, 1:] - f[:, :-1]
    gy[:-1, :] = f[1:, :] - f[:-1, :]
    return gx, gy


def _div_op(gx, gy):
    """Adjoint of the forward-difference operator (so ``_div_op(*_grad_op(f)) = -lap f``)."""
    out = np.zeros_like(gx)
    out[:, :-1] -= gx[:, :-1]
    out[:, 1:] += gx[:, :-1]
    out[:-1, :] -= gy[:-1, :]
    out[1:, :] += gy[:-1, :]
    return out


def _normal_op(f):
    return _div_op(*_grad_op(f))


def poisson_reintegrate(gx, gy, tol: float = 1e-6, max_iters: int = 10_000) -> PoissonSolution:
    """Least-squares potential for a single-channel gradient field.

    Minimises ``|Dx f - gx|^2 + |Dy f - gy|^2`` with Neumann boundaries by
    conjugate gradients on the normal equations; the free constant is fixed by
    requiring zero mean. The last column of ``gx`` and last row of ``gy`` are
    ignored, matching the forward-difference boundary convention.
    """
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.ndim == 3:
        if gx.shape[2] != 1:
            raise DimensionError("poisson_reintegrate takes one channel per call")
        gx, gy = gx[:, :, 0], gy[:, :, 0] if gy.ndim == 3 else gy
    if gx.shape != gy.shape or gx.ndim != 2:
        raise DimensionError(f"gx {gx.shape} and gy {gy.shape} must be matching 2-D arrays")

    b = _div_op(gx, gy)
    f = np.zeros_like(b)
    r = b.copy()
    b_norm = float(np.sqrt(np.dot(b.ravel(), b.ravel())))
    if b_norm == 0.0:
        return PoissonSolution(f[:, :, None], 0, 0.0, True)
    p = r.copy()
    rr = float(np.dot(r.ravel(), r.ravel()))
    it = 0
    rel = np.sqrt(rr) / b_norm
    while rel > tol and it < max_iters:
        Ap = _normal_op(p)
        alpha = rr / float(np.dot(p.ravel(), Ap.ravel()))
        f += alpha * p
        r -= alpha * Ap
        rr_new = float(np.dot(r.ravel(), r.ravel()))
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        rel = np.sqrt(rr) / b_norm
    f -= f.mean()
    converged = rel <= tol
    if not converged:
        warnings.warn(
            f"Poisson solve stopped at {it} iterations with relative residual {rel:.3g}",
            PoissonConvergenceWarning, stacklevel=2)
    return PoissonSolution(f[:, :, None], it, float(rel), converged)


def retinex_decompose(I, params: RetinexParams = RetinexParams()) -> IntrinsicSet:
    """Reflectance from the reintegrated reflectance gradients, shading by division."""
    I = as_image(I)
    refl, _ = classify_gradients(I, params)
    log_r = np.empty(I.shape, dtype=np.float64)
    iters = []
    for c in range(I.shape[2]):
        sol = poisson_reintegrate(refl.gx[:, :, c], refl.gy[:, :, c],
                                  params.solver_tol, params.solver_max_iters)
        log_r[:, :, c] = sol.image[:, :, 0]
        iters.append(sol.iterations)
    if I.shape[2] > 1:
        # each channel is only known up to its own constant; give reflectance
        # the image's mean log colour so the shading is achromatic on average
        log_r += log_image(I).mean(axis=(0, 1))
    R = np.exp(log_r)
    R /= R.max()
    R = R.astype(I.dtype)
    S = derive_shading(I, R)
    return IntrinsicSet(R, S, meta={"solver_iterations": iters})
