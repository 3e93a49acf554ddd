"""Training losses built from the engine's MSE and element-wise product.

Terms are always summed left to right in the order written here, so the
full-reflection-model loss collapses to the diffuse loss bit-for-bit when
its extra terms vanish.
"""

from __future__ import annotations

from ..autodiff.functional import add, mse_loss, mul_elem, scale
from ..autodiff.tensor import Tensor
from .config import LossWeights


def loss_cl(R_hat, R, S_hat, S, weights: LossWeights = LossWeights()) -> Tensor:
    """Weighted reflectance and shading reconstruction losses."""
    return add(scale(mse_loss(R_hat, R), weights.gamma_R), scale(mse_loss(S_hat, S), weights.gamma_S))


def loss_imf(R_hat, S_hat, I, gamma_imf: float = 1.0) -> Tensor:
    """Penalise predictions whose product does not reproduce the input."""
    return scale(mse_loss(mul_elem(R_hat, S_hat), I), gamma_imf)


def loss_fl(R_hat, R, S_hat, S, I, weights: LossWeights = LossWeights()) -> Tensor:
    return add(loss_cl(R_hat, R, S_hat, S, weights), loss_imf(R_hat, S_hat, I, weights.gamma_IMF))


def loss_frm(R_hat, R, S_hat, S, H_hat, H, E_hat, E, I,
             weights: LossWeights = LossWeights()) -> Tensor:
    """Loss for body + specular reflection under a colored light.

    ``E_hat``/``E`` may be per-pixel ``(N, 3, H, W)`` or global ``(N, 3, 1, 1)``.
    """
    total = loss_cl(R_hat, R, S_hat, S, weights)
    total = add(total, scale(mse_loss(H_hat, H), weights.gamma_H))
    total = add(total, scale(mse_loss(E_hat, E), weights.gamma_E))
    recon = add(mul_elem(mul_elem(R_hat, S_hat), E_hat), mul_elem(H_hat, E_hat))
    return add(total, scale(mse_loss(recon, I), weights.gamma_IMF))


def loss_s1(gR_hat, gR, gS_hat, gS, weights: LossWeights = LossWeights()) -> Tensor:
    """Stage-1 loss: the combined loss applied to intrinsic gradient maps."""
    return loss_cl(gR_hat, gR, gS_hat, gS, weights)
