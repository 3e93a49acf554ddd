"""Batch gradient features for RetiNet (same stencil as ``imaging.gradient``)."""

from __future__ import annotations

import numpy as np


def batch_differences(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    gx[..., :, :-1] = x[..., :, 1:] - x[..., :, :-1]
    gy[..., :-1, :] = x[..., 1:, :] - x[..., :-1, :]
    return gx, gy


def gradient_features(x: np.ndarray, mode: str = "magnitude") -> np.ndarray:
    """Per-channel gradient maps of an ``(N, C, H, W)`` batch.

    ``magnitude`` gives C channels; ``signed`` gives 2C channels (all gx, then all gy).
    """
    gx, gy = batch_differences(x)
    if mode == "magnitude":
        return np.sqrt(gx * gx + gy * gy)
    if mode == "signed":
        return np.concatenate([gx, gy], axis=1)
    raise ValueError(f"unknown gradient mode {mode!r}")
