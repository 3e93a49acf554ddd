"""Weight initialisers. All draws come from an explicit numpy Generator."""

from __future__ import annotations

import numpy as np


def init_he(shape, fan_in: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Zero-mean normal with std ``sqrt(2 / fan_in)``."""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


def init_normal(shape, mean: float, std: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    return rng.normal(mean, std, size=shape).astype(dtype)
