"""Images, intrinsic components and the image formation equations.

Images are numpy arrays laid out ``(height, width, channels)`` holding
linear-light floats. Single-channel images may also be passed as 2-D arrays;
every function here returns 3-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import DimensionError, DomainError

DEFAULT_EPSILON = 1e-4


def as_image(a) -> np.ndarray:
    """Return ``a`` as a float ``(H, W, C)`` array without copying when possible."""
    arr = np.asarray(a)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DimensionError(f"expected a 2-D or 3-D image, got shape {arr.shape}")
    return arr


def check_valid(img: np.ndarray, what: str = "image") -> np.ndarray:
    """Enforce the storage invariant: finite and non-negative everywhere."""
    img = as_image(img)
    if not np.all(np.isfinite(img)):
        raise DomainError(f"{what} contains non-finite values")
    if np.any(img < 0):
        raise DomainError(f"{what} contains negative values")
    return img


def _check_broadcast(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise DimensionError(f"{what}: spatial shapes differ, {a.shape[:2]} vs {b.shape[:2]}")
    ca, cb = a.shape[2], b.shape[2]
    if ca != cb and 1 not in (ca, cb):
        raise DimensionError(f"{what}: cannot broadcast {ca} channels against {cb}")


def _illuminant(E, like: np.ndarray) -> np.ndarray:
    arr = np.asarray(E, dtype=like.dtype if like.dtype.kind == "f" else np.float64)
    if arr.ndim == 1 or (arr.ndim == 3 and arr.shape[:2] == (1, 1)):
        arr = arr.reshape(1, 1, -1)
        if arr.shape[2] != 3:
            raise DimensionError(f"global illuminant needs 3 channels, got {arr.shape[2]}")
        if np.any(arr <= 0):
            raise DomainError(f"global illuminant channels must be positive, got {arr.ravel().tolist()}")
        return arr
    arr = as_image(arr)
    _check_broadcast(like, arr, "illuminant")
    return arr


def is_global_illuminant(E) -> bool:
    arr = np.asarray(E)
    return arr.ndim == 1 or (arr.ndim == 3 and arr.shape[:2] == (1, 1))


@dataclass
class IntrinsicSet:
    """Intrinsic components of one image.

    ``illuminant`` is either a per-pixel ``(H, W, 3)`` image or a global RGB
    triple. ``meta`` carries bookkeeping such as padding applied at inference.
    """

    reflectance: np.ndarray
    shading: np.ndarray
    specular: np.ndarray | None = None
    illuminant: Any = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.reflectance = as_image(self.reflectance)
        self.shading = as_image(self.shading)
        _check_broadcast(self.reflectance, self.shading, "shading")
        if self.specular is not None:
            self.specular = as_image(self.specular)
            _check_broadcast(self.reflectance, self.specular, "specular")
        if self.illuminant is not None:
            self.illuminant = _illuminant(self.illuminant, self.reflectance)

    @property
    def shape(self) -> tuple[int, int]:
        return self.reflectance.shape[:2]

    def compose(self) -> np.ndarray:
        """Image implied by the components, using the fullest applicable equation."""
        if self.specular is not None:
            return compose_specular(self.reflectance, self.shading, self.specular, self.illuminant)
        if self.illuminant is not None:
            return compose_with_light(self.reflectance, self.shading, self.illuminant)
        return compose_diffuse(self.reflectance, self.shading)


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray


def compose_diffuse(R, S) -> np.ndarray:
    """Body reflection only: ``I = R * S`` (single-channel shading broadcasts)."""
    R, S = as_image(R), as_image(S)
    _check_broadcast(R, S, "compose_diffuse")
    return R * S


def compose_with_light(R, S, E) -> np.ndarray:
    """``I = R * S * E`` for a per-pixel or global light color ``E``."""
    base = compose_diffuse(R, S)
    return base * _illuminant(E, base)


def compose_specular(R, S, H, E=None) -> np.ndarray:
    """Body plus interface reflection.

    Without a light color this is ``R*S + H``; with one it is
    ``R*S*E + H*E``, where ``E`` may be per-pixel or global.
    """
    R, S, H = as_image(R), as_image(S), as_image(H)
    _check_broadcast(R, S, "compose_specular")
    _check_broadcast(R, H, "compose_specular")
    if E is None:
        return R * S + H
    E = _illuminant(E, R)
    return R * S * E + H * E


def derive_shading(I, R, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Invert ``I = R * S`` for ``S``; reflectance is clamped below at ``epsilon``."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    I, R = as_image(I), as_image(R)
    if I.shape != R.shape and not (I.shape[:2] == R.shape[:2] and R.shape[2] == 1):
        raise DimensionError(f"derive_shading: shapes differ, {I.shape} vs {R.shape}")
    return I / np.maximum(R, epsilon)


def forward_differences(I) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical forward differences, zero in the last column/row."""
    I = as_image(I)
    h, w = I.shape[:2]
    if h < 2 or w < 2:
        raise DimensionError(f"gradient needs at least 2x2 pixels, got {h}x{w}")
    gx = np.zeros_like(I)
    gy = np.zeros_like(I)
    gx[:, :-1] = I[:, 1:] - I[:, :-1]
    gy[:-1, :] = I[1:, :] - I[:-1, :]
    return gx, gy


def gradient(I) -> GradientField:
    """Per-channel forward-difference gradient and its magnitude."""
    gx, gy = forward_differences(I)
    return GradientField(gx, gy, np.sqrt(gx * gx + gy * gy))


def concat_channels(images: Sequence) -> np.ndarray:
    """Stack images along the channel axis in argument order."""
    imgs = [as_image(im) for im in images]
    if not imgs:
        raise DimensionError("concat_channels needs at least one image")
    hw = imgs[0].shape[:2]
    for im in imgs[1:]:
        if im.shape[:2] != hw:
            raise DimensionError(f"concat_channels: spatial shapes differ, {hw} vs {im.shape[:2]}")
    if len(imgs) == 1:
        return imgs[0]
    return np.concatenate(imgs, axis=2)


def to_display(I, gamma: float = 2.2) -> np.ndarray:
    """Clamp to [0, 1] and gamma-encode for previews."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    return np.clip(as_image(I), 0.0, 1.0) ** (1.0 / gamma)


def hwc_to_nchw(img) -> np.ndarray:
    img = as_image(img)
    return np.ascontiguousarray(img.transpose(2, 0, 1)[None])


def nchw_to_hwc(arr: np.ndarray, index: int = 0) -> np.ndarray:
    return np.ascontiguousarray(arr[index].transpose(1, 2, 0))
