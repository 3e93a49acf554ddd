"""PFM and PNG image files."""

from __future__ import annotations

import os
import re

import numpy as np
from PIL import Image as PILImage

from .errors import DomainError
from .imaging import as_image, check_valid, to_display

_HEADER = re.compile(rb"^(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s")


def write_pfm(path, img, validate: bool = True) -> None:
    """Write a 1- or 3-channel float image as little-endian PFM."""
    img = as_image(img)
    if validate:
        check_valid(img, str(path))
    channels = img.shape[2]
    if channels not in (1, 3):
        raise DomainError(f"PFM stores 1 or 3 channels, got {channels}")
    h, w = img.shape[:2]
    header = b"%s\n%d %d\n-1.0\n" % (b"PF" if channels == 3 else b"Pf", w, h)
    # PFM scanlines run bottom-to-top
    body = np.ascontiguousarray(img[::-1], dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header + body)


def read_pfm(path, validate: bool = True) -> np.ndarray:
    """Read a PFM file into a float32 ``(H, W, C)`` array.

    NaN or negative pixels are rejected unless ``validate`` is false.
    """
    with open(path, "rb") as f:
        raw = f.read()
    m = _HEADER.match(raw[:128])
    if m is None:
        raise DomainError(f"{path}: not a PFM file")
    channels = 3 if m.group(1) == b"PF" else 1
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=m.end())
    img = data.reshape(h, w, channels)[::-1].astype(np.float32)
    if validate:
        check_valid(img, str(path))
    return img


def write_png(path, img, gamma: float = 2.2) -> None:
    """Write an 8-bit gamma-encoded preview."""
    enc = to_display(img, gamma)
    u8 = np.round(enc * 255.0).astype(np.uint8)
    if u8.shape[2] == 1:
        u8 = u8[:, :, 0]
    PILImage.fromarray(u8).save(path)


def read_png(path, gamma: float | None = None) -> np.ndarray:
    """Read an 8- or 16-bit PNG into [0, 1] floats.

    With ``gamma`` set, values are linearised by raising to that power.
    An alpha channel, if present, is returned as the last channel untouched.
    """
    with PILImage.open(path) as im:
        arr = np.asarray(im)
    scale = 65535.0 if arr.dtype == np.uint16 or arr.max(initial=0) > 255 else 255.0
    img = as_image(arr.astype(np.float64) / scale)
    if gamma is not None:
        color = img[:, :, :3] if img.shape[2] in (3, 4) else img[:, :, :1]
        color = color ** gamma
        img = np.concatenate([color, img[:, :, color.shape[2]:]], axis=2) if img.shape[2] in (2, 4) else color
    return img


def read_image(path, gamma: float | None = None) -> np.ndarray:
    """Read a PFM or PNG by extension."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        return read_pfm(path)
    if ext == ".png":
        return read_png(path, gamma)
    raise DomainError(f"{path}: unsupported image extension {ext!r}")
