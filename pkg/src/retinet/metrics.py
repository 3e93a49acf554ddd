"""Evaluation metrics: brightness-adjusted MSE, windowed LMSE and DSSIM."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DimensionError, DomainError, UsageError
from .imaging import IntrinsicSet, as_image

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11x11 window
SSIM_MIN_RANGE = 1e-6


@dataclass(frozen=True)
class WindowSpec:
    k: int = 20

    def __post_init__(self):
        if self.k < 2 or self.k % 2:
            raise DomainError(f"window side must be even and >= 2, got {self.k}")

    @property
    def step(self) -> int:
        return self.k // 2


def _pair(pred, gt):
    pred, gt = as_image(pred), as_image(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction shape {pred.shape} != ground truth {gt.shape}")
    return pred.astype(np.float64), gt.astype(np.float64)


def _mask(mask, like):
    if mask is None:
        return np.ones(like.shape, dtype=np.float64)
    m = as_image(mask).astype(np.float64)
    if m.shape[:2] != like.shape[:2]:
        raise DimensionError("mask shape does not match images")
    return np.broadcast_to(m, like.shape)


def _scaled_sse(pred, gt, mask):
    pp = np.sum(pred * pred * mask)
    alpha = np.sum(pred * gt * mask) / pp if pp > 0 else 0.0
    diff = alpha * pred - gt
    return np.sum(diff * diff * mask)


def scaled_mse(pred, gt, mask=None) -> float:
    """MSE after scaling ``pred`` by the single factor that minimises it."""
    pred, gt = _pair(pred, gt)
    m = _mask(mask, gt)
    n = np.sum(m)
    if n == 0:
        return 0.0
    return float(_scaled_sse(pred, gt, m) / n)


def window_anchors(extent: int, k: int) -> list[int]:
    """Window origins at stride k/2, plus one flush with the far edge if needed."""
    if extent < k:
        raise DomainError(f"image extent {extent} smaller than window {k}")
    anchors = list(range(0, extent - k + 1, k // 2))
    if anchors[-1] != extent - k:
        anchors.append(extent - k)
    return anchors


def _lmse_joint(pred, gt, m, w):
    k = w.k
    scores = []
    for i in window_anchors(gt.shape[0], k):
        for j in window_anchors(gt.shape[1], k):
            p = pred[i:i + k, j:j + k]
            g = gt[i:i + k, j:j + k]
            mw = m[i:i + k, j:j + k]
            energy = np.sum(g * g * mw)
            if energy == 0:
                scores.append(0.0)
            else:
                # both scores are means over the same pixels, so counts cancel
                scores.append(_scaled_sse(p, g, mw) / energy)
    return math.fsum(scores) / len(scores)


def lmse(pred, gt, w: WindowSpec = WindowSpec(), mask=None, per_channel: bool = False) -> float:
    """Local scale-invariant MSE, normalised so an all-zero prediction scores 1."""
    pred, gt = _pair(pred, gt)
    m = _mask(mask, gt)
    if per_channel:
        vals = [
            _lmse_joint(pred[:, :, c:c + 1], gt[:, :, c:c + 1], m[:, :, c:c + 1], w)
            for c in range(gt.shape[2])
        ]
        return float(np.mean(vals))
    return float(_lmse_joint(pred, gt, m, w))


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float) -> np.ndarray:
    """Local SSIM of two single-channel arrays."""
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def blur(x):
        return gaussian_filter(x, SSIM_SIGMA, mode="reflect", truncate=SSIM_RADIUS / SSIM_SIGMA)

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(pred, gt, mask=None) -> float:
    """Mean Gaussian-window SSIM, averaged over channels.

    The dynamic range constant is taken over both images jointly so the
    score is symmetric in its arguments.
    """
    pred, gt = _pair(pred, gt)
    scores = []
    for c in range(gt.shape[2]):
        a, b = pred[:, :, c], gt[:, :, c]
        rng = max(a.max(), b.max()) - min(a.min(), b.min())
        smap = ssim_map(a, b, max(rng, SSIM_MIN_RANGE))
        if mask is None:
            scores.append(smap.mean())
        else:
            mw = as_image(mask)[:, :, 0] > 0
            scores.append(smap[mw].mean() if mw.any() else 1.0)
    return float(np.mean(scores))


def dssim(pred, gt, mask=None) -> float:
    return (1.0 - ssim(pred, gt, mask)) / 2.0


@dataclass
class ImageScores:
    image: str
    mse_r: float
    mse_s: float
    lmse_r: float
    lmse_s: float
    dssim_r: float
    dssim_s: float


@dataclass
class MetricReport:
    mse_albedo: float
    mse_shading: float
    lmse_albedo: float
    lmse_shading: float
    lmse_mean: float
    dssim_albedo: float
    dssim_shading: float
    count: int
    rows: list[ImageScores]

    def write_csv(self, path) -> None:
        fields = ["image", "mse_r", "mse_s", "lmse_r", "lmse_s", "dssim_r", "dssim_s"]
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(fields)
            for row in self.rows:
                d = asdict(row)
                wr.writerow([d[k] if k == "image" else repr(float(d[k])) for k in fields])
            wr.writerow(["MEAN"] + [repr(float(v)) for v in (
                self.mse_albedo, self.mse_shading, self.lmse_albedo,
                self.lmse_shading, self.dssim_albedo, self.dssim_shading)])

    def table(self) -> str:
        lines = [
            f"{'':8s}{'MSE':>12s}{'LMSE':>12s}{'DSSIM':>12s}",
            f"{'Albedo':8s}{self.mse_albedo:12.4f}{self.lmse_albedo:12.4f}{self.dssim_albedo:12.4f}",
            f"{'Shading':8s}{self.mse_shading:12.4f}{self.lmse_shading:12.4f}{self.dssim_shading:12.4f}",
            f"({self.count} images, mean LMSE {self.lmse_mean:.4f})",
        ]
        return "\n".join(lines)


def score_pair(pred: IntrinsicSet, gt: IntrinsicSet, w: WindowSpec = WindowSpec(),
               name: str = "", mask=None, per_channel: bool = False) -> ImageScores:
    pr, ps = pred.reflectance, pred.shading
    gr, gs = gt.reflectance, gt.shading
    if ps.shape[2] != gs.shape[2]:
        # compare gray against gray when one side is single-channel
        ps = ps.mean(axis=2, keepdims=True)
        gs = gs.mean(axis=2, keepdims=True)
    return ImageScores(
        image=name,
        mse_r=scaled_mse(pr, gr, mask),
        mse_s=scaled_mse(ps, gs, mask),
        lmse_r=lmse(pr, gr, w, mask, per_channel),
        lmse_s=lmse(ps, gs, w, mask, per_channel),
        dssim_r=dssim(pr, gr, mask),
        dssim_s=dssim(ps, gs, mask),
    )


def evaluate_set(predictions: Sequence[IntrinsicSet], ground_truths: Sequence[IntrinsicSet],
                 w: WindowSpec = WindowSpec(), names: Sequence[str] | None = None,
                 masks=None, per_channel: bool = False) -> MetricReport:
    """Score every prediction against its ground truth and average arithmetically."""
    if len(predictions) != len(ground_truths):
        raise UsageError(f"{len(predictions)} predictions for {len(ground_truths)} ground truths")
    if names is None:
        names = [str(i) for i in range(len(predictions))]
    if masks is None:
        masks = [None] * len(predictions)
    rows = [score_pair(p, g, w, n, m, per_channel)
            for p, g, n, m in zip(predictions, ground_truths, names, masks)]

    def mean(attr):
        return math.fsum(getattr(r, attr) for r in rows) / len(rows) if rows else 0.0

    lr, ls = mean("lmse_r"), mean("lmse_s")
    return MetricReport(
        mse_albedo=mean("mse_r"), mse_shading=mean("mse_s"),
        lmse_albedo=lr, lmse_shading=ls, lmse_mean=(lr + ls) / 2,
        dssim_albedo=mean("dssim_r"), dssim_shading=mean("dssim_s"),
        count=len(rows), rows=rows,
    )
