import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from retinet import metrics
from retinet.errors import DimensionError, DomainError, UsageError
from retinet.imaging import IntrinsicSet
from strategies import image_pairs, images


# -- independent oracles ------------------------------------------------------

def grid_scaled_mse(pred, gt, hi=4.0, n=8001):
    """Minimum over a dense alpha grid, refined once around the best cell."""
    alphas = np.linspace(0.0, hi, n)
    errs = np.array([np.mean((a * pred - gt) ** 2) for a in alphas])
    i = int(np.argmin(errs))
    fine = np.linspace(alphas[max(i - 1, 0)], alphas[min(i + 1, n - 1)], 4001)
    return min(np.mean((a * pred - gt) ** 2) for a in fine)


def gaussian_window(sigma=1.5, radius=5):
    ax = np.arange(-radius, radius + 1)
    g = np.exp(-ax ** 2 / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def brute_ssim_map(a, b, L):
    """Pixel-by-pixel SSIM with an explicit 11x11 window and symmetric padding."""
    win = gaussian_window()
    r = 5
    pa, pb = np.pad(a, r, mode="symmetric"), np.pad(b, r, mode="symmetric")
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    out = np.empty_like(a)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            wa, wb = pa[i:i + 2 * r + 1, j:j + 2 * r + 1], pb[i:i + 2 * r + 1, j:j + 2 * r + 1]
            ma, mb = (win * wa).sum(), (win * wb).sum()
            va = (win * wa * wa).sum() - ma * ma
            vb = (win * wb * wb).sum() - mb * mb
            cov = (win * wa * wb).sum() - ma * mb
            out[i, j] = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    return out


# -- scaled MSE -------------------------------------------------------------

def test_scaled_mse_frozen_example():
    # alpha = 6/5, residuals (-0.8, 0.4)
    pred, gt = np.array([[[1.0], [2.0]]]), np.array([[[2.0], [2.0]]])
    assert metrics.scaled_mse(pred, gt) == pytest.approx(0.4, abs=1e-12)
    assert metrics.scaled_mse(pred, gt) == pytest.approx(grid_scaled_mse(pred, gt), abs=1e-6)


def test_scaled_mse_matches_grid_on_random_images():
    rng = np.random.default_rng(7)
    for _ in range(100):
        h, w = rng.integers(1, 5, size=2)
        pred = rng.uniform(0.0, 1.0, (h, w, 3))
        gt = rng.uniform(0.0, 1.0, (h, w, 3))
        assert abs(metrics.scaled_mse(pred, gt) - grid_scaled_mse(pred, gt, hi=8.0)) < 1e-6


def test_scaled_mse_zero_prediction():
    gt = np.random.default_rng(0).uniform(0, 1, (3, 4, 3))
    assert metrics.scaled_mse(np.zeros_like(gt), gt) == pytest.approx(np.mean(gt ** 2))


def test_scaled_mse_shape_mismatch():
    with pytest.raises(DimensionError):
        metrics.scaled_mse(np.ones((2, 2, 3)), np.ones((2, 3, 3)))


@given(image_pairs(lo=0.01, hi=1.0), st.floats(0.01, 100.0))
def test_scaled_mse_scale_invariant(pair, c):
    pred, gt = pair
    assert metrics.scaled_mse(c * pred, gt) == pytest.approx(metrics.scaled_mse(pred, gt), rel=1e-9, abs=1e-12)


@given(images(lo=0.01, hi=1.0), st.floats(0.01, 100.0))
def test_scaled_mse_zero_for_multiples(gt, c):
    assert metrics.scaled_mse(c * gt, gt) == pytest.approx(0.0, abs=1e-12)


# -- LMSE ---------------------------------------------------------------------

def test_window_count_120x160():
    rows = list(range(0, 101, 10))
    cols = list(range(0, 141, 10))
    assert metrics.window_anchors(120, 20) == rows
    assert metrics.window_anchors(160, 20) == cols
    assert len(rows) * len(cols) == 165


def test_window_anchor_flush_to_edge():
    assert metrics.window_anchors(25, 10) == [0, 5, 10, 15]
    assert metrics.window_anchors(27, 10) == [0, 5, 10, 15, 17]


@given(st.integers(2, 60), st.sampled_from([2, 4, 6, 10, 20]))
def test_windows_cover_every_pixel(extent, k):
    assume(extent >= k)
    covered = np.zeros(extent, bool)
    for a in metrics.window_anchors(extent, k):
        covered[a:a + k] = True
    assert covered.all()


def test_window_spec_validation():
    assert metrics.WindowSpec(20).step == 10
    for bad in (0, 3, 7):
        with pytest.raises(DomainError):
            metrics.WindowSpec(bad)


def test_lmse_image_smaller_than_window():
    with pytest.raises(DomainError):
        metrics.lmse(np.ones((5, 5, 3)), np.ones((5, 5, 3)), metrics.WindowSpec(10))


def test_lmse_zero_predictor_is_one():
    gt = np.random.default_rng(3).uniform(0.1, 1.0, (120, 160, 3))
    assert abs(metrics.lmse(np.zeros_like(gt), gt) - 1.0) < 1e-9


def test_lmse_zero_gt_windows_count_zero():
    gt = np.zeros((20, 40, 1))
    gt[:, 30:] = 1.0  # windows at columns 0 and 10 are empty, 20 is not
    pred = np.zeros_like(gt)
    # anchors (0,0), (0,10), (0,20): scores 0, 0, 1
    assert metrics.lmse(pred, gt) == pytest.approx(1 / 3)


def test_lmse_frozen_value():
    # independent hand computation on a 4x4, k=2 instance (9 windows)
    gt = np.arange(1, 17, dtype=float).reshape(4, 4, 1)
    pred = np.ones_like(gt)
    expected = []
    for i in (0, 1, 2):
        for j in (0, 1, 2):
            g = gt[i:i + 2, j:j + 2].ravel()
            a = g.sum() / 4.0
            expected.append(np.sum((a - g) ** 2) / np.sum(g ** 2))
    assert metrics.lmse(pred, gt, metrics.WindowSpec(2)) == pytest.approx(np.mean(expected), abs=1e-15)
    assert metrics.lmse(pred, gt, metrics.WindowSpec(2)) == pytest.approx(0.08949045235656196, abs=1e-12)


@given(image_pairs(lo=0.0, hi=1.0))
def test_lmse_bounded(pair):
    pred, gt = pair
    assume(min(gt.shape[:2]) >= 2)
    v = metrics.lmse(pred, gt, metrics.WindowSpec(2))
    assert -1e-12 <= v <= 1.0 + 1e-12
    assert metrics.lmse(gt, gt, metrics.WindowSpec(2)) == pytest.approx(0.0, abs=1e-12)


def test_lmse_per_channel_flag_differs_for_colour_casts():
    rng = np.random.default_rng(0)
    gt = rng.uniform(0.2, 1.0, (10, 10, 3))
    pred = gt * np.array([1.0, 2.0, 0.5])
    assert metrics.lmse(pred, gt, metrics.WindowSpec(4), per_channel=True) == pytest.approx(0.0, abs=1e-12)
    assert metrics.lmse(pred, gt, metrics.WindowSpec(4)) > 0.01


# -- SSIM ---------------------------------------------------------------------

def test_ssim_map_matches_brute_force():
    rng = np.random.default_rng(11)
    a, b = rng.uniform(0, 1, (13, 9)), rng.uniform(0, 1, (13, 9))
    np.testing.assert_allclose(metrics.ssim_map(a, b, 1.0), brute_ssim_map(a, b, 1.0), atol=1e-12)


def test_ssim_identity_and_constants():
    x = np.random.default_rng(2).uniform(0, 1, (12, 12, 3))
    assert metrics.ssim(x, x) == pytest.approx(1.0)
    c = np.full((12, 12, 1), 0.3)
    assert metrics.ssim(c, c) == pytest.approx(1.0)
    assert metrics.dssim(x, x) == 0.0


def test_ssim_inverted_binary_is_low():
    gt = (np.random.default_rng(5).uniform(size=(16, 16, 1)) > 0.5).astype(float)
    assert metrics.ssim(1 - gt, gt) < 0.5


def test_dssim_affine_in_ssim():
    rng = np.random.default_rng(9)
    a, b = rng.uniform(0, 1, (12, 12, 3)), rng.uniform(0, 1, (12, 12, 3))
    assert metrics.dssim(a, b) == pytest.approx((1 - metrics.ssim(a, b)) / 2)
    assert 0.0 <= metrics.dssim(a, b) <= 1.0


@given(image_pairs(lo=0.0, hi=1.0))
def test_dssim_symmetric(pair):
    a, b = pair
    assert metrics.dssim(a, b) == pytest.approx(metrics.dssim(b, a), abs=1e-12)


# -- reports -----------------------------------------------------------------

def _sets(rng, n, h=20, w=20):
    return [IntrinsicSet(rng.uniform(0.1, 1, (h, w, 3)), rng.uniform(0.1, 1, (h, w, 1))) for _ in range(n)]


def test_evaluate_identical_is_zero():
    gts = _sets(np.random.default_rng(0), 3)
    r = metrics.evaluate_set(gts, gts)
    for v in (r.mse_albedo, r.mse_shading, r.lmse_albedo, r.lmse_shading, r.dssim_albedo, r.dssim_shading):
        assert v == pytest.approx(0.0, abs=1e-12)
    assert r.count == 3


def test_evaluate_is_mean_of_individual_scores():
    rng = np.random.default_rng(1)
    preds, gts = _sets(rng, 2), _sets(rng, 2)
    w = metrics.WindowSpec(10)
    r = metrics.evaluate_set(preds, gts, w)
    singles = [metrics.score_pair(p, g, w) for p, g in zip(preds, gts)]
    assert r.mse_albedo == pytest.approx(np.mean([s.mse_r for s in singles]))
    assert r.lmse_shading == pytest.approx(np.mean([s.lmse_s for s in singles]))
    assert r.dssim_albedo == pytest.approx(np.mean([s.dssim_r for s in singles]))
    assert r.lmse_mean == pytest.approx((r.lmse_albedo + r.lmse_shading) / 2)
    one = metrics.evaluate_set(preds[:1], gts[:1], w)
    assert one.mse_shading == singles[0].mse_s


def test_evaluate_length_mismatch():
    gts = _sets(np.random.default_rng(0), 2)
    with pytest.raises(UsageError):
        metrics.evaluate_set(gts[:1], gts)


def test_csv_layout_and_mean_row(tmp_path):
    rng = np.random.default_rng(4)
    r = metrics.evaluate_set(_sets(rng, 3), _sets(rng, 3), names=["a", "b", "c"])
    r.write_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["image", "mse_r", "mse_s", "lmse_r", "lmse_s", "dssim_r", "dssim_s"]
    assert [row[0] for row in rows[1:]] == ["a", "b", "c", "MEAN"]
    for col in range(1, 7):
        vals = [float(row[col]) for row in rows[1:4]]
        assert float(rows[4][col]) == pytest.approx(math.fsum(vals) / 3, rel=1e-12)
    assert "Albedo" in r.table() and "Shading" in r.table()


def test_masked_pixels_are_ignored():
    rng = np.random.default_rng(6)
    gt = rng.uniform(0.1, 1, (20, 20, 3))
    pred = gt.copy()
    pred[:5] = 7.0  # garbage where the mask is zero
    mask = np.ones((20, 20, 1))
    mask[:5] = 0
    assert metrics.scaled_mse(pred, gt, mask) == pytest.approx(0.0, abs=1e-12)
    assert metrics.lmse(pred, gt, metrics.WindowSpec(10), mask) == pytest.approx(0.0, abs=1e-12)
