import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from retinet import metrics, synth
from retinet.errors import DimensionError, DomainError
from retinet.imaging import compose_diffuse, forward_differences
from retinet.retinex import (PoissonConvergenceWarning, RetinexParams, classification_masks,
                             classify_gradients, log_image, poisson_reintegrate, retinex_decompose)
from strategies import images


def dense_lstsq(gx, gy):
    """Least-squares potential from an explicit difference matrix (zero-mean gauge)."""
    h, w = gx.shape
    rows, rhs = [], []
    idx = np.arange(h * w).reshape(h, w)
    for i in range(h):
        for j in range(w - 1):
            r = np.zeros(h * w)
            r[idx[i, j + 1]], r[idx[i, j]] = 1, -1
            rows.append(r)
            rhs.append(gx[i, j])
    for i in range(h - 1):
        for j in range(w):
            r = np.zeros(h * w)
            r[idx[i + 1, j]], r[idx[i, j]] = 1, -1
            rows.append(r)
            rhs.append(gy[i, j])
    f = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0].reshape(h, w)
    return f - f.mean()


def test_params_validation():
    with pytest.raises(DomainError):
        RetinexParams(threshold=-1)
    with pytest.raises(DomainError):
        RetinexParams(solver_tol=0)
    with pytest.raises(DomainError):
        RetinexParams(solver_max_iters=0)


def test_ramp_shading_goes_to_shading():
    ramp = np.linspace(0.5, 1.0, 16)
    I = np.repeat(np.outer(np.ones(8), ramp)[:, :, None], 3, axis=2)
    refl, shad = classify_gradients(I, RetinexParams(threshold=0.1))
    assert np.all(refl.gx == 0) and np.all(refl.gy == 0)
    assert np.any(shad.gx != 0)


def test_step_edge_goes_to_reflectance():
    I = np.full((6, 6, 3), 0.2)
    I[:, 3:] = 0.8
    mx, my = classification_masks(I, RetinexParams())
    assert mx[:, 2].all() and mx.sum() == 6
    assert not my.any()


@given(images(lo=0.0, hi=1.0), st.floats(0.0, 0.5))
def test_gradient_conservation(img, thr):
    refl, shad = classify_gradients(img, RetinexParams(threshold=thr))
    gx, gy = forward_differences(log_image(img))
    np.testing.assert_array_equal(refl.gx + shad.gx, gx)
    np.testing.assert_array_equal(refl.gy + shad.gy, gy)


@given(images(lo=0.01, hi=1.0), st.floats(0.1, 10.0), st.booleans())
def test_classification_scale_invariant(img, c, chroma):
    p = RetinexParams(use_chromaticity=chroma)
    a, b = classification_masks(img, p), classification_masks(c * img, p)
    # log differences agree to rounding; compare away from the threshold
    gx = np.max(np.abs(forward_differences(log_image(img))[0]), axis=2)
    safe = np.abs(gx - p.threshold) > 1e-9
    np.testing.assert_array_equal(a[0][safe], b[0][safe])


def test_chromaticity_ignores_intensity_edges():
    I = np.full((4, 6, 3), 0.2)
    I[:, 3:] = 0.8  # gray step: intensity only
    mx, _ = classification_masks(I, RetinexParams(use_chromaticity=True))
    assert not mx.any()
    I[:, 3:] = [0.8, 0.2, 0.2]  # colour change
    mx, _ = classification_masks(I, RetinexParams(use_chromaticity=True))
    assert mx[:, 2].all()


def test_classification_matches_edge_map():
    params = synth.GeneratorParams(canvas=(64, 64))
    for i in range(5):
        s = synth.smooth_shading_sample(3, i, params)
        mx, my = classification_masks(s.image, RetinexParams())
        R = s.set.reflectance
        ex = np.zeros_like(mx)
        ey = np.zeros_like(my)
        ex[:, :-1] = np.any(R[:, 1:] != R[:, :-1], axis=2)
        ey[:-1] = np.any(R[1:] != R[:-1], axis=2)
        agree = (np.mean(mx == ex) + np.mean(my == ey)) / 2
        assert agree >= 0.95


def test_poisson_zero_field():
    sol = poisson_reintegrate(np.zeros((5, 7)), np.zeros((5, 7)))
    assert np.all(sol.image == 0) and sol.converged and sol.iterations == 0


def test_poisson_recovers_known_potential():
    rng = np.random.default_rng(0)
    f0 = rng.standard_normal((12, 17)).cumsum(axis=1)
    gx, gy = forward_differences(f0)
    sol = poisson_reintegrate(gx[:, :, 0], gy[:, :, 0], tol=1e-12)
    rms = np.sqrt(np.mean((sol.image[:, :, 0] - (f0 - f0.mean())) ** 2))
    assert rms < 1e-4


def test_poisson_matches_dense_solver_on_non_conservative_field():
    rng = np.random.default_rng(1)
    gx = forward_differences(rng.standard_normal((8, 8)))[0][:, :, 0]
    gy = forward_differences(rng.standard_normal((8, 8)))[1][:, :, 0]
    sol = poisson_reintegrate(gx, gy, tol=1e-13)
    np.testing.assert_allclose(sol.image[:, :, 0], dense_lstsq(gx, gy), atol=1e-9)


def test_poisson_idempotent():
    rng = np.random.default_rng(2)
    gx, gy = rng.standard_normal((2, 9, 11))
    f1 = poisson_reintegrate(gx, gy, tol=1e-12).image
    g2x, g2y = forward_differences(f1)
    f2 = poisson_reintegrate(g2x, g2y, tol=1e-12).image
    np.testing.assert_allclose(f2, f1, atol=1e-8)


def test_poisson_warns_when_not_converged():
    rng = np.random.default_rng(3)
    gx, gy = rng.standard_normal((2, 20, 20))
    with pytest.warns(PoissonConvergenceWarning):
        sol = poisson_reintegrate(gx, gy, tol=1e-12, max_iters=2)
    assert not sol.converged and sol.iterations == 2


def test_poisson_shape_errors():
    with pytest.raises(DimensionError):
        poisson_reintegrate(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        poisson_reintegrate(np.zeros((3, 3, 2)), np.zeros((3, 3, 2)))


def test_decompose_constant_image():
    I = np.full((6, 6, 3), 0.4)
    out = retinex_decompose(I)
    np.testing.assert_allclose(out.reflectance, 1.0)
    np.testing.assert_allclose(out.shading, I)


def test_decompose_scale_invariant():
    s = synth.smooth_shading_sample(0, 1, synth.GeneratorParams(canvas=(24, 24)))
    a = retinex_decompose(s.image.astype(np.float64))
    b = retinex_decompose(2 * s.image.astype(np.float64))
    np.testing.assert_allclose(a.reflectance, b.reflectance, rtol=1e-6, atol=1e-9)


def test_decompose_recomposes_input():
    s = synth.generate_sample(0, 2, "diffuse", synth.GeneratorParams(canvas=(24, 24)))
    I = s.image.astype(np.float64)
    out = retinex_decompose(I)
    assert np.max(np.abs(compose_diffuse(out.reflectance, out.shading) - I)) <= 1e-4 * I.max()
    assert out.reflectance.max() == pytest.approx(1.0)
    assert len(out.meta["solver_iterations"]) == 3


def test_decompose_beats_identity_on_scaled_mse():
    params = synth.GeneratorParams(canvas=(48, 48))
    for i in range(3):
        s = synth.smooth_shading_sample(5, i, params)
        I = s.image.astype(np.float64)
        R = s.set.reflectance
        assert metrics.scaled_mse(retinex_decompose(I).reflectance, R) < metrics.scaled_mse(I, R)


def test_decompose_silences_warnings_by_default():
    s = synth.smooth_shading_sample(0, 0, synth.GeneratorParams(canvas=(16, 16)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        retinex_decompose(s.image)
