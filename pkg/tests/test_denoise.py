"""Denoiser tests.

Oracles are independent of the implementation: the impulse response is
checked against a kernel recomputed here from the truncation rule, the
separable filter against scipy's reference implementation (same sampled
Gaussian, same replicate borders at sigma = 1), NLM against window
convexity bounds from rank filters, and TV against an energy functional
evaluated by this file's own forward differences.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import ndimage

from pnpunmix.cube import HsiCube
from pnpunmix.denoise import (
    DenoiserSpec,
    available_denoisers,
    denoise,
    gaussian_filter,
    nlm_filter,
    register_denoiser,
    tv_denoise,
)
from pnpunmix.errors import ComputeError


def _rof_energy(u, f, mu):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1, :] = u[1:, :] - u[:-1, :]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return 0.5 * np.sum((u - f) ** 2) + mu * np.sum(np.sqrt(gx**2 + gy**2))


# ---------------------------------------------------------------- gaussian


def test_gaussian_impulse_reproduces_kernel():
    sigma = 1.25
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    k /= k.sum()
    size = 4 * radius + 1
    img = np.zeros((size, size))
    img[2 * radius, 2 * radius] = 1.0
    out = gaussian_filter(img, sigma)
    expected = np.outer(k, k)
    got = out[radius : radius + k.size, radius : radius + k.size]
    assert_allclose(got, expected, rtol=0, atol=1e-14)


def test_gaussian_matches_scipy_at_unit_sigma():
    # scipy's radius rule int(truncate*sigma + 0.5) agrees with ceil(3*sigma)
    # at sigma = 1, so the whole pipeline must agree to roundoff
    rng = np.random.default_rng(0)
    img = rng.standard_normal((37, 23))
    ours = gaussian_filter(img, 1.0)
    ref = ndimage.gaussian_filter(img, 1.0, mode="nearest", truncate=3.0)
    assert_allclose(ours, ref, rtol=0, atol=1e-12)


def test_gaussian_constant_preserved():
    img = np.full((16, 16), 0.37)
    assert_allclose(gaussian_filter(img, 2.0), img, rtol=0, atol=1e-12)


def test_gaussian_ramp_interior_unchanged():
    cols = np.arange(40.0)
    img = np.tile(cols, (12, 1))
    out = gaussian_filter(img, 1.5)
    r = int(np.ceil(3 * 1.5))
    assert_allclose(out[:, r:-r], img[:, r:-r], rtol=0, atol=1e-10)


# --------------------------------------------------------------------- nlm


def test_nlm_constant_unchanged():
    img = np.full((20, 20), 0.6)
    assert_allclose(nlm_filter(img, 0.05), img, rtol=0, atol=1e-12)


def test_nlm_window_convexity_bound():
    rng = np.random.default_rng(1)
    img = rng.uniform(0.0, 1.0, size=(32, 32))
    out = nlm_filter(img, 0.02, patch_radius=1, search_radius=5)
    lo = ndimage.minimum_filter(img, size=11, mode="nearest")
    hi = ndimage.maximum_filter(img, size=11, mode="nearest")
    assert (out >= lo - 1e-12).all()
    assert (out <= hi + 1e-12).all()


def test_nlm_interior_variance_reduction():
    # two-region image at sigma = 0.05: interiors must flatten >= 2x
    rng = np.random.default_rng(2)
    clean = np.zeros((48, 48))
    clean[:, 24:] = 1.0
    sigma = 0.05
    noisy = clean + sigma * rng.standard_normal(clean.shape)
    out = nlm_filter(noisy, sigma)
    interior = np.zeros_like(clean, dtype=bool)
    interior[7:-7, 7:17] = True
    interior[7:-7, 31:41] = True
    var_in = np.var((noisy - clean)[interior])
    var_out = np.var((out - clean)[interior])
    assert var_out <= var_in / 2.0


def test_nlm_preserves_strong_edge():
    rng = np.random.default_rng(3)
    clean = np.zeros((24, 24))
    clean[:, 12:] = 1.0
    noisy = clean + 0.01 * rng.standard_normal(clean.shape)
    out = nlm_filter(noisy, 0.01)
    assert np.abs(out - clean).max() < 0.05


def test_nlm_zero_sigma_returns_input():
    rng = np.random.default_rng(4)
    img = rng.uniform(size=(10, 10))
    assert_array_equal(nlm_filter(img, 0.0), img)


# ---------------------------------------------------------------------- tv


def test_tv_energy_never_above_input():
    rng = np.random.default_rng(5)
    for _ in range(5):
        img = rng.uniform(size=(24, 24)) + 0.3 * rng.standard_normal((24, 24))
        for mu in (0.01, 0.1, 0.5):
            out = tv_denoise(img, mu)
            assert _rof_energy(out, img, mu) <= _rof_energy(img, img, mu) + 1e-12


def test_tv_constant_unchanged():
    img = np.full((16, 16), 0.25)
    assert_array_equal(tv_denoise(img, 0.3), img)


def test_tv_tiny_sigma_is_identity():
    rng = np.random.default_rng(6)
    img = rng.uniform(size=(20, 20))
    out = tv_denoise(img, 1e-8)
    assert np.abs(out - img).max() < 1e-6


def test_tv_maximum_principle():
    rng = np.random.default_rng(7)
    img = rng.standard_normal((20, 20))
    out = tv_denoise(img, 0.4)
    assert out.min() >= img.min() - 1e-12
    assert out.max() <= img.max() + 1e-12


def test_tv_actually_smooths():
    rng = np.random.default_rng(8)
    clean = np.zeros((32, 32))
    clean[:, 16:] = 1.0
    noisy = clean + 0.1 * rng.standard_normal(clean.shape)
    out = tv_denoise(noisy, 0.1)
    assert np.sum((out - clean) ** 2) < np.sum((noisy - clean) ** 2)


# ----------------------------------------------------- spec and dispatch


def test_denoiser_spec_validation():
    DenoiserSpec("nlm", {"patch_radius": 2, "search_radius": 7})
    with pytest.raises(ValueError, match="patch_radius"):
        DenoiserSpec("nlm", {"patch_radius": 0})
    with pytest.raises(ValueError, match="iters"):
        DenoiserSpec("tv", {"iters": 0})
    with pytest.raises(ValueError, match="sigma_spatial"):
        DenoiserSpec("gaussian", {"sigma_spatial": -1.0})
    with pytest.raises(ValueError, match="unknown"):
        DenoiserSpec("gaussian", {"bandwidth": 2.0})


def test_denoise_identity_exact():
    rng = np.random.default_rng(9)
    cube = HsiCube(rng.uniform(size=(5, 8, 9)))
    out = denoise(DenoiserSpec("identity"), cube, 0.0)
    assert_array_equal(out.values, cube.values)


def test_denoise_unknown_kind():
    cube = HsiCube(np.zeros((1, 2, 2)))
    with pytest.raises(ValueError, match="identity"):
        denoise(DenoiserSpec("nope"), cube, 0.1)


def test_denoise_negative_sigma_rejected():
    cube = HsiCube(np.zeros((1, 2, 2)))
    with pytest.raises(ValueError, match="sigma"):
        denoise(DenoiserSpec("identity"), cube, -0.5)


def test_denoise_gain_on_piecewise_constant():
    rng = np.random.default_rng(10)
    clean = np.zeros((64, 64))
    clean[:32, :] = 0.2
    clean[32:, :] = 0.8
    clean[:, 40:] += 0.15
    sigma = 0.08
    noisy = clean + sigma * rng.standard_normal(clean.shape)
    cube = HsiCube(noisy[None])
    for kind in ("nlm", "tv"):
        out = denoise(DenoiserSpec(kind), cube, sigma)
        mse_out = np.mean((out.values[0] - clean) ** 2)
        mse_in = np.mean((noisy - clean) ** 2)
        assert mse_out < mse_in, kind


def test_denoise_band_permutation_equivariance():
    rng = np.random.default_rng(11)
    cube = HsiCube(rng.uniform(size=(6, 16, 16)))
    spec = DenoiserSpec("tv", {"iters": 8})
    out = denoise(spec, cube, 0.2)
    perm = np.array([3, 0, 5, 1, 4, 2])
    out_p = denoise(spec, HsiCube(cube.values[perm]), 0.2)
    assert_array_equal(out_p.values, out.values[perm])


def test_denoise_thread_count_invariant():
    rng = np.random.default_rng(12)
    cube = HsiCube(rng.uniform(size=(8, 24, 24)))
    for kind in ("gaussian", "nlm", "tv"):
        one = denoise(DenoiserSpec(kind), cube, 0.1, workers=1)
        many = denoise(DenoiserSpec(kind), cube, 0.1, workers=4)
        assert_array_equal(one.values, many.values), kind


def test_register_custom_denoiser():
    calls = []

    def halver(volume, sigma):
        calls.append(sigma)
        return volume * 0.5

    register_denoiser("halver-test", halver)
    assert "halver-test" in available_denoisers()
    cube = HsiCube(np.full((2, 3, 3), 1.0))
    out = denoise(DenoiserSpec("halver-test"), cube, 0.3)
    assert_array_equal(out.values, np.full((2, 3, 3), 0.5))
    assert calls == [0.3]
    with pytest.raises(ValueError, match="registered"):
        register_denoiser("halver-test", halver)


def test_shape_change_is_an_error():
    register_denoiser("cropper-test", lambda v, s: v[:, 1:, :])
    cube = HsiCube(np.zeros((2, 4, 4)))
    with pytest.raises(ComputeError, match="shape"):
        denoise(DenoiserSpec("cropper-test"), cube, 0.1)
