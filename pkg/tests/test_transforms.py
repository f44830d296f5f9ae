import numpy as np
import pytest

from synthbrain import (LABEL, NEAREST, Volume, compose_displacements,
                        degradation_priors, generative_priors, integrate_svf,
                        sample_affine, sample_svf, warp)
from synthbrain.transforms import (AffineParams, DisplacementField,
                                   VelocityField, jacobian_determinant)


def test_sample_affine_generative_ranges(rng):
    priors = generative_priors()
    for _ in range(200):
        p = sample_affine(priors, rng)
        assert all(-15 <= r <= 15 for r in p.rotations)
        assert all(0.85 <= s <= 1.15 for s in p.scalings)
        assert all(-0.012 <= h <= 0.012 for h in p.shearings)
        assert all(-20 <= t <= 20 for t in p.translations)


def test_sample_affine_degradation_ranges(rng):
    priors = degradation_priors()
    for _ in range(200):
        p = sample_affine(priors, rng)
        assert all(-25 <= r <= 25 for r in p.rotations)
        assert all(-50 <= t <= 50 for t in p.translations)


def test_degenerate_priors_give_identity(rng):
    priors = generative_priors().with_overrides({
        "rotation": (0, 0), "scaling": (1, 1), "shearing": (0, 0),
        "translation": (0, 0)})
    p = sample_affine(priors, rng)
    np.testing.assert_array_equal(p.matrix((10, 10, 10)), np.eye(4))


def test_affine_sampling_is_reproducible():
    priors = generative_priors()
    a = sample_affine(priors, np.random.default_rng(99))
    b = sample_affine(priors, np.random.default_rng(99))
    assert a == b


def test_invalid_scaling_rejected():
    with pytest.raises(ValueError):
        AffineParams(scalings=(0.0, 1.0, 1.0))


def test_sample_svf_zero_prior(rng):
    priors = generative_priors().with_overrides({"sigma_v2": (0, 0)})
    vf = sample_svf(priors, (16, 16, 16), rng)
    np.testing.assert_array_equal(vf.control, 0.0)
    disp = integrate_svf(vf)
    np.testing.assert_array_equal(disp.field, 0.0)


def test_sample_svf_variance_matches_draw():
    priors = generative_priors().with_overrides({"sigma_v2": (1.2, 1.2)})
    rng = np.random.default_rng(0)
    vf = sample_svf(priors, (8, 8, 8), rng, control_points=16)
    assert vf.sigma_v2 == 1.2
    sample_var = vf.control.var()
    assert abs(sample_var - 1.2) / 1.2 < 0.1  # 16^3*3 > 1e4 entries


def test_sample_svf_prior_range(rng):
    priors = generative_priors()
    for _ in range(100):
        vf = sample_svf(priors, (8, 8, 8), rng)
        assert 0 <= vf.sigma_v2 <= 1.5


def test_integrate_constant_field_is_translation():
    dims = (24, 24, 24)
    field = np.zeros((4, 4, 4, 3))
    field[..., 0] = 1.7
    field[..., 2] = -0.9
    disp = integrate_svf(VelocityField(field, 1.0, dims))
    interior = disp.field[6:-6, 6:-6, 6:-6]
    np.testing.assert_allclose(interior[..., 0], 1.7, atol=1e-3)
    np.testing.assert_allclose(interior[..., 1], 0.0, atol=1e-3)
    np.testing.assert_allclose(interior[..., 2], -0.9, atol=1e-3)


def test_inverse_consistency():
    rng = np.random.default_rng(4)
    dims = (32, 32, 32)
    control = np.sqrt(1.5) * rng.standard_normal((8, 8, 8, 3))
    fwd = integrate_svf(VelocityField(control, 1.5, dims))
    bwd = integrate_svf(VelocityField(-control, 1.5, dims))
    residual = compose_displacements(fwd, bwd)
    mean_mag = np.sqrt((residual.field ** 2).sum(axis=-1)).mean()
    assert mean_mag < 0.1


def test_warp_identity_is_bitwise():
    rng = np.random.default_rng(5)
    vol = Volume(rng.normal(size=(10, 11, 12)), (1, 1, 1))
    zero = DisplacementField(np.zeros(vol.dims + (3,)))
    out = warp(vol, AffineParams(), zero)
    np.testing.assert_array_equal(out.data, vol.data)


def test_warp_pure_translation_shifts_cube():
    lab = np.zeros((20, 20, 20), dtype=np.int32)
    lab[5:9, 5:9, 5:9] = 101
    vol = Volume(lab, (1, 1, 1), LABEL)
    out = warp(vol, AffineParams(translations=(3, 3, 3)), None, NEAREST)
    expected = np.zeros_like(lab)
    expected[8:12, 8:12, 8:12] = 101
    np.testing.assert_array_equal(out.data, expected)


def test_warp_preserves_label_alphabet(rng):
    labels = np.array([0, 101, 202, 304], dtype=np.int32)
    data = labels[rng.integers(0, 4, size=(16, 16, 16))]
    vol = Volume(data, (1, 1, 1), LABEL)
    priors = generative_priors()
    affine = sample_affine(priors, rng)
    disp = integrate_svf(sample_svf(priors, vol.dims, rng))
    out = warp(vol, affine, disp)
    assert out.labels() <= vol.labels() | {0}


def test_warp_dim_mismatch_rejected():
    vol = Volume(np.zeros((8, 8, 8)), (1, 1, 1))
    disp = DisplacementField(np.zeros((6, 6, 6, 3)))
    with pytest.raises(ValueError):
        warp(vol, None, disp)


def test_integrated_fields_are_folding_free():
    # Jacobian determinant of (id + disp) positive at >= 99.9% of interior
    # voxels over 100 generative-magnitude draws
    rng = np.random.default_rng(6)
    priors = generative_priors()
    dims = (24, 24, 24)
    bad_fraction = []
    for _ in range(100):
        disp = integrate_svf(sample_svf(priors, dims, rng))
        det = jacobian_determinant(disp)[2:-2, 2:-2, 2:-2]
        bad_fraction.append((det <= 0).mean())
    assert np.mean(bad_fraction) < 1e-3
