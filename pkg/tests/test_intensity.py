import numpy as np
import pytest

from synthbrain import (INTENSITY, LABEL, Volume, add_noise, degradation_priors,
                        gamma_augment, generative_priors, normalize_01,
                        sample_bias, sample_gmm, synthesize, zero_bias)
from synthbrain.intensity import BiasField, GmmDraw


def test_sample_gmm_ranges(rng):
    priors = generative_priors()
    draw = sample_gmm(range(44), priors, rng)
    assert draw.means.shape == (44,)
    assert np.all((draw.means >= 0) & (draw.means <= 255))
    assert np.all((draw.variances >= 0) & (draw.variances <= 6))


def test_sample_gmm_single_label(rng):
    draw = sample_gmm([7], generative_priors(), rng)
    assert draw.means.shape == (1,)
    assert draw.label_index == {7: 0}


def test_sample_gmm_deterministic():
    priors = generative_priors()
    a = sample_gmm([1, 2, 3], priors, np.random.default_rng(11))
    b = sample_gmm([1, 2, 3], priors, np.random.default_rng(11))
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.variances, b.variances)


def test_sample_gmm_errors(rng):
    with pytest.raises(ValueError):
        sample_gmm([], generative_priors(), rng)
    with pytest.raises(ValueError):
        sample_gmm([1], degradation_priors(), rng)


def test_synthesize_statistics():
    n = 48  # > 1e5 voxels
    lab = Volume(np.zeros((n, n, n), dtype=np.int32), (1, 1, 1), LABEL)
    gmm = GmmDraw(np.array([100.0]), np.array([4.0]), {0: 0})
    out = synthesize(lab, gmm, zero_bias(), np.random.default_rng(0))
    assert 99.9 <= out.data.mean() <= 100.1
    assert 3.8 <= out.data.var() <= 4.2


def test_synthesize_zero_variance_piecewise_constant(rng):
    lab_data = np.zeros((10, 10, 10), dtype=np.int32)
    lab_data[5:] = 3
    lab = Volume(lab_data, (1, 1, 1), LABEL)
    gmm = GmmDraw(np.array([10.0, 200.0]), np.array([0.0, 0.0]), {0: 0, 3: 1})
    out = synthesize(lab, gmm, zero_bias(), rng)
    np.testing.assert_array_equal(out.data[:5], 10.0)
    np.testing.assert_array_equal(out.data[5:], 200.0)


def test_synthesize_missing_label_rejected(rng):
    lab = Volume(np.full((4, 4, 4), 9, dtype=np.int32), (1, 1, 1), LABEL)
    gmm = GmmDraw(np.array([1.0]), np.array([1.0]), {0: 0})
    with pytest.raises(ValueError):
        synthesize(lab, gmm, zero_bias(), rng)


def test_eq1_per_label_statistics_property():
    # empirical per-label mean/variance within 3 standard errors
    rng = np.random.default_rng(42)
    n = 32
    for trial in range(5):
        lab_data = rng.integers(0, 3, size=(n, n, n)).astype(np.int32)
        lab = Volume(lab_data, (1, 1, 1), LABEL)
        gmm = sample_gmm([0, 1, 2], generative_priors(), rng)
        out = synthesize(lab, gmm, zero_bias(), rng)
        for value, idx in gmm.label_index.items():
            vals = out.data[lab_data == value]
            m = vals.size
            mu, var = gmm.means[idx], gmm.variances[idx]
            se_mean = np.sqrt(var / m)
            se_var = var * np.sqrt(2.0 / (m - 1))
            assert abs(vals.mean() - mu) <= 3 * se_mean + 1e-12
            assert abs(vals.var(ddof=1) - var) <= 3 * se_var + 1e-12


def test_bias_multiplicativity():
    lab = Volume(np.zeros((8, 8, 8), dtype=np.int32), (1, 1, 1), LABEL)
    gmm = GmmDraw(np.array([50.0]), np.array([2.0]), {0: 0})
    control = np.random.default_rng(1).normal(size=(4, 4, 4))
    b1 = BiasField(control, 1.0)
    b2 = BiasField(control + np.log(2.0), 1.0)  # doubles exp everywhere
    out1 = synthesize(lab, gmm, b1, np.random.default_rng(5))
    out2 = synthesize(lab, gmm, b2, np.random.default_rng(5))
    # exact up to exp/interpolation rounding (a few ulp)
    np.testing.assert_allclose(out2.data, out1.data / 2.0, rtol=1e-12)


def test_sample_bias_prior(rng):
    for _ in range(50):
        bias = sample_bias(generative_priors(), rng)
        assert 0 <= bias.sigma_b2 <= 0.25
        assert np.all(bias.field((6, 6, 6)) > 0)


def test_normalize_01():
    vol = Volume(np.linspace(10, 20, 27).reshape(3, 3, 3), (1, 1, 1))
    out = normalize_01(vol)
    assert out.data.min() == 0.0
    assert out.data.max() == 1.0
    const = Volume(np.full((3, 3, 3), 4.2), (1, 1, 1))
    np.testing.assert_array_equal(normalize_01(const).data, 0.0)


def test_normalize_affine_invariance(rng):
    data = rng.normal(size=(8, 8, 8))
    vol = Volume(data, (1, 1, 1))
    scaled = Volume(3.7 * data + 11.0, (1, 1, 1))
    np.testing.assert_allclose(normalize_01(scaled).data,
                               normalize_01(vol).data, atol=1e-6)


def test_gamma_augment():
    data = np.linspace(0, 1, 27).reshape(3, 3, 3)
    vol = Volume(data, (1, 1, 1))
    np.testing.assert_array_equal(gamma_augment(vol, 1.0).data, data)
    out = gamma_augment(vol, 2.5)
    assert out.data[0, 0, 0] == 0.0
    assert out.data[-1, -1, -1] == 1.0
    # monotone: preserves voxel-wise ordering
    flat_in = data.ravel()
    flat_out = out.data.ravel()
    order = np.argsort(flat_in)
    assert np.all(np.diff(flat_out[order]) >= 0)
    with pytest.raises(ValueError):
        gamma_augment(vol, 0.0)
    with pytest.raises(ValueError):
        gamma_augment(Volume(data + 5.0, (1, 1, 1)), 1.1)


def test_gamma_prior_ranges():
    assert generative_priors().gamma == (0.9, 1.1)
    assert degradation_priors().gamma == (0.3, 3.0)


def test_add_noise():
    vol = Volume(np.full((48, 48, 48), 100.0), (1, 1, 1))
    same = add_noise(vol, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(same.data, vol.data)
    out = add_noise(vol, 7.0, np.random.default_rng(0))
    sample_std = (out.data - vol.data).std()
    assert abs(sample_std - 7.0) / 7.0 < 0.05
    assert generative_priors().sigma_e == (0.0, 10.0)
    assert degradation_priors().sigma_e == (0.0, 50.0)
