"""Label-conditioned intensity synthesis: per-label Gaussian draws, smooth
multiplicative bias sampled in the log domain, min-max normalization,
gamma corruption and additive scanner noise.

The synthetic image G satisfies G_j * B_j ~ N(mu_L_j, sigma2_L_j), so the
emitted value is the Gaussian draw divided by the exponentiated log-bias.
"""

import math
from dataclasses import dataclass

import numpy as np

from .transforms import _uniform, upsample_vector_grid
from .volume import INTENSITY, LABEL, Volume

BIAS_CONTROL_GRID = 4


@dataclass(frozen=True)
class GmmDraw:
    """Per-label Gaussian parameters; one entry per label in the label set."""

    means: np.ndarray
    variances: np.ndarray
    label_index: dict

    def __post_init__(self):
        means = np.ascontiguousarray(np.asarray(self.means, dtype=np.float64))
        variances = np.ascontiguousarray(np.asarray(self.variances, dtype=np.float64))
        if means.shape != variances.shape or means.ndim != 1:
            raise ValueError("means and variances must be 1D arrays of equal length")
        if len(self.label_index) != means.shape[0]:
            raise ValueError("label_index must have one entry per component")
        if np.any(variances < 0):
            raise ValueError("variances must be non-negative")
        means.flags.writeable = False
        variances.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "label_index",
                           {int(k): int(v) for k, v in self.label_index.items()})


@dataclass(frozen=True)
class BiasField:
    """Low-resolution log-bias control grid; exp(upsampled) multiplies G."""

    control: np.ndarray
    sigma_b2: float

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.control, dtype=np.float64))
        if arr.ndim != 3:
            raise ValueError(f"bias control grid must be 3D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("bias control grid contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "control", arr)
        object.__setattr__(self, "sigma_b2", float(self.sigma_b2))

    def field(self, dims):
        """Dense strictly positive bias field at the requested dims."""
        log_bias = upsample_vector_grid(self.control[..., None], dims)[..., 0]
        return np.exp(log_bias)


def zero_bias():
    return BiasField(np.zeros((BIAS_CONTROL_GRID,) * 3), 0.0)


def sample_gmm(labels, priors, rng):
    """Uniform mean/variance draws for every label, in sorted label order."""
    labels = sorted(int(v) for v in labels)
    if not labels:
        raise ValueError("label set must be non-empty")
    if priors.gmm_mean is None or priors.gmm_variance is None:
        raise ValueError(f"preset {priors.preset!r} has no GMM ranges")
    means = np.array([_uniform(rng, priors.gmm_mean) for _ in labels])
    variances = np.array([_uniform(rng, priors.gmm_variance) for _ in labels])
    return GmmDraw(means, variances, {v: i for i, v in enumerate(labels)})


def sample_bias(priors, rng, control_points=BIAS_CONTROL_GRID):
    sigma_b2 = _uniform(rng, priors.sigma_b2)
    n = int(control_points)
    control = math.sqrt(max(sigma_b2, 0.0)) * rng.standard_normal((n, n, n))
    return BiasField(control, sigma_b2)


def synthesize(label_vol, gmm, bias, rng):
    """Draw G from the per-label Gaussians and divide by the bias field."""
    if label_vol.kind != LABEL:
        raise ValueError("synthesize requires a label volume")
    present = label_vol.labels()
    missing = present - set(gmm.label_index)
    if missing:
        raise ValueError(f"labels without GMM entry: {sorted(missing)}")
    max_label = max(gmm.label_index)
    mean_lut = np.zeros(max_label + 1, dtype=np.float64)
    std_lut = np.zeros(max_label + 1, dtype=np.float64)
    for value, idx in gmm.label_index.items():
        mean_lut[value] = gmm.means[idx]
        std_lut[value] = math.sqrt(gmm.variances[idx])
    mu = mean_lut[label_vol.data]
    std = std_lut[label_vol.data]
    g = mu + std * rng.standard_normal(label_vol.dims)
    g /= bias.field(label_vol.dims)
    return Volume(g, label_vol.spacing, INTENSITY)


def normalize_01(vol):
    """Min-max rescale to [0, 1]; a constant volume maps to all zeros."""
    if vol.kind != INTENSITY:
        raise ValueError("normalize_01 requires an intensity volume")
    data = vol.astype_float()
    lo = data.min()
    hi = data.max()
    if hi == lo:
        return Volume(np.zeros(vol.dims), vol.spacing, INTENSITY)
    return Volume((data - lo) / (hi - lo), vol.spacing, INTENSITY)


def gamma_augment(vol, gamma):
    """Voxel-wise exponentiation of a [0, 1] image by a single exponent."""
    if vol.kind != INTENSITY:
        raise ValueError("gamma_augment requires an intensity volume")
    gamma = float(gamma)
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    data = vol.astype_float()
    if data.min() < -1e-9 or data.max() > 1 + 1e-9:
        raise ValueError("gamma_augment expects intensities in [0, 1]")
    return Volume(np.clip(data, 0.0, 1.0) ** gamma, vol.spacing, INTENSITY)


def add_noise(vol, sigma, rng):
    """Add i.i.d. zero-mean Gaussian noise of the given std (current scale)."""
    if vol.kind != INTENSITY:
        raise ValueError("add_noise requires an intensity volume")
    sigma = float(sigma)
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return vol
    data = vol.astype_float() + sigma * rng.standard_normal(vol.dims)
    return Volume(data, vol.spacing, INTENSITY)
