"""Dense 3D volumes and the resampling/blurring primitives built on them.

Conventions used throughout the package:

* voxel centers sit at ``(index + 0.5) * spacing`` in physical (mm) space;
* resampling aligns the centers of the two fields of view, which keeps
  repeated up/down-sampling from drifting by half a voxel;
* resampling clamps sample coordinates to the grid (edge replication),
  while point sampling (:func:`sample_at`) and warping return the
  background value 0 outside the grid.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

INTENSITY = "intensity"
LABEL = "label"

NEAREST = "nearest"
TRILINEAR = "trilinear"


@dataclass(frozen=True)
class Volume:
    """Immutable dense 3D grid with physical voxel spacing.

    ``kind`` is ``"intensity"`` (float64 data) or ``"label"`` (non-negative
    integer data). Arrays are copied and marked read-only on construction;
    all operations in this module are pure.
    """

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    kind: str = INTENSITY

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"every dimension must be >= 1, got {arr.shape}")
        if self.kind == LABEL:
            if not np.issubdtype(arr.dtype, np.integer):
                if not np.all(arr == np.round(arr)):
                    raise ValueError("label volume requires integer data")
            arr = arr.astype(np.int32)
            if arr.min(initial=0) < 0:
                raise ValueError("label values must be non-negative")
        elif self.kind == INTENSITY:
            arr = arr.astype(np.float64)
        else:
            raise ValueError(f"unknown volume kind {self.kind!r}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        sp = tuple(float(s) for s in self.spacing)
        if len(sp) != 3 or any(not math.isfinite(s) or s <= 0 for s in sp):
            raise ValueError(f"spacing must be 3 positive reals, got {self.spacing}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", sp)

    @property
    def dims(self):
        return self.data.shape

    @property
    def fov(self):
        """Physical extent (mm) along each axis."""
        return tuple(d * s for d, s in zip(self.dims, self.spacing))

    def labels(self):
        if self.kind != LABEL:
            raise ValueError("labels() is only defined for label volumes")
        return set(int(v) for v in np.unique(self.data))

    def astype_float(self):
        return np.asarray(self.data, dtype=np.float64)


def _grid_coords(in_dims, in_spacing, out_dims, out_spacing):
    """Per-axis input voxel coordinates of the output voxel centers."""
    coords = []
    for d_in, s, d_out, t in zip(in_dims, in_spacing, out_dims, out_spacing):
        fov_in = d_in * s
        fov_out = d_out * t
        o = np.arange(d_out, dtype=np.float64)
        coords.append(((o + 0.5) * t + 0.5 * (fov_in - fov_out)) / s - 0.5)
    return coords


def _dense_coords(axis_coords):
    ci, cj, ck = np.meshgrid(*axis_coords, indexing="ij")
    return ci.reshape(-1), cj.reshape(-1), ck.reshape(-1)


def _check_interp(vol, interp):
    if interp not in (NEAREST, TRILINEAR):
        raise ValueError(f"unknown interpolation {interp!r}")
    if vol.kind == LABEL and interp != NEAREST:
        raise ValueError("label volumes must be resampled with nearest")


def resample_onto(vol, out_dims, out_spacing, interp=TRILINEAR):
    """Resample onto an explicit output grid, fields of view center-aligned."""
    _check_interp(vol, interp)
    out_spacing = tuple(float(s) for s in out_spacing)
    if any(s <= 0 for s in out_spacing):
        raise ValueError(f"target spacing must be positive, got {out_spacing}")
    ci, cj, ck = _dense_coords(
        _grid_coords(vol.dims, vol.spacing, out_dims, out_spacing))
    data = vol.astype_float()
    if interp == NEAREST:
        vals = _kernels.sample_nearest(data, ci, cj, ck, _kernels.MODE_CLAMP)
    else:
        vals = _kernels.sample_trilinear(data, ci, cj, ck, _kernels.MODE_CLAMP)
    vals = vals.reshape(out_dims)
    if vol.kind == LABEL:
        return Volume(np.round(vals).astype(np.int32), out_spacing, LABEL)
    return Volume(vals, out_spacing, INTENSITY)


def resample(vol, target_spacing, interp=TRILINEAR):
    """Resample to a new voxel spacing; output dims = ceil(dims * spacing / target)."""
    target_spacing = tuple(float(s) for s in target_spacing)
    if any(not math.isfinite(s) or s <= 0 for s in target_spacing):
        raise ValueError(f"target spacing must be positive, got {target_spacing}")
    out_dims = tuple(
        int(math.ceil(d * s / t - 1e-9))
        for d, s, t in zip(vol.dims, vol.spacing, target_spacing))
    return resample_onto(vol, out_dims, target_spacing, interp)


def gaussian_kernel1d(sigma):
    """Discrete Gaussian truncated at 3*sigma and renormalized to sum 1."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.ones(1, dtype=np.float64)
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(vol, sigma):
    """Separable Gaussian blur, sigma per axis in voxels, zero-padded borders."""
    if vol.kind != INTENSITY:
        raise ValueError("gaussian_blur is only defined for intensity volumes")
    sigma = tuple(float(s) for s in sigma)
    if any(s < 0 for s in sigma):
        raise ValueError(f"sigma must be >= 0 per axis, got {sigma}")
    data = vol.astype_float()
    for axis, s in enumerate(sigma):
        if s > 0:
            data = _kernels.correlate1d(data, gaussian_kernel1d(s), axis)
    return Volume(data, vol.spacing, INTENSITY)


def sample_at(vol, point, interp=TRILINEAR):
    """Value at a fractional voxel coordinate; background 0 outside the grid."""
    _check_interp(vol, interp)
    ci = np.asarray([point[0]], dtype=np.float64)
    cj = np.asarray([point[1]], dtype=np.float64)
    ck = np.asarray([point[2]], dtype=np.float64)
    data = vol.astype_float()
    if interp == NEAREST:
        val = _kernels.sample_nearest(data, ci, cj, ck, _kernels.MODE_ZERO)
    else:
        val = _kernels.sample_trilinear(data, ci, cj, ck, _kernels.MODE_ZERO)
    return float(val[0])
