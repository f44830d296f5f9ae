"""Random spatial augmentation: affine sampling, stationary velocity fields,
scaling-and-squaring integration, and backward warping.

The affine acts about the volume center; the nonlinear displacement is
applied in the output (affine-resampled) space, i.e. a warped volume is
``out(x) = vol(A^-1 (x + disp(x)))``. All fields are expressed in voxels.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .volume import LABEL, NEAREST, TRILINEAR, Volume

CONTROL_GRID = 8          # control points per axis for sampled velocity fields
MAX_SQUARINGS = 8


@dataclass(frozen=True)
class AffineParams:
    """Rotation (degrees), scaling, shearing and translation (voxels)."""

    rotations: tuple = (0.0, 0.0, 0.0)
    scalings: tuple = (1.0, 1.0, 1.0)
    shearings: tuple = (0.0, 0.0, 0.0)
    translations: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("rotations", "scalings", "shearings", "translations"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 3 or any(not math.isfinite(v) for v in vals):
                raise ValueError(f"{name} must be 3 finite reals, got {vals}")
            object.__setattr__(self, name, vals)
        if any(s <= 0 for s in self.scalings):
            raise ValueError(f"scalings must be positive, got {self.scalings}")

    def linear(self):
        """3x3 linear part: rotation @ shear @ scale."""
        rx, ry, rz = (math.radians(a) for a in self.rotations)
        cx, sx = math.cos(rx), math.sin(rx)
        cy, sy = math.cos(ry), math.sin(ry)
        cz, sz = math.cos(rz), math.sin(rz)
        r0 = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=np.float64)
        r1 = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=np.float64)
        r2 = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=np.float64)
        h0, h1, h2 = self.shearings
        shear = np.array([[1, h0, h1], [0, 1, h2], [0, 0, 1]], dtype=np.float64)
        return r0 @ r1 @ r2 @ shear @ np.diag(self.scalings)

    def matrix(self, dims):
        """4x4 forward map p -> lin @ (p - c) + c + t, c = volume center."""
        lin = self.linear()
        if abs(np.linalg.det(lin)) < 1e-12:
            raise ValueError("affine parameters yield a singular matrix")
        center = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0
        m = np.eye(4, dtype=np.float64)
        m[:3, :3] = lin
        m[:3, 3] = center + np.asarray(self.translations) - lin @ center
        return m

    def is_identity(self):
        return (self.rotations == (0.0, 0.0, 0.0)
                and self.scalings == (1.0, 1.0, 1.0)
                and self.shearings == (0.0, 0.0, 0.0)
                and self.translations == (0.0, 0.0, 0.0))


@dataclass(frozen=True)
class VelocityField:
    """Low-resolution stationary velocity field (voxel units).

    ``control`` has shape (n, n, n, 3) and was sampled from N(0, sigma_v2);
    it is upsampled trilinearly to ``full_res_dims`` before integration.
    """

    control: np.ndarray
    sigma_v2: float
    full_res_dims: tuple

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.control, dtype=np.float64))
        if arr.ndim != 4 or arr.shape[3] != 3:
            raise ValueError(f"control grid must be (n,n,n,3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("velocity control grid contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "control", arr)
        object.__setattr__(self, "full_res_dims", tuple(int(d) for d in self.full_res_dims))
        object.__setattr__(self, "sigma_v2", float(self.sigma_v2))


@dataclass(frozen=True)
class DisplacementField:
    """Dense per-voxel displacement, shape (D, H, W, 3), voxel units."""

    field: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.field, dtype=np.float64))
        if arr.ndim != 4 or arr.shape[3] != 3:
            raise ValueError(f"displacement must be (D,H,W,3), got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "field", arr)

    @property
    def dims(self):
        return self.field.shape[:3]


def _uniform(rng, lo_hi):
    lo, hi = lo_hi
    if lo > hi:
        raise ValueError(f"invalid prior range {lo_hi}")
    return float(rng.uniform(lo, hi))


def sample_affine(priors, rng):
    """Draw affine parameters uniformly from the preset ranges."""
    rot = tuple(_uniform(rng, priors.rotation) for _ in range(3))
    sca = tuple(_uniform(rng, priors.scaling) for _ in range(3))
    she = tuple(_uniform(rng, priors.shearing) for _ in range(3))
    tra = tuple(_uniform(rng, priors.translation) for _ in range(3))
    return AffineParams(rot, sca, she, tra)


def sample_svf(priors, dims, rng, control_points=CONTROL_GRID):
    """Draw sigma_v2 from its prior, then a control grid ~ N(0, sigma_v2)."""
    sigma_v2 = _uniform(rng, priors.sigma_v2)
    n = int(control_points)
    control = math.sqrt(max(sigma_v2, 0.0)) * rng.standard_normal((n, n, n, 3))
    return VelocityField(control, sigma_v2, tuple(dims))


def upsample_vector_grid(control, dims):
    """Trilinearly upsample an (n,n,n,C) grid to (*dims, C), FOV aligned."""
    control = np.asarray(control, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    axes = []
    for d_out, n in zip(dims, control.shape[:3]):
        o = np.arange(d_out, dtype=np.float64)
        axes.append((o + 0.5) * (n / d_out) - 0.5)
    ci, cj, ck = np.meshgrid(*axes, indexing="ij")
    ci, cj, ck = ci.reshape(-1), cj.reshape(-1), ck.reshape(-1)
    out = np.empty(dims + (control.shape[3],), dtype=np.float64)
    for c in range(control.shape[3]):
        vals = _kernels.sample_trilinear(
            np.ascontiguousarray(control[..., c]), ci, cj, ck, _kernels.MODE_CLAMP)
        out[..., c] = vals.reshape(dims)
    return out


def _sample_field(field, ci, cj, ck):
    """Sample a (D,H,W,3) field at flat coords, edge-clamped per channel."""
    out = np.empty((ci.size, 3), dtype=np.float64)
    for c in range(3):
        out[:, c] = _kernels.sample_trilinear(
            np.ascontiguousarray(field[..., c]), ci, cj, ck, _kernels.MODE_CLAMP)
    return out


def _identity_coords(dims):
    axes = [np.arange(d, dtype=np.float64) for d in dims]
    ci, cj, ck = np.meshgrid(*axes, indexing="ij")
    return ci.reshape(-1), cj.reshape(-1), ck.reshape(-1)


def compose_displacements(d1, d2):
    """Displacement of (id + d1) o (id + d2): d2(x) + d1(x + d2(x))."""
    if d1.dims != d2.dims:
        raise ValueError(f"displacement dims differ: {d1.dims} vs {d2.dims}")
    ci, cj, ck = _identity_coords(d1.dims)
    flat2 = d2.field.reshape(-1, 3)
    moved = _sample_field(d1.field, ci + flat2[:, 0], cj + flat2[:, 1],
                          ck + flat2[:, 2])
    return DisplacementField((flat2 + moved).reshape(d1.field.shape))


def integrate_svf(vf):
    """Exponentiate a stationary velocity field by scaling and squaring.

    The field is scaled by 2**-K with K chosen so the largest scaled
    displacement is below half a voxel (K capped at MAX_SQUARINGS), then
    composed with itself K times.
    """
    dense = upsample_vector_grid(vf.control, vf.full_res_dims)
    max_disp = float(np.sqrt((dense ** 2).sum(axis=-1)).max())
    if max_disp == 0.0:
        return DisplacementField(dense)
    k = max(0, math.ceil(math.log2(max_disp / 0.5)))
    k = min(k, MAX_SQUARINGS)
    disp = DisplacementField(dense / (2.0 ** k))
    for _ in range(k):
        disp = compose_displacements(disp, disp)
    return disp


def warp(vol, affine=None, disp=None, interp=TRILINEAR):
    """Backward warp: out(x) = vol(A^-1 (x + disp(x))); labels use nearest."""
    if vol.kind == LABEL:
        interp = NEAREST
    if disp is not None and disp.dims != vol.dims:
        raise ValueError(
            f"displacement dims {disp.dims} do not match volume dims {vol.dims}")
    ci, cj, ck = _identity_coords(vol.dims)
    if disp is not None:
        flat = disp.field.reshape(-1, 3)
        ci = ci + flat[:, 0]
        cj = cj + flat[:, 1]
        ck = ck + flat[:, 2]
    if affine is not None and not affine.is_identity():
        inv = np.linalg.inv(affine.matrix(vol.dims))
        pts = inv[:3, :3] @ np.vstack([ci, cj, ck]) + inv[:3, 3:4]
        ci, cj, ck = pts[0], pts[1], pts[2]
    data = vol.astype_float()
    if interp == NEAREST:
        vals = _kernels.sample_nearest(data, ci, cj, ck, _kernels.MODE_ZERO)
    else:
        vals = _kernels.sample_trilinear(data, ci, cj, ck, _kernels.MODE_ZERO)
    vals = vals.reshape(vol.dims)
    if vol.kind == LABEL:
        return Volume(np.round(vals).astype(np.int32), vol.spacing, LABEL)
    return Volume(vals, vol.spacing, vol.kind)


def jacobian_determinant(disp):
    """Central-difference Jacobian determinant of (id + disp), interior voxels."""
    phi = disp.field + np.stack(
        np.meshgrid(*[np.arange(d, dtype=np.float64) for d in disp.dims],
                    indexing="ij"), axis=-1)
    grads = np.empty(disp.dims + (3, 3), dtype=np.float64)
    for c in range(3):
        g = np.gradient(phi[..., c], axis=(0, 1, 2))
        for a in range(3):
            grads[..., c, a] = g[a]
    return np.linalg.det(grads)
