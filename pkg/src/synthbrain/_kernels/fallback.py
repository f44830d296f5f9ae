"""Pure-NumPy implementations of the hot sampling/convolution kernels.

Same contracts as the compiled module ``_core``: float64 C-contiguous
volumes, flat float64 coordinate arrays in voxel units, ``mode`` 0 for
zero background outside the grid and 1 for edge clamping.
"""

import numpy as np

MODE_ZERO = 0
MODE_CLAMP = 1


def sample_trilinear(vol, ci, cj, ck, mode=MODE_ZERO):
    d0, d1, d2 = vol.shape
    if mode == MODE_CLAMP:
        ci = np.clip(ci, 0.0, d0 - 1.0)
        cj = np.clip(cj, 0.0, d1 - 1.0)
        ck = np.clip(ck, 0.0, d2 - 1.0)
    i0 = np.floor(ci)
    j0 = np.floor(cj)
    k0 = np.floor(ck)
    fi = ci - i0
    fj = cj - j0
    fk = ck - k0
    i0 = i0.astype(np.int64)
    j0 = j0.astype(np.int64)
    k0 = k0.astype(np.int64)

    out = np.zeros(ci.shape, dtype=np.float64)
    flat = vol.reshape(-1)
    for di in (0, 1):
        wi = fi if di else 1.0 - fi
        ii = i0 + di
        for dj in (0, 1):
            wj = fj if dj else 1.0 - fj
            jj = j0 + dj
            for dk in (0, 1):
                wk = fk if dk else 1.0 - fk
                kk = k0 + dk
                if mode == MODE_CLAMP:
                    ic = np.clip(ii, 0, d0 - 1)
                    jc = np.clip(jj, 0, d1 - 1)
                    kc = np.clip(kk, 0, d2 - 1)
                    out += wi * wj * wk * flat[(ic * d1 + jc) * d2 + kc]
                else:
                    valid = ((ii >= 0) & (ii < d0) & (jj >= 0) & (jj < d1)
                             & (kk >= 0) & (kk < d2))
                    ic = np.where(valid, ii, 0)
                    jc = np.where(valid, jj, 0)
                    kc = np.where(valid, kk, 0)
                    vals = flat[(ic * d1 + jc) * d2 + kc]
                    out += np.where(valid, wi * wj * wk * vals, 0.0)
    return out


def sample_nearest(vol, ci, cj, ck, mode=MODE_ZERO):
    d0, d1, d2 = vol.shape
    ii = np.floor(ci + 0.5).astype(np.int64)
    jj = np.floor(cj + 0.5).astype(np.int64)
    kk = np.floor(ck + 0.5).astype(np.int64)
    if mode == MODE_CLAMP:
        ii = np.clip(ii, 0, d0 - 1)
        jj = np.clip(jj, 0, d1 - 1)
        kk = np.clip(kk, 0, d2 - 1)
        return vol.reshape(-1)[(ii * d1 + jj) * d2 + kk].astype(np.float64)
    valid = ((ii >= 0) & (ii < d0) & (jj >= 0) & (jj < d1)
             & (kk >= 0) & (kk < d2))
    ic = np.where(valid, ii, 0)
    jc = np.where(valid, jj, 0)
    kc = np.where(valid, kk, 0)
    vals = vol.reshape(-1)[(ic * d1 + jc) * d2 + kc]
    return np.where(valid, vals, 0.0)


def correlate1d(vol, kernel, axis):
    """Zero-padded correlation along one axis; kernel length must be odd."""
    radius = (len(kernel) - 1) // 2
    moved = np.moveaxis(vol, axis, 0)
    n = moved.shape[0]
    padded = np.zeros((n + 2 * radius,) + moved.shape[1:], dtype=np.float64)
    padded[radius:radius + n] = moved
    out = np.zeros_like(moved)
    for t, w in enumerate(kernel):
        if w != 0.0:
            out += w * padded[t:t + n]
    return np.ascontiguousarray(np.moveaxis(out, 0, axis))
