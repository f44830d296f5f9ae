"""Kernel backend selection.

The compiled Cython module is used when it is importable; otherwise the
NumPy fallback takes over. Set ``SYNTHBRAIN_KERNEL_BACKEND=numpy`` (or
``compiled``) to force a backend, e.g. for the benchmark in
``benchmarks/bench_kernels.py`` or to test the fallback path.
"""

import os

import numpy as np

from . import fallback

MODE_ZERO = fallback.MODE_ZERO
MODE_CLAMP = fallback.MODE_CLAMP

_requested = os.environ.get("SYNTHBRAIN_KERNEL_BACKEND", "").strip().lower()

_impl = None
if _requested in ("", "compiled"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = None
        if _requested == "compiled":
            raise ImportError(
                "SYNTHBRAIN_KERNEL_BACKEND=compiled but the compiled kernel "
                "module is not available; reinstall with a C compiler"
            )
elif _requested != "numpy":
    raise ImportError(
        f"unknown SYNTHBRAIN_KERNEL_BACKEND {_requested!r}; "
        "expected 'compiled' or 'numpy'"
    )

if _impl is None:
    _impl = fallback

BACKEND = "compiled" if _impl is not fallback else "numpy"


def _as_volume(vol):
    return np.ascontiguousarray(vol, dtype=np.float64)


def _as_coords(c):
    return np.ascontiguousarray(np.asarray(c, dtype=np.float64).reshape(-1))


def sample_trilinear(vol, ci, cj, ck, mode=MODE_ZERO):
    """Trilinear sampling of a 3D volume at fractional voxel coordinates."""
    return np.asarray(_impl.sample_trilinear(
        _as_volume(vol), _as_coords(ci), _as_coords(cj), _as_coords(ck), mode))


def sample_nearest(vol, ci, cj, ck, mode=MODE_ZERO):
    """Nearest-neighbour sampling (ties round up, i.e. floor(c + 0.5))."""
    return np.asarray(_impl.sample_nearest(
        _as_volume(vol), _as_coords(ci), _as_coords(cj), _as_coords(ck), mode))


def correlate1d(vol, kernel, axis):
    """Zero-padded correlation of a 3D volume with an odd-length 1D kernel."""
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    if kernel.ndim != 1 or kernel.shape[0] % 2 != 1:
        raise ValueError("kernel must be a 1D odd-length array")
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    return np.asarray(_impl.correlate1d(_as_volume(vol), kernel, axis))
