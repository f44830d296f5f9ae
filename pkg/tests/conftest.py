import numpy as np
import pytest

from synthbrain import LABEL, Volume


def radial_distance(n):
    ax = np.arange(n) - (n - 1) / 2.0
    return np.sqrt(ax[:, None, None] ** 2 + ax[None, :, None] ** 2
                   + ax[None, None, :] ** 2)


def sphere_label_map(n=48, spacing=(1.0, 1.0, 1.0)):
    """Nested-sphere label map using shipped taxonomy values."""
    r = radial_distance(n)
    lab = np.zeros((n, n, n), dtype=np.int32)
    lab[r <= 0.40 * n] = 304   # extracerebral csf
    lab[r <= 0.30 * n] = 102   # cortex (left)
    lab[r <= 0.20 * n] = 101   # white matter (left)
    lab[r <= 0.07 * n] = 103   # lateral ventricle (left)
    return Volume(lab, spacing, LABEL)


def tissue_phantom(n=96, radii=(24, 34, 42)):
    """Direct tissue-class phantom: wm core, gm shell, csf shell."""
    r = radial_distance(n)
    lab = np.zeros((n, n, n), dtype=np.int32)
    lab[r <= radii[2]] = 3
    lab[r <= radii[1]] = 2
    lab[r <= radii[0]] = 1
    return Volume(lab, (1.0, 1.0, 1.0), LABEL)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
