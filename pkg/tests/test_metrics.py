import numpy as np
import pytest

from synthbrain import LABEL, Volume, hard_dice, region_volumes, soft_dice, to_soft
from synthbrain.labels import SoftSegMap
from synthbrain.metrics import DICE_EPS


def _cube_volume(start, size=10, grid=24, value=1):
    data = np.zeros((grid, grid, grid), dtype=np.int32)
    data[start[0]:start[0] + size, start[1]:start[1] + size,
         start[2]:start[2] + size] = value
    return Volume(data, (1, 1, 1), LABEL)


def test_hard_dice_identical():
    rng = np.random.default_rng(0)
    data = rng.integers(0, 4, size=(8, 8, 8)).astype(np.int32)
    vol = Volume(data, (1, 1, 1), LABEL)
    report = hard_dice(vol, vol)
    assert all(v == 1.0 for v in report.per_label.values())
    assert report.mean == 1.0


def test_hard_dice_disjoint():
    a = _cube_volume((0, 0, 0))
    b = _cube_volume((12, 12, 12))
    report = hard_dice(a, b, labels=[1])
    assert report.per_label[1] == 0.0


def test_hard_dice_half_overlap_cube_oracle():
    # two 10^3 cubes overlapping in a 5x10x10 slab: voxel-count oracle
    a = _cube_volume((0, 0, 0))
    b = _cube_volume((5, 0, 0))
    inter = 5 * 10 * 10
    oracle = 2 * inter / (1000 + 1000)
    report = hard_dice(a, b, labels=[1])
    assert report.per_label[1] == oracle == 0.5


def test_hard_dice_absent_labels_excluded():
    a = _cube_volume((0, 0, 0))
    b = _cube_volume((0, 0, 0))
    report = hard_dice(a, b, labels=[1, 7])
    assert 7 not in report.per_label
    assert report.absent == (7,)
    assert report.mean == 1.0


def test_hard_dice_symmetry_and_relabeling(rng):
    x = rng.integers(0, 3, size=(9, 9, 9)).astype(np.int32)
    y = rng.integers(0, 3, size=(9, 9, 9)).astype(np.int32)
    a, b = Volume(x, (1, 1, 1), LABEL), Volume(y, (1, 1, 1), LABEL)
    fwd = hard_dice(a, b)
    rev = hard_dice(b, a)
    assert fwd.per_label == rev.per_label
    # consistent relabeling 0->0, 1->10, 2->20 leaves scores unchanged
    relab = np.array([0, 10, 20], dtype=np.int32)
    ar = Volume(relab[x], (1, 1, 1), LABEL)
    br = Volume(relab[y], (1, 1, 1), LABEL)
    alt = hard_dice(ar, br)
    for value, score in fwd.per_label.items():
        assert alt.per_label[relab[value]] == score


def test_hard_dice_dim_mismatch():
    a = Volume(np.zeros((4, 4, 4), dtype=np.int32), (1, 1, 1), LABEL)
    b = Volume(np.zeros((5, 4, 4), dtype=np.int32), (1, 1, 1), LABEL)
    with pytest.raises(ValueError):
        hard_dice(a, b)


def test_soft_dice_identical_one_hot(rng):
    data = rng.integers(0, 3, size=(8, 8, 8)).astype(np.int32)
    soft = to_soft(Volume(data, (1, 1, 1), LABEL), (0, 1, 2))
    assert abs(soft_dice(soft, soft) - 1.0) < 1e-5


def test_soft_dice_uniform_vs_one_hot_closed_form(rng):
    c = 4
    dims = (10, 10, 10)
    j = float(np.prod(dims))
    data = rng.integers(0, c, size=dims).astype(np.int32)
    q = to_soft(Volume(data, (1, 1, 1), LABEL), tuple(range(c)))
    p = SoftSegMap(np.full((c,) + dims, 1.0 / c), tuple(range(c)))
    got = soft_dice(p, q)
    # closed form per channel: (2|Qc|/C + eps) / (J/C^2 + |Qc| + eps)
    per_channel = []
    for ch in range(c):
        qc = float((data == ch).sum())
        per_channel.append((2.0 * qc / c + DICE_EPS)
                           / (j / c ** 2 + qc + DICE_EPS))
    assert abs(got - np.mean(per_channel)) < 1e-9


def test_soft_dice_symmetry(rng):
    a = rng.random((3, 6, 6, 6))
    a /= a.sum(axis=0)
    b = rng.random((3, 6, 6, 6))
    b /= b.sum(axis=0)
    p = SoftSegMap(a, (0, 1, 2))
    q = SoftSegMap(b, (0, 1, 2))
    assert soft_dice(p, q) == soft_dice(q, p)


def test_soft_dice_one_hot_matches_hard_dice(rng):
    x = rng.integers(0, 3, size=(12, 12, 12)).astype(np.int32)
    y = rng.integers(0, 3, size=(12, 12, 12)).astype(np.int32)
    a, b = Volume(x, (1, 1, 1), LABEL), Volume(y, (1, 1, 1), LABEL)
    ids = (0, 1, 2)
    soft = soft_dice(to_soft(a, ids), to_soft(b, ids))
    hard = hard_dice(a, b, labels=ids).mean
    assert abs(soft - hard) < 1e-6


def test_soft_dice_channel_mismatch(rng):
    a = SoftSegMap(np.ones((1, 2, 2, 2)), (0,))
    b = SoftSegMap(np.ones((1, 2, 2, 2)), (5,))
    with pytest.raises(ValueError):
        soft_dice(a, b)


def test_region_volumes():
    vol = _cube_volume((0, 0, 0), size=10)
    out = region_volumes(vol)
    assert out[1] == 1000.0
    doubled = Volume(vol.data, (2, 2, 2), LABEL)
    assert region_volumes(doubled)[1] == 8000.0
    assert 5 not in out
    # total equals the grid volume
    assert sum(out.values()) == float(np.prod(vol.dims))
