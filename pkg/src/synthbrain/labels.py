"""Label taxonomy, tissue grouping, soft segmentation maps, and the
random corruption used to mimic imperfect tissue predictions.

The shipped taxonomy covers the 44 training-map regions; its integer
values are configuration, not ground truth, and can be replaced by
loading a different taxonomy file (format: ``value,name,laterality,
predicted,group`` per row, '#' comments allowed).
"""

from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from .transforms import VelocityField, integrate_svf, _uniform
from .volume import LABEL, Volume

TISSUE_CLASSES = ("background", "white matter", "grey matter", "csf", "cerebellum")
TISSUE_CLASS_IDS = (0, 1, 2, 3, 4)


class LabelEntry(NamedTuple):
    value: int
    name: str
    laterality: str      # "L", "R" or ""
    predicted: bool
    group: str


@dataclass(frozen=True)
class LabelTaxonomy:
    entries: tuple

    def __post_init__(self):
        values = [e.value for e in self.entries]
        if len(values) != len(set(values)):
            raise ValueError("duplicate label values in taxonomy")
        for e in self.entries:
            if e.group not in TISSUE_CLASSES:
                raise ValueError(f"unknown tissue group {e.group!r} for label {e.value}")
            if e.laterality not in ("", "L", "R"):
                raise ValueError(f"bad laterality {e.laterality!r} for label {e.value}")
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def values(self):
        return tuple(e.value for e in self.entries)

    @property
    def predicted_values(self):
        return tuple(e.value for e in self.entries if e.predicted)

    def name_of(self, value):
        for e in self.entries:
            if e.value == value:
                return f"{e.laterality.lower()} {e.name}".strip() if e.laterality else e.name
        return str(value)

    def group_index(self, value):
        for e in self.entries:
            if e.value == value:
                return TISSUE_CLASSES.index(e.group)
        raise KeyError(value)

    def grouping_lut(self):
        """Dense label value -> tissue class index lookup table.

        Tissue class values not claimed by the taxonomy map to themselves,
        so an already grouped map regroups to itself.
        """
        max_val = max(max(self.values), max(TISSUE_CLASS_IDS))
        lut = np.full(max_val + 1, -1, dtype=np.int32)
        for cid in TISSUE_CLASS_IDS:
            lut[cid] = cid
        for e in self.entries:
            lut[e.value] = TISSUE_CLASSES.index(e.group)
        return lut


def load_taxonomy(path):
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ValueError(f"{path}:{line_no}: expected 5 comma-separated fields")
            value, name, lat, predicted, group = (p.strip() for p in parts)
            entries.append(LabelEntry(int(value), name, lat,
                                      predicted in ("1", "true", "True"), group))
    return LabelTaxonomy(tuple(entries))


def save_taxonomy(tax, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# columns: value,name,laterality,predicted,group\n")
        for e in tax.entries:
            fh.write(f"{e.value},{e.name},{e.laterality},{int(e.predicted)},{e.group}\n")


def default_taxonomy():
    ref = resources.files("synthbrain").joinpath("data/taxonomy.txt")
    with resources.as_file(ref) as path:
        return load_taxonomy(path)


@dataclass(frozen=True)
class SoftSegMap:
    """Per-voxel class probabilities: data (C, D, H, W), channels sum to 1."""

    data: np.ndarray
    class_ids: tuple
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 4:
            raise ValueError(f"soft map data must be (C,D,H,W), got {arr.shape}")
        ids = tuple(int(c) for c in self.class_ids)
        if len(ids) != arr.shape[0]:
            raise ValueError(f"{len(ids)} class ids for {arr.shape[0]} channels")
        if arr.min() < -1e-6 or arr.max() > 1 + 1e-6:
            raise ValueError("soft map values must lie in [0, 1]")
        total = arr.sum(axis=0)
        if np.abs(total - 1.0).max() > 1e-5:
            raise ValueError("soft map channels must sum to 1 per voxel")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "class_ids", ids)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self):
        return self.data.shape[1:]

    @property
    def num_classes(self):
        return self.data.shape[0]

    def argmax_volume(self):
        """Hard labels: argmax channel mapped through class_ids (ties -> first)."""
        idx = np.argmax(self.data, axis=0)
        lut = np.asarray(self.class_ids, dtype=np.int32)
        return Volume(lut[idx], self.spacing, LABEL)


def group_tissues(label_vol, tax):
    """Collapse a full label map to background + the four tissue classes."""
    if label_vol.kind != LABEL:
        raise ValueError("group_tissues requires a label volume")
    lut = tax.grouping_lut()
    data = label_vol.data
    if data.max(initial=0) >= lut.shape[0] or np.any(lut[data] < 0):
        unknown = sorted(label_vol.labels() - set(tax.values))
        raise ValueError(f"labels not in taxonomy: {unknown}")
    return Volume(lut[data].astype(np.int32), label_vol.spacing, LABEL)


def keep_predicted(label_vol, tax):
    """Map every non-predicted label to background, keep predicted values."""
    if label_vol.kind != LABEL:
        raise ValueError("keep_predicted requires a label volume")
    unknown = label_vol.labels() - set(tax.values)
    if unknown:
        raise ValueError(f"labels not in taxonomy: {sorted(unknown)}")
    max_val = max(tax.values)
    lut = np.zeros(max_val + 1, dtype=np.int32)
    for value in tax.predicted_values:
        lut[value] = value
    return Volume(lut[label_vol.data], label_vol.spacing, LABEL)


def to_soft(label_vol, class_ids):
    """Exact one-hot encoding of a label volume over the given class ids."""
    if label_vol.kind != LABEL:
        raise ValueError("to_soft requires a label volume")
    ids = [int(c) for c in class_ids]
    extra = label_vol.labels() - set(ids)
    if extra:
        raise ValueError(f"labels not in class_ids: {sorted(extra)}")
    data = np.zeros((len(ids),) + label_vol.dims, dtype=np.float64)
    for c, value in enumerate(ids):
        data[c] = label_vol.data == value
    return SoftSegMap(data, tuple(ids), label_vol.spacing)


def _line_extremum_filter(arr, radius, axis, take_max):
    """Running max/min over a window of 2*radius+1 along one axis (edges replicate)."""
    op = np.maximum if take_max else np.minimum
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="edge")
    n = arr.shape[axis]
    out = padded.take(range(0, n), axis=axis)
    for s in range(1, 2 * radius + 1):
        out = op(out, padded.take(range(s, s + n), axis=axis))
    return out


def _cube_extremum_filter(arr, radius, take_max):
    out = arr
    for axis in range(arr.ndim):
        out = _line_extremum_filter(out, radius, axis, take_max)
    return out


def _warp_channels(data, disp):
    from .transforms import warp
    from .volume import INTENSITY, TRILINEAR
    out = np.empty_like(data)
    for c in range(data.shape[0]):
        vol = Volume(data[c], kind=INTENSITY)
        out[c] = warp(vol, None, disp, TRILINEAR).data
    return out


def draw_corruption_params(rng, radius_range=(0, 3), svf_sigma2_range=(0.0, 2.0)):
    """Draw the shared morphology choice, radius and deformation variance."""
    radius = int(rng.integers(int(radius_range[0]), int(radius_range[1]) + 1))
    dilate = bool(rng.random() < 0.5)
    sigma_v2 = _uniform(rng, tuple(svf_sigma2_range))
    return radius, dilate, sigma_v2


def apply_corruption(soft, radius, dilate, sigma_v2, rng):
    """Apply a drawn corruption: cube max/min filter per channel, then a
    small random deformation, then renormalization. Voxels whose channel
    total vanishes (possible after erosion) renormalize to uniform."""
    data = np.array(soft.data, dtype=np.float64)
    if radius > 0:
        for c in range(data.shape[0]):
            data[c] = _cube_extremum_filter(data[c], radius, dilate)
    if sigma_v2 > 0:
        control = np.sqrt(sigma_v2) * rng.standard_normal((8, 8, 8, 3))
        disp = integrate_svf(VelocityField(control, sigma_v2, soft.dims))
        data = _warp_channels(data, disp)
    np.clip(data, 0.0, None, out=data)
    total = data.sum(axis=0)
    filled = total > 1e-12
    data[:, filled] /= total[filled]
    data[:, ~filled] = 1.0 / data.shape[0]
    return SoftSegMap(data, soft.class_ids, soft.spacing)


def corrupt_soft(soft, rng, radius_range=(0, 3), svf_sigma2_range=(0.0, 2.0)):
    """Randomly dilate/erode (one choice per call, applied channel-wise)
    and spatially deform a soft map; see :func:`apply_corruption`."""
    radius, dilate, sigma_v2 = draw_corruption_params(
        rng, radius_range, svf_sigma2_range)
    return apply_corruption(soft, radius, dilate, sigma_v2, rng)
