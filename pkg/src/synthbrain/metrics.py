"""Segmentation overlap metrics and per-region volume extraction."""

from dataclasses import dataclass

import numpy as np

# smoothing added to both numerator and denominator of the soft Dice so
# loss values are comparable across implementations
DICE_EPS = 1e-6


@dataclass(frozen=True)
class DiceReport:
    """Per-label Dice scores; labels absent from both maps are excluded
    from the mean and listed in ``absent``."""

    per_label: dict
    mean: float
    absent: tuple = ()

    def to_csv(self, tax=None):
        lines = ["label,name,dice"]
        for value in sorted(self.per_label):
            name = tax.name_of(value) if tax is not None else str(value)
            lines.append(f"{value},{name},{self.per_label[value]:.6f}")
        return "\n".join(lines) + "\n"


def hard_dice(a, b, labels=None):
    """Per-label overlap 2|A n B| / (|A| + |B|) between two label volumes."""
    if a.dims != b.dims:
        raise ValueError(f"volume dims differ: {a.dims} vs {b.dims}")
    if labels is None:
        labels = sorted(a.labels() | b.labels())
    per_label = {}
    absent = []
    for value in labels:
        value = int(value)
        in_a = a.data == value
        in_b = b.data == value
        na = int(in_a.sum())
        nb = int(in_b.sum())
        if na + nb == 0:
            absent.append(value)
            continue
        per_label[value] = 2.0 * int((in_a & in_b).sum()) / (na + nb)
    mean = float(np.mean(list(per_label.values()))) if per_label else float("nan")
    return DiceReport(per_label, mean, tuple(absent))


def soft_dice(p, q):
    """Channel-averaged soft Dice 2<P,Q> / (|P|^2 + |Q|^2), eps-smoothed."""
    if p.dims != q.dims:
        raise ValueError(f"soft map dims differ: {p.dims} vs {q.dims}")
    if p.class_ids != q.class_ids:
        raise ValueError(f"channel lists differ: {p.class_ids} vs {q.class_ids}")
    scores = np.empty(p.num_classes, dtype=np.float64)
    for c in range(p.num_classes):
        pc = p.data[c]
        qc = q.data[c]
        num = 2.0 * float((pc * qc).sum()) + DICE_EPS
        den = float((pc * pc).sum()) + float((qc * qc).sum()) + DICE_EPS
        scores[c] = num / den
    return float(scores.mean())


def region_volumes(label_vol, spacing=None):
    """Voxel count times voxel volume (mm^3) per label value."""
    spacing = label_vol.spacing if spacing is None else tuple(float(s) for s in spacing)
    voxel = spacing[0] * spacing[1] * spacing[2]
    values, counts = np.unique(label_vol.data, return_counts=True)
    return {int(v): float(c) * voxel for v, c in zip(values, counts)}


def volumes_to_csv(volumes, tax=None):
    lines = ["label,name,volume_mm3"]
    for value in sorted(volumes):
        name = tax.name_of(value) if tax is not None else str(value)
        lines.append(f"{value},{name},{volumes[value]:.6f}")
    return "\n".join(lines) + "\n"
