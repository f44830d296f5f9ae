"""End-to-end sample generation.

Two pipelines share the same fixed step ordering
``deform -> gmm -> bias -> normalize -> gamma -> blur -> subsample ->
noise -> upsample`` (the GMM step is skipped when degrading real images):

* ``generate_pair_s1`` / ``generate_pair_s2`` synthesize training pairs
  from a label map under the generative priors;
* ``degrade_image`` pushes a real image and its labels through the same
  spatial transform, then degrades the image only.

Every sampled parameter is recorded in the pair's ``meta`` mapping, and
the per-index RNG streams make batch generation independent of worker
count.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .intensity import (BiasField, GmmDraw, add_noise, gamma_augment,
                        normalize_01, synthesize)
from .labels import (TISSUE_CLASS_IDS, apply_corruption, default_taxonomy,
                     draw_corruption_params, group_tissues, keep_predicted,
                     to_soft)
from .transforms import (AffineParams, VelocityField, _uniform, integrate_svf,
                         warp)
from .volume import (INTENSITY, LABEL, TRILINEAR, Volume, gaussian_blur,
                     resample, resample_onto)

# sigma_e priors are expressed on the [0, 255] intensity scale; images are
# normalized to [0, 1] before noise injection
NOISE_SCALE = 255.0

STEPS_GENERATIVE = "deform,gmm,bias,normalize,gamma,blur,subsample,noise,upsample"
STEPS_DEGRADATION = "deform,bias,normalize,gamma,blur,subsample,noise,upsample"

SVF_CONTROL = 8
BIAS_CONTROL = 4


@dataclass(frozen=True)
class TrainingPair:
    """One generated sample: image at r_HR, target labels, optional
    corrupted tissue conditioning (S2 only), and the sampled parameters."""

    image: Volume
    target: Volume
    conditioning: object = None
    meta: dict = field(default_factory=dict)


def sample_parameters(priors, rng, labels=None):
    """Draw every scalar pipeline parameter (plus GMM arrays when the
    preset has GMM ranges and a label set is given), in a fixed order."""
    params = {}
    for key, count in (("rotation", 3), ("scaling", 3), ("shearing", 3),
                       ("translation", 3)):
        for i in range(count):
            params[f"{key}_{i}"] = _uniform(rng, getattr(priors, key))
    params["sigma_v2"] = _uniform(rng, priors.sigma_v2)
    params["sigma_b2"] = _uniform(rng, priors.sigma_b2)
    params["gamma"] = _uniform(rng, priors.gamma)
    params["sigma_th"] = _uniform(rng, priors.sigma_th)
    anisotropic = bool(rng.random() < priors.axis_prob)
    axis = int(rng.integers(0, 3))
    params["aniso_axis"] = axis if anisotropic else -1
    params["r_sp"] = _uniform(rng, priors.r_sp)
    params["sigma_e"] = _uniform(rng, priors.sigma_e)
    if labels is not None and priors.gmm_mean is not None:
        values = sorted(int(v) for v in labels)
        params["gmm_labels"] = values
        params["gmm_means"] = [_uniform(rng, priors.gmm_mean) for _ in values]
        params["gmm_variances"] = [_uniform(rng, priors.gmm_variance) for _ in values]
    return params


def _affine_from(params):
    return AffineParams(
        tuple(params[f"rotation_{i}"] for i in range(3)),
        tuple(params[f"scaling_{i}"] for i in range(3)),
        tuple(params[f"shearing_{i}"] for i in range(3)),
        tuple(params[f"translation_{i}"] for i in range(3)),
    )


def _draw_svf(sigma_v2, dims, rng):
    control = math.sqrt(max(sigma_v2, 0.0)) * rng.standard_normal(
        (SVF_CONTROL, SVF_CONTROL, SVF_CONTROL, 3))
    return VelocityField(control, sigma_v2, tuple(dims))


def _draw_bias(sigma_b2, rng):
    control = math.sqrt(max(sigma_b2, 0.0)) * rng.standard_normal(
        (BIAS_CONTROL, BIAS_CONTROL, BIAS_CONTROL))
    return BiasField(control, sigma_b2)


def _target_spacing(params, spacing):
    """Slice-spacing triple: one random LR axis or isotropic LR."""
    axis = params["aniso_axis"]
    r = params["r_sp"]
    if axis >= 0:
        out = list(spacing)
        out[axis] = max(r, spacing[axis])
        return tuple(out)
    return tuple(max(r, s) for s in spacing)


def simulate_lr(vol, sigma_th, r_sp, sigma_e, rng):
    """Low-resolution simulation: blur with a slice-thickness kernel, resample
    to the slice spacing, then add scanner noise — in exactly that order.

    ``sigma_th`` is in mm and converts to voxels of the pre-blur grid; only
    axes that actually lose resolution are blurred. ``sigma_e`` is on the
    volume's current intensity scale.
    """
    if vol.kind != INTENSITY:
        raise ValueError("simulate_lr requires an intensity volume")
    sigma_th = float(sigma_th)
    if sigma_th < 0:
        raise ValueError(f"sigma_th must be >= 0, got {sigma_th}")
    r_sp = tuple(float(r) for r in r_sp)
    for r, s in zip(r_sp, vol.spacing):
        if r < s - 1e-9:
            raise ValueError(f"slice spacing {r_sp} below voxel spacing {vol.spacing}")
    sigmas = tuple(
        sigma_th / s if r > s + 1e-9 else 0.0 for r, s in zip(r_sp, vol.spacing))
    blurred = gaussian_blur(vol, sigmas) if any(s > 0 for s in sigmas) else vol
    lr = resample(blurred, r_sp, TRILINEAR)
    return add_noise(lr, sigma_e, rng)


def _degraded_image(image, params, rng):
    """Shared bias -> normalize -> gamma -> LR -> clamp -> upsample tail."""
    bias = _draw_bias(params["sigma_b2"], rng)
    biased = Volume(image.astype_float() / bias.field(image.dims),
                    image.spacing, INTENSITY)
    normalized = normalize_01(biased)
    exponentiated = gamma_augment(normalized, params["gamma"])
    r_sp = _target_spacing(params, image.spacing)
    params["r_sp_0"], params["r_sp_1"], params["r_sp_2"] = r_sp
    lr = simulate_lr(exponentiated, params["sigma_th"], r_sp,
                     params["sigma_e"] / NOISE_SCALE, rng)
    lr = Volume(np.maximum(lr.data, 0.0), lr.spacing, INTENSITY)
    return resample_onto(lr, image.dims, image.spacing, TRILINEAR)


def _generate_core(label_map, priors, rng, tax):
    if label_map.kind != LABEL:
        raise ValueError("generation starts from a label volume")
    unknown = label_map.labels() - set(tax.values)
    if unknown:
        raise ValueError(f"labels not in taxonomy: {sorted(unknown)}")
    if priors.gmm_mean is None:
        raise ValueError("training pairs require priors with GMM ranges")

    params = sample_parameters(priors, rng, labels=tax.values)
    affine = _affine_from(params)
    svf = _draw_svf(params["sigma_v2"], label_map.dims, rng)
    disp = integrate_svf(svf)
    deformed = warp(label_map, affine, disp)

    gmm = GmmDraw(np.asarray(params["gmm_means"]),
                  np.asarray(params["gmm_variances"]),
                  {v: i for i, v in enumerate(params["gmm_labels"])})
    bias = _draw_bias(params["sigma_b2"], rng)
    g = synthesize(deformed, gmm, bias, rng)
    normalized = normalize_01(g)
    exponentiated = gamma_augment(normalized, params["gamma"])
    r_sp = _target_spacing(params, label_map.spacing)
    params["r_sp_0"], params["r_sp_1"], params["r_sp_2"] = r_sp
    lr = simulate_lr(exponentiated, params["sigma_th"], r_sp,
                     params["sigma_e"] / NOISE_SCALE, rng)
    lr = Volume(np.maximum(lr.data, 0.0), lr.spacing, INTENSITY)
    image = resample_onto(lr, label_map.dims, label_map.spacing, TRILINEAR)
    params["steps"] = STEPS_GENERATIVE
    return image, deformed, params


def generate_pair_s1(label_map, priors, rng, tax=None):
    """Synthesize an (image, 4-class tissue target) pair at r_HR."""
    tax = tax or default_taxonomy()
    image, deformed, params = _generate_core(label_map, priors, rng, tax)
    target = group_tissues(deformed, tax)
    params["role"] = "s1"
    return TrainingPair(image, target, None, params)


def generate_pair_s2(label_map, priors, rng, tax=None):
    """Synthesize an (image, all-predicted-labels target) pair plus the
    corrupted 4-class soft conditioning map."""
    tax = tax or default_taxonomy()
    image, deformed, params = _generate_core(label_map, priors, rng, tax)
    target = keep_predicted(deformed, tax)
    clean = to_soft(group_tissues(deformed, tax), TISSUE_CLASS_IDS)
    radius, dilate, sigma_c = draw_corruption_params(
        rng, priors.corrupt_radius, priors.corrupt_sigma_v2)
    conditioning = apply_corruption(clean, radius, dilate, sigma_c, rng)
    params["role"] = "s2"
    params["corrupt_radius"] = radius
    params["corrupt_dilate"] = int(dilate)
    params["corrupt_sigma_v2"] = sigma_c
    return TrainingPair(image, target, conditioning, params)


def degrade_image(image, labels, priors, rng):
    """Deform image and labels identically, then degrade the image only
    (no GMM step: the image keeps its real intensities)."""
    if image.dims != labels.dims:
        raise ValueError(f"image dims {image.dims} != label dims {labels.dims}")
    if image.kind != INTENSITY or labels.kind != LABEL:
        raise ValueError("degrade_image expects (intensity, label) volumes")
    params = sample_parameters(priors, rng)
    affine = _affine_from(params)
    svf = _draw_svf(params["sigma_v2"], image.dims, rng)
    disp = integrate_svf(svf)
    warped_image = warp(image, affine, disp)
    warped_labels = warp(labels, affine, disp)
    degraded = _degraded_image(warped_image, params, rng)
    params["steps"] = STEPS_DEGRADATION
    return degraded, warped_labels


def write_meta(path, meta):
    """Serialize meta as sorted key=value lines (lists comma-joined)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(meta):
            value = meta[key]
            if isinstance(value, (list, tuple)):
                value = ",".join(repr(v) if isinstance(v, float) else str(v)
                                 for v in value)
            elif isinstance(value, float):
                value = repr(value)
            fh.write(f"{key}={value}\n")


def read_meta(path):
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or "=" not in line:
                continue
            key, value = line.split("=", 1)
            meta[key] = value
    return meta


def _generate_index(args):
    (index, label_path, out_dir, priors, role, seed, tax) = args
    from .nifti import read_nifti, write_nifti

    label_map = read_nifti(label_path)
    rng = np.random.default_rng([seed, index])
    if role == "s1":
        pair = generate_pair_s1(label_map, priors, rng, tax)
    else:
        pair = generate_pair_s2(label_map, priors, rng, tax)
    prefix = os.path.join(out_dir, str(index))
    write_nifti(f"{prefix}_image.nii.gz", pair.image)
    write_nifti(f"{prefix}_target.nii.gz", pair.target)
    if pair.conditioning is not None:
        write_nifti(f"{prefix}_cond.nii.gz", pair.conditioning)
    meta = dict(pair.meta)
    meta["index"] = index
    meta["seed"] = seed
    meta["preset"] = priors.preset
    write_meta(f"{prefix}_meta.txt", meta)
    return prefix


def generate_dataset(label_paths, out_dir, n, priors, role="s1", seed=0,
                     workers=1, tax=None):
    """Generate ``n`` training pairs into ``out_dir``.

    Output layout per index i: ``<out>/<i>_image.nii.gz``,
    ``<i>_target.nii.gz``, ``<i>_cond.nii.gz`` (S2 only) and
    ``<i>_meta.txt``. Sample i uses label map i modulo the input list and
    an RNG stream derived from (seed, i), so outputs are byte-identical
    for any worker count.
    """
    if role not in ("s1", "s2"):
        raise ValueError(f"role must be 's1' or 's2', got {role!r}")
    label_paths = [str(p) for p in label_paths]
    if not label_paths:
        raise ValueError("need at least one label map")
    os.makedirs(out_dir, exist_ok=True)
    tax = tax or default_taxonomy()
    jobs = [(i, label_paths[i % len(label_paths)], out_dir, priors, role,
             seed, tax) for i in range(n)]
    if workers <= 1:
        return [_generate_index(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_generate_index, jobs))
