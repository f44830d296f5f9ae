"""Predictor abstraction and the pipeline variants that wire segmenters and
denoisers together: plain single-network segmentation, the two-stage
cascade, denoising as postprocessing, and the full hierarchy where a
denoiser sits between the tissue segmenter and the final conditional
segmenter.

External (subprocess) predictors exchange volumes through NIfTI-1 files:
3D inputs, 4D channels-last soft-map outputs, exit code 0 on success.
"""

import os
import shlex
import subprocess
import tempfile
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .labels import SoftSegMap, apply_corruption
from .volume import Volume

SYNTHSEG = "synthseg"
CASCADE = "cascade"
POSTDENOISE = "postdenoise"
SYNTHSEG_PLUS = "synthseg_plus"
VARIANTS = (SYNTHSEG, CASCADE, POSTDENOISE, SYNTHSEG_PLUS)

R_HR = (1.0, 1.0, 1.0)


class PredictorError(RuntimeError):
    """Raised when a predictor fails; carries the pipeline role if known."""


class Predictor(ABC):
    """Maps an image and/or a soft conditioning map to a soft map.

    ``class_ids`` declares the output channels; ``wants_image`` /
    ``wants_conditioning`` declare the inputs the predictor consumes.
    A single instance is not safe for concurrent calls.
    """

    class_ids: tuple = ()
    wants_image: bool = True
    wants_conditioning: bool = False

    @abstractmethod
    def predict(self, image, conditioning=None):
        """Return a SoftSegMap with dims equal to the input dims."""


class OraclePredictor(Predictor):
    """Returns a stored soft map regardless of input (testing aid)."""

    def __init__(self, soft):
        self.soft = soft
        self.class_ids = soft.class_ids

    def predict(self, image, conditioning=None):
        if image is not None and image.dims != self.soft.dims:
            raise PredictorError(
                f"oracle holds dims {self.soft.dims}, input has {image.dims}")
        return self.soft


class ConstantPredictor(Predictor):
    """Predicts one class everywhere."""

    def __init__(self, class_ids, index=0):
        self.class_ids = tuple(class_ids)
        self.index = int(index)

    def predict(self, image, conditioning=None):
        data = np.zeros((len(self.class_ids),) + image.dims)
        data[self.index] = 1.0
        return SoftSegMap(data, self.class_ids, image.spacing)


class IdentityDenoiser(Predictor):
    """Passes the conditioning through unchanged."""

    wants_image = False
    wants_conditioning = True

    def __init__(self, class_ids=()):
        self.class_ids = tuple(class_ids)

    def predict(self, image, conditioning=None):
        if conditioning is None:
            raise PredictorError("identity denoiser needs a conditioning map")
        return conditioning


class SmoothingDenoiser(Predictor):
    """Majority-style smoothing: box-mean each channel and renormalize."""

    wants_image = False
    wants_conditioning = True

    def __init__(self, class_ids=(), radius=2):
        self.class_ids = tuple(class_ids)
        self.radius = int(radius)

    def predict(self, image, conditioning=None):
        if conditioning is None:
            raise PredictorError("smoothing denoiser needs a conditioning map")
        data = np.array(conditioning.data)
        r = self.radius
        if r > 0:
            window = 2 * r + 1
            for c in range(data.shape[0]):
                for axis in range(3):
                    pad = [(0, 0)] * 3
                    pad[axis] = (r, r)
                    padded = np.pad(data[c], pad, mode="edge")
                    acc = padded.take(range(0, data[c].shape[axis]), axis=axis).copy()
                    for s in range(1, window):
                        acc += padded.take(
                            range(s, s + data[c].shape[axis]), axis=axis)
                    data[c] = acc / window
        total = data.sum(axis=0)
        total[total <= 1e-12] = 1.0
        data /= total
        return SoftSegMap(data, conditioning.class_ids, conditioning.spacing)


class CorruptingPredictor(Predictor):
    """Wraps a predictor and corrupts its output (testing aid)."""

    def __init__(self, inner, radius, svf_sigma2=0.0, seed=0):
        self.inner = inner
        self.class_ids = inner.class_ids
        self.wants_image = inner.wants_image
        self.wants_conditioning = inner.wants_conditioning
        self.radius = int(radius)
        self.svf_sigma2 = float(svf_sigma2)
        self.seed = int(seed)

    def predict(self, image, conditioning=None):
        soft = self.inner.predict(image, conditioning)
        rng = np.random.default_rng(self.seed)
        dilate = bool(rng.random() < 0.5)
        return apply_corruption(soft, self.radius, dilate, self.svf_sigma2, rng)


class ExternalPredictor(Predictor):
    """Runs a subprocess per prediction via a command template.

    The template must contain an ``{output}`` placeholder and, depending
    on the declared inputs, ``{input}`` (3D image NIfTI) and/or ``{cond}``
    (4D soft-map NIfTI). The output file must be a 4D channels-last
    NIfTI whose channel count matches ``class_ids``.
    """

    def __init__(self, command_template, class_ids, wants_image=True,
                 wants_conditioning=False):
        self.template = str(command_template)
        self.class_ids = tuple(class_ids)
        self.wants_image = bool(wants_image)
        self.wants_conditioning = bool(wants_conditioning)
        if "{output}" not in self.template:
            raise ValueError("command template needs an {output} placeholder")
        if self.wants_image and "{input}" not in self.template:
            raise ValueError("command template needs an {input} placeholder")
        if self.wants_conditioning and "{cond}" not in self.template:
            raise ValueError("command template needs a {cond} placeholder")

    def predict(self, image, conditioning=None):
        from .nifti import read_nifti, write_nifti

        with tempfile.TemporaryDirectory(prefix="synthbrain_pred_") as tmp:
            paths = {"output": os.path.join(tmp, "out.nii.gz")}
            if self.wants_image:
                if image is None:
                    raise PredictorError("external predictor expects an image")
                paths["input"] = os.path.join(tmp, "in.nii.gz")
                write_nifti(paths["input"], image)
            if self.wants_conditioning:
                if conditioning is None:
                    raise PredictorError("external predictor expects conditioning")
                paths["cond"] = os.path.join(tmp, "cond.nii.gz")
                write_nifti(paths["cond"], conditioning)
            cmd = [part.format(**paths) for part in shlex.split(self.template)]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            if proc.returncode != 0:
                raise PredictorError(
                    f"command {' '.join(cmd)} exited {proc.returncode}: "
                    f"{proc.stderr.strip()[-500:]}")
            if not os.path.exists(paths["output"]):
                raise PredictorError(f"command produced no output at {paths['output']}")
            try:
                soft = read_nifti(paths["output"])
            except ValueError as exc:
                raise PredictorError(f"malformed predictor output: {exc}") from exc
            if not isinstance(soft, SoftSegMap):
                raise PredictorError("predictor output is not a 4D soft map")
            if soft.num_classes != len(self.class_ids):
                raise PredictorError(
                    f"predictor emitted {soft.num_classes} channels, "
                    f"declared {len(self.class_ids)}")
            return SoftSegMap(soft.data, self.class_ids, soft.spacing)


def external_predictor(command_template, class_ids, wants_image=True,
                       wants_conditioning=False):
    return ExternalPredictor(command_template, class_ids, wants_image,
                             wants_conditioning)


_ROLE_REQUIREMENTS = {
    SYNTHSEG: ({"S"},),
    CASCADE: ({"S1", "S2"},),
    POSTDENOISE: ({"S", "D"}, {"S1", "S2", "D"}),
    SYNTHSEG_PLUS: ({"S1", "D", "S2"},),
}


@dataclass(frozen=True)
class PipelineSpec:
    """A variant plus the predictors filling its roles (S, S1, D, S2)."""

    variant: str
    predictors: dict

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        roles = set(self.predictors)
        options = _ROLE_REQUIREMENTS[self.variant]
        if not any(req <= roles for req in options):
            wanted = " or ".join(sorted(str(sorted(req)) for req in options))
            raise ValueError(
                f"variant {self.variant} needs roles {wanted}, got {sorted(roles)}")


def _call(predictors, role, image, conditioning=None):
    predictor = predictors[role]
    try:
        soft = predictor.predict(image, conditioning)
    except PredictorError as exc:
        raise PredictorError(f"[{role}] {exc}") from exc
    dims = image.dims if image is not None else conditioning.dims
    if soft.dims != dims:
        raise PredictorError(f"[{role}] returned dims {soft.dims}, expected {dims}")
    return soft


def run_pipeline(spec, image, target_spacing=R_HR):
    """Run a pipeline variant; returns (final label volume, intermediates).

    The image is resampled to the target high resolution first when its
    spacing differs; every predictor then works on that grid.
    """
    from .volume import TRILINEAR, resample

    if any(abs(s - t) > 1e-9 for s, t in zip(image.spacing, target_spacing)):
        image = resample(image, target_spacing, TRILINEAR)

    preds = spec.predictors
    intermediates = {}
    if spec.variant == SYNTHSEG:
        final_soft = intermediates["S"] = _call(preds, "S", image)
    elif spec.variant == CASCADE:
        tissues = intermediates["S1"] = _call(preds, "S1", image)
        final_soft = intermediates["S2"] = _call(preds, "S2", image, tissues)
    elif spec.variant == SYNTHSEG_PLUS:
        tissues = intermediates["S1"] = _call(preds, "S1", image)
        denoised = intermediates["D"] = _call(preds, "D", None, tissues)
        if denoised.num_classes != tissues.num_classes:
            raise ValueError(
                f"denoiser changed channel count {tissues.num_classes} -> "
                f"{denoised.num_classes}")
        final_soft = intermediates["S2"] = _call(preds, "S2", image, denoised)
    else:  # POSTDENOISE
        if "S" in preds:
            base = intermediates["S"] = _call(preds, "S", image)
        else:
            tissues = intermediates["S1"] = _call(preds, "S1", image)
            base = intermediates["S2"] = _call(preds, "S2", image, tissues)
        final_soft = intermediates["D"] = _call(preds, "D", None, base)
    return final_soft.argmax_volume(), intermediates
