"""synthbrain: domain-randomized synthetic MRI generation, image
degradation, hierarchical segmentation pipelines, segmentation metrics
and volumetric ageing fits."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .volume import (INTENSITY, LABEL, NEAREST, TRILINEAR, Volume,
                     gaussian_blur, resample, resample_onto, sample_at)
from .transforms import (AffineParams, DisplacementField, VelocityField,
                         compose_displacements, integrate_svf, sample_affine,
                         sample_svf, warp)
from .intensity import (BiasField, GmmDraw, add_noise, gamma_augment,
                        normalize_01, sample_bias, sample_gmm, synthesize,
                        zero_bias)
from .labels import (LabelTaxonomy, SoftSegMap, TISSUE_CLASSES,
                     TISSUE_CLASS_IDS, corrupt_soft, default_taxonomy,
                     group_tissues, keep_predicted, load_taxonomy,
                     save_taxonomy, to_soft)
from .priors import (GenerationPriors, degradation_priors, generative_priors,
                     preset_priors)
from .generator import (TrainingPair, degrade_image, generate_dataset,
                        generate_pair_s1, generate_pair_s2, sample_parameters,
                        simulate_lr)
from .hierarchy import (PipelineSpec, Predictor, PredictorError,
                        external_predictor, run_pipeline)
from .metrics import DiceReport, hard_dice, region_volumes, soft_dice
from .volumetry import (AgeingModel, VolumeSample, bspline_design, fit_ageing,
                        predict, select_lambda)
from .nifti import NiftiHeader, NiftiParseError, read_nifti, write_nifti

__version__ = "0.1.0"
