"""Uniform prior ranges for every random parameter of the generative and
degradation pipelines, plus the flat key=value config format the CLI uses
to override them.
"""

from dataclasses import dataclass, fields, replace

GENERATIVE = "generative"
DEGRADATION = "degradation"

_RANGE_KEYS = (
    "rotation", "scaling", "shearing", "translation", "sigma_v2",
    "gmm_mean", "gmm_variance", "sigma_b2", "gamma", "sigma_th",
    "r_sp", "sigma_e", "corrupt_radius", "corrupt_sigma_v2",
)


@dataclass(frozen=True)
class GenerationPriors:
    """Per-parameter uniform ranges; GMM ranges are None for the
    degradation preset (real images keep their own intensities)."""

    preset: str
    rotation: tuple
    scaling: tuple
    shearing: tuple
    translation: tuple
    sigma_v2: tuple
    gmm_mean: tuple
    gmm_variance: tuple
    sigma_b2: tuple
    gamma: tuple
    sigma_th: tuple
    r_sp: tuple
    sigma_e: tuple
    # corruption of the S2 conditioning tissue maps (configurable; the
    # published ranges do not pin these)
    corrupt_radius: tuple = (0, 3)
    corrupt_sigma_v2: tuple = (0.0, 2.0)
    # probability of a single low-resolution slice axis instead of an
    # isotropic low resolution
    axis_prob: float = 0.5

    def __post_init__(self):
        for key in _RANGE_KEYS:
            rng = getattr(self, key)
            if rng is None:
                continue
            lo, hi = (float(rng[0]), float(rng[1]))
            if lo > hi:
                raise ValueError(f"{key}: lo {lo} > hi {hi}")
            object.__setattr__(self, key, (lo, hi))
        if not 0.0 <= self.axis_prob <= 1.0:
            raise ValueError(f"axis_prob must be in [0, 1], got {self.axis_prob}")

    def with_overrides(self, overrides):
        """Return a copy with ``{key: (lo, hi)}`` or ``{"axis_prob": p}`` applied."""
        known = {f.name for f in fields(self)}
        bad = set(overrides) - known
        if bad:
            raise ValueError(f"unknown prior keys: {sorted(bad)}")
        return replace(self, **overrides)


def generative_priors():
    return GenerationPriors(
        preset=GENERATIVE,
        rotation=(-15.0, 15.0),
        scaling=(0.85, 1.15),
        shearing=(-0.012, 0.012),
        translation=(-20.0, 20.0),
        sigma_v2=(0.0, 1.5),
        gmm_mean=(0.0, 255.0),
        gmm_variance=(0.0, 6.0),
        sigma_b2=(0.0, 0.25),
        gamma=(0.9, 1.1),
        sigma_th=(0.5, 5.0),
        r_sp=(1.0, 9.0),
        sigma_e=(0.0, 10.0),
    )


def degradation_priors():
    # the published shearing range reads [0.02, 0.02]; interpreted as the
    # symmetric interval to mirror the generative preset
    return GenerationPriors(
        preset=DEGRADATION,
        rotation=(-25.0, 25.0),
        scaling=(0.5, 1.5),
        shearing=(-0.02, 0.02),
        translation=(-50.0, 50.0),
        sigma_v2=(0.0, 4.0),
        gmm_mean=None,
        gmm_variance=None,
        sigma_b2=(0.0, 3.0),
        gamma=(0.3, 3.0),
        sigma_th=(0.5, 8.0),
        r_sp=(1.0, 12.0),
        sigma_e=(0.0, 50.0),
    )


def preset_priors(name):
    if name == GENERATIVE:
        return generative_priors()
    if name == DEGRADATION:
        return degradation_priors()
    raise ValueError(f"unknown preset {name!r}")


def parse_config(path):
    """Read a flat key=value file; duplicate keys keep the last value."""
    config = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value")
            key, value = line.split("=", 1)
            config[key.strip()] = value.strip()
    return config


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(config):
            fh.write(f"{key}={config[key]}\n")


def overrides_from_config(config):
    """Convert string config values into GenerationPriors overrides.

    Range keys use ``lo,hi``; ``axis_prob`` is a single float. Unknown
    keys are rejected by ``with_overrides``.
    """
    overrides = {}
    for key, value in config.items():
        if key == "axis_prob":
            overrides[key] = float(value)
        else:
            parts = [p for p in value.split(",") if p.strip() != ""]
            if len(parts) != 2:
                raise ValueError(f"{key}: expected 'lo,hi', got {value!r}")
            if key == "corrupt_radius":
                overrides[key] = (int(float(parts[0])), int(float(parts[1])))
            else:
                overrides[key] = (float(parts[0]), float(parts[1]))
    return overrides
