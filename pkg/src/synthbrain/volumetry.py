"""Age-trajectory regression of per-region volumes.

Model: volume ~ cubic B-spline in age (10 equally spaced knots, clamped)
plus linear slice-spacing terms for the three acquisition directions and
a gender offset. Monotonicity is encouraged by a squared-hinge penalty on
the spline derivative over a dense age grid, and the penalized sum of
squares is minimized with the bounded quasi-Newton method L-BFGS-B.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

NUM_KNOTS = 10
DEGREE = 3
PENALTY_GRID = 200
GRADIENT_TOL = 1e-6
MAX_ITERATIONS = 500

DECREASING = "decreasing"
INCREASING = "increasing"


class IllPosedError(ValueError):
    """Raised when the regression design is rank-deficient."""

    def __init__(self, message, condition=None, rank=None):
        super().__init__(message)
        self.condition = condition
        self.rank = rank


@dataclass(frozen=True)
class VolumeSample:
    age: float
    gender: int            # 0 or 1
    spacing: tuple         # mm per acquisition direction
    volume: float
    region: int = 0
    subject: str = ""

    def __post_init__(self):
        object.__setattr__(self, "age", float(self.age))
        object.__setattr__(self, "gender", int(self.gender))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "volume", float(self.volume))
        if self.gender not in (0, 1):
            raise ValueError(f"gender must be 0 or 1, got {self.gender}")
        if self.volume < 0:
            raise ValueError(f"volume must be >= 0, got {self.volume}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be 3 positive reals, got {self.spacing}")


@dataclass(frozen=True)
class AgeingModel:
    """Fitted trajectory: spline coefficients plus covariate terms."""

    knots: np.ndarray          # the 10 equally spaced knots
    spline_coeffs: np.ndarray  # NUM_KNOTS + DEGREE - 1 coefficients
    spacing_slopes: np.ndarray
    gender_offset: float
    monotonicity_weight: float
    direction: str

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        if knots.shape != (NUM_KNOTS,) or np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be 10 strictly increasing values")
        steps = np.diff(knots)
        if (steps.max() - steps.min()) > 1e-8 * (knots[-1] - knots[0]):
            raise ValueError("knots must be equally spaced")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "spline_coeffs",
                           np.asarray(self.spline_coeffs, dtype=np.float64))
        object.__setattr__(self, "spacing_slopes",
                           np.asarray(self.spacing_slopes, dtype=np.float64))

    @property
    def age_range(self):
        return float(self.knots[0]), float(self.knots[-1])


def equally_spaced_knots(a_min, a_max, count=NUM_KNOTS):
    if not a_max > a_min:
        raise ValueError(f"need a_max > a_min, got [{a_min}, {a_max}]")
    return np.linspace(float(a_min), float(a_max), count)


def _clamped_knot_vector(knots):
    return np.concatenate([[knots[0]] * DEGREE, knots, [knots[-1]] * DEGREE])


def _basis_matrix(x, t, degree):
    """All B-spline basis functions of the given degree on knot vector t,
    evaluated by the Cox-de Boor recurrence (vectorized over x)."""
    x = np.asarray(x, dtype=np.float64)[:, None]
    # degree 0: half-open intervals, except the last nonempty one is closed
    b = ((x >= t[None, :-1]) & (x < t[None, 1:])).astype(np.float64)
    right = np.nonzero(t[:-1] < t[1:])[0][-1]
    b[(x[:, 0] == t[-1]), right] = 1.0
    for d in range(1, degree + 1):
        nb = len(t) - d - 1
        new = np.zeros((x.shape[0], nb))
        for i in range(nb):
            left_den = t[i + d] - t[i]
            if left_den > 0:
                new[:, i] += (x[:, 0] - t[i]) / left_den * b[:, i]
            right_den = t[i + d + 1] - t[i + 1]
            if right_den > 0:
                new[:, i] += (t[i + d + 1] - x[:, 0]) / right_den * b[:, i + 1]
        b = new
    return b


def _check_domain(ages, knots):
    ages = np.asarray(ages, dtype=np.float64)
    if ages.size and (ages.min() < knots[0] - 1e-9 or ages.max() > knots[-1] + 1e-9):
        raise ValueError(
            f"ages must lie within [{knots[0]}, {knots[-1]}]")
    return np.clip(ages, knots[0], knots[-1])


def bspline_design(ages, knots):
    """Cubic design matrix over the clamped knot vector; rows sum to 1."""
    knots = np.asarray(knots, dtype=np.float64)
    ages = _check_domain(ages, knots)
    return _basis_matrix(ages, _clamped_knot_vector(knots), DEGREE)


def bspline_deriv_design(ages, knots):
    """Rows of d/dx of each cubic basis function at the given ages."""
    knots = np.asarray(knots, dtype=np.float64)
    ages = _check_domain(ages, knots)
    t = _clamped_knot_vector(knots)
    b2 = _basis_matrix(ages, t, DEGREE - 1)
    nb = len(t) - DEGREE - 1
    out = np.zeros((ages.size, nb))
    for i in range(nb):
        den_l = t[i + DEGREE] - t[i]
        if den_l > 0:
            out[:, i] += DEGREE * b2[:, i] / den_l
        den_r = t[i + DEGREE + 1] - t[i + 1]
        if den_r > 0:
            out[:, i] -= DEGREE * b2[:, i + 1] / den_r
    return out


def _design(samples, knots):
    ages = np.array([s.age for s in samples])
    basis = bspline_design(ages, knots)
    spacings = np.array([s.spacing for s in samples])
    genders = np.array([[float(s.gender)] for s in samples])
    return np.hstack([basis, spacings, genders])


def fit_ageing(samples, lam, direction=DECREASING, knots=None, trace=None):
    """Fit the ageing model by penalized least squares (L-BFGS-B).

    Converged when the projected-gradient infinity norm drops below 1e-6
    or after 500 iterations. Raises IllPosedError on rank-deficient
    designs (e.g. constant spacing columns collinear with the spline).
    If ``trace`` is a list, the objective value after each optimizer
    iteration is appended to it.
    """
    if direction not in (DECREASING, INCREASING):
        raise ValueError(f"direction must be decreasing or increasing, got {direction!r}")
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    samples = list(samples)
    n_coef = NUM_KNOTS + DEGREE - 1
    n_params = n_coef + 4
    if len(samples) < n_params:
        raise ValueError(f"need at least {n_params} samples, got {len(samples)}")
    ages = np.array([s.age for s in samples])
    if knots is None:
        knots = equally_spaced_knots(ages.min(), ages.max())
    x = _design(samples, knots)
    y = np.array([s.volume for s in samples])

    singular = np.linalg.svd(x, compute_uv=False)
    rank = int((singular > singular[0] * max(x.shape) * np.finfo(float).eps).sum())
    if rank < n_params:
        cond = float(singular[0] / singular[-1]) if singular[-1] > 0 else math.inf
        raise IllPosedError(
            f"design matrix is rank-deficient (rank {rank} of {n_params}, "
            f"condition {cond:.3e}); volumes need varying spacing/gender "
            "and ages spanning the domain", condition=cond, rank=rank)

    grid = np.linspace(knots[0], knots[-1], PENALTY_GRID)
    deriv = bspline_deriv_design(grid, knots)
    sign = 1.0 if direction == DECREASING else -1.0

    xtx2 = 2.0 * (x.T @ x)
    xty2 = 2.0 * (x.T @ y)

    def objective(theta):
        r = x @ theta - y
        slopes = deriv @ theta[:n_coef]
        hinge = np.maximum(0.0, sign * slopes)
        value = float(r @ r + lam * (hinge @ hinge))
        grad = xtx2 @ theta - xty2
        grad[:n_coef] += 2.0 * lam * sign * (deriv.T @ hinge)
        return value, grad

    theta0, *_ = np.linalg.lstsq(x, y, rcond=None)
    callback = None
    if trace is not None:
        trace.append(objective(theta0)[0])
        callback = lambda xk: trace.append(objective(xk)[0])
    result = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                      callback=callback,
                      options={"maxiter": MAX_ITERATIONS, "gtol": GRADIENT_TOL,
                               "ftol": 1e-16, "maxfun": 10 * MAX_ITERATIONS * 5})
    theta = result.x
    return AgeingModel(knots, theta[:n_coef], theta[n_coef:n_coef + 3],
                       float(theta[n_coef + 3]), lam, direction)


def predict(model, age, gender, spacing):
    """Trajectory value f(age) + slopes . spacing + offset * gender."""
    age = float(age)
    lo, hi = model.age_range
    if age < lo - 1e-9 or age > hi + 1e-9:
        raise ValueError(f"age {age} outside fitted domain [{lo}, {hi}]")
    basis = bspline_design(np.array([age]), model.knots)[0]
    spacing = np.asarray(spacing, dtype=np.float64)
    return float(basis @ model.spline_coeffs
                 + model.spacing_slopes @ spacing
                 + model.gender_offset * float(gender))


def monotonicity_violation(model, grid_points=PENALTY_GRID):
    """Largest wrong-sign derivative of the fitted spline on a dense grid."""
    grid = np.linspace(*model.age_range, grid_points)
    slopes = bspline_deriv_design(grid, model.knots) @ model.spline_coeffs
    sign = 1.0 if model.direction == DECREASING else -1.0
    return float(np.maximum(0.0, sign * slopes).max())


def select_lambda(samples, direction=DECREASING, lambdas=None,
                  holdout_every=5, rel_tol=0.01):
    """1-D search: fit on a training split for each candidate lambda and
    keep the largest one whose held-out RMSE is within ``rel_tol`` of the
    best, then refit on all samples. Returns (lambda, model)."""
    samples = list(samples)
    if lambdas is None:
        lambdas = [0.0] + list(np.logspace(0, 12, 13))
    holdout = samples[::holdout_every]
    train = [s for i, s in enumerate(samples) if i % holdout_every]
    ages = np.array([s.age for s in samples])
    knots = equally_spaced_knots(ages.min(), ages.max())

    def rmse(model):
        errs = [predict(model, s.age, s.gender, s.spacing) - s.volume
                for s in holdout]
        return math.sqrt(float(np.mean(np.square(errs))))

    scores = []
    for lam in lambdas:
        model = fit_ageing(train, lam, direction, knots=knots)
        scores.append(rmse(model))
    best = min(scores)
    selected = max(lam for lam, score in zip(lambdas, scores)
                   if score <= best * (1.0 + rel_tol))
    return selected, fit_ageing(samples, selected, direction, knots=knots)


def load_samples_csv(path, region=None):
    """Read ``subject,age,gender,sp_x,sp_y,sp_z,region,volume_mm3`` rows."""
    samples = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"subject", "age", "gender", "sp_x", "sp_y", "sp_z",
                  "region", "volume_mm3"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise ValueError(
                f"{path}: expected columns {sorted(needed)}, got {reader.fieldnames}")
        for row in reader:
            row_region = int(row["region"])
            if region is not None and row_region != int(region):
                continue
            samples.append(VolumeSample(
                age=float(row["age"]), gender=int(row["gender"]),
                spacing=(float(row["sp_x"]), float(row["sp_y"]), float(row["sp_z"])),
                volume=float(row["volume_mm3"]), region=row_region,
                subject=row["subject"]))
    return samples


def model_to_csv(model):
    lines = ["term,value"]
    for i, k in enumerate(model.knots):
        lines.append(f"knot_{i},{k!r}")
    for i, c in enumerate(model.spline_coeffs):
        lines.append(f"coeff_{i},{c!r}")
    for i, s in enumerate(model.spacing_slopes):
        lines.append(f"spacing_slope_{i},{s!r}")
    lines.append(f"gender_offset,{model.gender_offset!r}")
    lines.append(f"lambda,{model.monotonicity_weight!r}")
    lines.append(f"direction,{model.direction}")
    return "\n".join(lines) + "\n"


def trajectory_to_csv(model, points=PENALTY_GRID, spacing=(1.0, 1.0, 1.0)):
    """Dense trajectory at reference spacing, for both gender codes."""
    lines = ["age,volume_gender0,volume_gender1"]
    for age in np.linspace(*model.age_range, points):
        v0 = predict(model, age, 0, spacing)
        v1 = predict(model, age, 1, spacing)
        lines.append(f"{age:.4f},{v0:.6f},{v1:.6f}")
    return "\n".join(lines) + "\n"
