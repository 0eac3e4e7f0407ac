"""Bezier curve algebra and trajectory losses, framed as dense matrix operations.

A degree-n curve in d dimensions is stored as an (n+1) x d control point
matrix ``P``. Evaluating it at N parameter values is the product ``A @ P``
with ``A`` the N x (n+1) Bernstein matrix, and least-squares fitting is the
pseudoinverse of ``A`` applied to the sample matrix.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidArgumentError, UnderdeterminedError

MAX_DEGREE = 20
DEFAULT_LABEL_DEGREE = 5
# Singular values below this fraction of the largest are treated as zero.
PINV_RCOND = 1e-12


def binomial_coefficients(n: int) -> NDArray[np.float64]:
    """Return C(n, 0..n) by the multiplicative recurrence (exact for n <= 20)."""
    if not 0 <= n <= MAX_DEGREE:
        raise InvalidArgumentError(f"degree must be in [0, {MAX_DEGREE}], got {n}")
    coeffs = np.ones(n + 1)
    for j in range(n):
        coeffs[j + 1] = coeffs[j] * (n - j) / (j + 1)
    return coeffs


def _parameter_vector(t: ArrayLike) -> NDArray[np.float64]:
    s = np.asarray(t, dtype=float).reshape(-1)
    if s.size == 0:
        raise InvalidArgumentError("parameter vector is empty")
    if not np.all(np.isfinite(s)):
        raise InvalidArgumentError("parameter vector contains non-finite values")
    if s.min() < 0.0 or s.max() > 1.0:
        raise InvalidArgumentError("parameter vector must be normalized to [0, 1]")
    if np.any(np.diff(s) < 0.0):
        raise InvalidArgumentError("parameter vector must be non-decreasing")
    return s


def bernstein_matrix(t: ArrayLike, n: int) -> NDArray[np.float64]:
    """Build the N x (n+1) Bernstein matrix A[i, j] = C(n,j) (1-t_i)^(n-j) t_i^j.

    Args:
        t: Normalized parameter values in [0, 1], non-decreasing
        n: Curve degree

    Returns:
        Bernstein matrix; every row sums to one

    Raises:
        InvalidArgumentError: If t is not normalized or n is out of range
    """
    if n < 1:
        raise InvalidArgumentError(f"degree must be >= 1, got {n}")
    s = _parameter_vector(t)[:, None]
    j = np.arange(n + 1)
    # 0**0 == 1 keeps the endpoint rows one-hot
    return binomial_coefficients(n) * (1.0 - s) ** (n - j) * s**j


@dataclass(frozen=True, eq=False)
class BezierCurve:
    """Bezier curve given by its control point matrix (rows are points)."""

    control_points: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        points = np.array(self.control_points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidArgumentError(
                f"control points must be an (n+1) x d matrix, got shape {points.shape}"
            )
        if points.shape[0] - 1 > MAX_DEGREE:
            raise InvalidArgumentError(f"degree {points.shape[0] - 1} exceeds {MAX_DEGREE}")
        if not np.all(np.isfinite(points)):
            raise InvalidArgumentError("control points must be finite")
        points.setflags(write=False)
        object.__setattr__(self, "control_points", points)

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    @property
    def dimension(self) -> int:
        return self.control_points.shape[1]

    def __call__(self, t: ArrayLike) -> NDArray[np.float64]:
        return evaluate(self, t)

    def __repr__(self) -> str:
        return f"BezierCurve(degree={self.degree}, dimension={self.dimension})"


def evaluate(curve: BezierCurve, t: ArrayLike) -> NDArray[np.float64]:
    """Evaluate a curve at normalized parameters; returns an N x d matrix."""
    if curve.degree == 0:
        s = _parameter_vector(t)
        return np.repeat(curve.control_points, s.size, axis=0)
    return bernstein_matrix(t, curve.degree) @ curve.control_points


def derivative(curve: BezierCurve) -> BezierCurve:
    """Hodograph of ``curve``: control points n (P[k+1] - P[k]), derivative w.r.t. s."""
    n = curve.degree
    if n < 1:
        raise InvalidArgumentError("a constant curve has no derivative curve")
    return BezierCurve(n * np.diff(curve.control_points, axis=0))


def fit_least_squares(samples: ArrayLike, t: ArrayLike, n: int) -> BezierCurve:
    """Least-squares Bezier fit P* = V S^-1 U^T L via the SVD of the Bernstein matrix.

    Args:
        samples: N x d sample matrix L (a 1-D array is treated as d = 1)
        t: Normalized parameter of each sample
        n: Degree of the fitted curve

    Returns:
        Curve minimizing the Frobenius norm of A(t) P - L

    Raises:
        UnderdeterminedError: If N < n + 1
        InvalidArgumentError: On shape mismatch or non-normalized t
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    s = _parameter_vector(t)
    if data.shape[0] != s.size:
        raise InvalidArgumentError(
            f"{data.shape[0]} samples but {s.size} parameter values"
        )
    if s.size < n + 1:
        raise UnderdeterminedError(
            f"degree {n} needs at least {n + 1} samples, got {s.size}"
        )
    A = bernstein_matrix(s, n)
    U, sigma, Vt = np.linalg.svd(A, full_matrices=False)
    keep = sigma > PINV_RCOND * sigma[0]
    inv_sigma = np.zeros_like(sigma)
    inv_sigma[keep] = 1.0 / sigma[keep]
    return BezierCurve(Vt.T @ (inv_sigma[:, None] * (U.T @ data)))


def normalize_times(t: ArrayLike) -> tuple[NDArray[np.float64], float]:
    """Map strictly increasing times onto [0, 1].

    Returns:
        (s, delta_t) with s[0] == 0 and s[-1] == 1 exactly
    """
    times = np.asarray(t, dtype=float).reshape(-1)
    if times.size < 2:
        raise InvalidArgumentError("need at least two time samples")
    delta_t = float(times[-1] - times[0])
    if not delta_t > 0.0:
        raise InvalidArgumentError(f"time interval must be positive, got {delta_t}")
    if np.any(np.diff(times) <= 0.0):
        raise InvalidArgumentError("times must be strictly increasing")
    s = (times - times[0]) / delta_t
    s[0] = 0.0
    s[-1] = 1.0
    return s, delta_t


@dataclass(frozen=True)
class LossWeights:
    """Weights of the position, velocity and control point loss terms."""

    w_position: float = 1.0
    w_velocity: float = 0.1
    w_control_point: float = 0.05

    def __post_init__(self) -> None:
        weights = (self.w_position, self.w_velocity, self.w_control_point)
        if any(w < 0.0 or not np.isfinite(w) for w in weights):
            raise InvalidArgumentError(f"loss weights must be finite and >= 0, got {weights}")
        if not any(weights):
            raise InvalidArgumentError("at least one loss weight must be non-zero")

    def combine(self, position: float, velocity: float, control_point: float) -> float:
        return (
            self.w_position * position
            + self.w_velocity * velocity
            + self.w_control_point * control_point
        )


@dataclass(frozen=True)
class LossBreakdown:
    position: float
    velocity: float
    control_point: float
    total: float


def _mean_distance(a: NDArray[np.float64], b: NDArray[np.float64]) -> float:
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def bezier_loss(
    pred: BezierCurve,
    gt_points: ArrayLike,
    gt_velocities: ArrayLike,
    t: ArrayLike,
    weights: LossWeights | None = None,
) -> LossBreakdown:
    """Composite loss between a predicted curve and timed ground-truth samples.

    Args:
        pred: Predicted curve over the normalized horizon
        gt_points: N x d ground-truth positions
        gt_velocities: N x d ground-truth velocities (per second)
        t: N sample times in seconds
        weights: Term weights (defaults 1.0 / 0.1 / 0.05)

    Returns:
        Per-term mean Euclidean distances and their weighted sum. Velocities
        of the curve are rescaled from d/ds to d/dt by the horizon length.
    """
    weights = weights or LossWeights()
    points = np.asarray(gt_points, dtype=float)
    velocities = np.asarray(gt_velocities, dtype=float)
    s, delta_t = normalize_times(t)
    expected = (s.size, pred.dimension)
    if points.shape != expected or velocities.shape != expected:
        raise InvalidArgumentError(
            f"ground truth must have shape {expected}, got {points.shape} and {velocities.shape}"
        )

    position = _mean_distance(evaluate(pred, s), points)
    velocity = _mean_distance(evaluate(derivative(pred), s) / delta_t, velocities)
    reference = fit_least_squares(points, s, pred.degree)
    control_point = _mean_distance(pred.control_points, reference.control_points)
    return LossBreakdown(
        position=position,
        velocity=velocity,
        control_point=control_point,
        total=weights.combine(position, velocity, control_point),
    )


def waypoint_loss(pred: ArrayLike, gt: ArrayLike, average: bool = False) -> float:
    """Waypoint loss: sum of sqrt of per-point distances, or their mean with ``average``."""
    a = np.asarray(pred, dtype=float)
    b = np.asarray(gt, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    distances = np.linalg.norm(a - b, axis=1)
    if average:
        return float(np.mean(distances))
    return float(np.sum(np.sqrt(distances)))
