"""ARX experts: affine prediction, Gaussian log-densities, weighted least
squares, and the variance estimators used in the M-step."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Condition-number threshold beyond which the normal equations get a ridge.
COND_LIMIT = 1e12
# Floor applied to every variance estimate; guards log-density evaluation.
VARIANCE_FLOOR = 1e-12


class RidgeFallbackWarning(UserWarning):
    """The weighted normal matrix was near-singular; a ridge was added."""


@dataclass
class ArxMode:
    """One affine expert: coefficients ``theta`` (intercept last, matching
    the extended regressor [x 1]) and noise standard deviation ``sigma``."""

    theta: np.ndarray
    sigma: float

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim != 1 or not np.isfinite(self.theta).all():
            raise ValueError("theta must be a finite vector")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class VariancePrior:
    """Inverse-gamma-style prior data for the MAP variance update.

    ``v2`` and ``ybar`` are the empirical output variance and mean of the
    training targets; ``dim`` the data dimension (1 for scalar output).
    ``strength`` defaults to dim + 2, the weakest proper choice.
    """

    v2: float
    ybar: float
    dim: int = 1
    strength: float | None = None

    def __post_init__(self):
        if self.strength is None:
            object.__setattr__(self, "strength", self.dim + 2)
        if self.v2 < 0:
            raise ValueError("v2 must be non-negative")

    @classmethod
    def from_targets(cls, y: np.ndarray, dim: int = 1) -> "VariancePrior":
        y = np.asarray(y, dtype=float)
        ybar = float(y.mean())
        return cls(v2=float(np.mean((y - ybar) ** 2)), ybar=ybar, dim=dim)


def predict(mode: ArxMode, phi: np.ndarray) -> float | np.ndarray:
    """Affine prediction theta' phi; ``phi`` may be a single extended
    regressor (r,) or a matrix (N, r)."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1] != len(mode.theta):
        raise ValueError(
            f"regressor length {phi.shape[-1]} does not match theta length "
            f"{len(mode.theta)}"
        )
    return phi @ mode.theta


def mode_log_density(mode: ArxMode, phi: np.ndarray, y) -> float | np.ndarray:
    """Gaussian log-density of ``y`` under the expert, elementwise."""
    resid = np.asarray(y, dtype=float) - predict(mode, phi)
    return (
        -0.5 * np.log(2.0 * np.pi)
        - np.log(mode.sigma)
        - resid**2 / (2.0 * mode.sigma**2)
    )


def weighted_least_squares(
    Phi: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    force_ridge: bool = False,
) -> np.ndarray:
    """Solve min_theta sum_k w_k (y_k - theta' phi_k)^2 via the normal
    equations (Phi' W Phi) theta = Phi' W y.

    The r x r system is solved with a Cholesky factorization.  If its
    condition estimate exceeds ``COND_LIMIT`` (or ``force_ridge`` is set,
    as the EM driver does for nearly empty modes), a ridge of
    1e-8 * trace / r is added to the diagonal; the spontaneous case also
    emits :class:`RidgeFallbackWarning`.
    """
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape != y.shape or len(Phi) != len(y):
        raise ValueError("Phi, y and w must have matching lengths")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    if not w.sum() > 0:
        raise ValueError("weights sum to zero")
    if not np.isfinite(Phi).all():
        raise ValueError("Phi contains non-finite values")

    A = Phi.T @ (w[:, None] * Phi)
    b = Phi.T @ (w * y)
    r = A.shape[0]
    ridge = force_ridge
    if not ridge and np.linalg.cond(A) > COND_LIMIT:
        warnings.warn(
            "weighted normal matrix is ill-conditioned; adding ridge",
            RidgeFallbackWarning,
            stacklevel=2,
        )
        ridge = True
    if ridge:
        A = A + np.eye(r) * (1e-8 * np.trace(A) / r)
    try:
        return scipy.linalg.solve(A, b, assume_a="pos")
    except np.linalg.LinAlgError:
        if ridge:
            raise
        warnings.warn(
            "weighted normal matrix factorization failed; adding ridge",
            RidgeFallbackWarning,
            stacklevel=2,
        )
        A = A + np.eye(r) * (1e-8 * np.trace(A) / r)
        return scipy.linalg.solve(A, b, assume_a="pos")


def map_variance(
    residuals: np.ndarray,
    w: np.ndarray,
    prior: VariancePrior,
    n_modes: int,
) -> float:
    """MAP estimate of one mode's noise variance.

    Returns (v2/S + V_s) / (strength + sum w + dim + 2) with
    V_s = sum_k w_k residual_k^2.  The prior mass keeps the estimate
    strictly positive even when the mode owns no samples, preventing
    variance collapse.
    """
    residuals = np.asarray(residuals, dtype=float)
    w = np.asarray(w, dtype=float)
    v_s = float(np.sum(w * residuals**2))
    denom = prior.strength + float(w.sum()) + prior.dim + 2.0
    return max((prior.v2 / n_modes + v_s) / denom, VARIANCE_FLOOR)


def pooled_mle_variance(residuals: np.ndarray, resp: np.ndarray) -> float:
    """Maximum-likelihood estimate of a single noise variance shared by all
    modes: sum_{k,s} resp * residual^2 / sum resp.  ``residuals`` and
    ``resp`` are both (N, S)."""
    residuals = np.asarray(residuals, dtype=float)
    resp = np.asarray(resp, dtype=float)
    if residuals.shape != resp.shape:
        raise ValueError("residual and responsibility shapes differ")
    return max(
        float(np.sum(resp * residuals**2) / np.sum(resp)), VARIANCE_FLOOR
    )
