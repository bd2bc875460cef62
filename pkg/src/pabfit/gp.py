"""Gaussian Process regression with a per-dimension exponential-decay kernel.

The covariance between inputs x and x' is

    k(x, x') = v * exp(-sum_p w_p * (x_p - x'_p)^2)

with one inverse-length weight per input dimension, so each regressor
(normalized log-time, pH, thickness) carries its own relevance. The
training covariance gets a jitter ``epsilon`` on its diagonal and is
factorized once; prediction, the marginal-likelihood objective, and the
leave-one-out objective all reuse the factor. No explicit inverse is ever
formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import Contaminant, ObservationSeries, to_removal_series, transform_time
from .errors import DimensionMismatch, InvalidInput, NotPositiveDefinite
from .numeric import CholeskyFactor, DescentConfig, cholesky, gradient_descent, solve

# diagonal jitter that keeps smooth kernel matrices invertible (~sqrt eps)
DEFAULT_EPSILON = 1.490116e-08

# reference hyperparameters shipped as CLI defaults; input columns are
# (t_norm, pH, W) for lead and (t_norm, W) for methylene blue
PB_GP_HYPERPARAMS_VALUES = dict(v=0.3852, w=(0.7839, 2.8869, 2.859e-9))
MB_GP_HYPERPARAMS_VALUES = dict(v=0.2397, w=(14.6899, 2.2309))


@dataclass(frozen=True)
class GpHyperParams:
    """Signal variance, per-dimension weights, and diagonal jitter."""

    v: float
    w: tuple[float, ...]
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(x) for x in self.w))
        if not (self.v > 0) or not math.isfinite(self.v):
            raise InvalidInput(f"signal variance must be positive, got {self.v}")
        if len(self.w) == 0:
            raise InvalidInput("need at least one input-dimension weight")
        if any(not (x >= 0) for x in self.w):
            raise InvalidInput(f"weights must be >= 0, got {self.w}")
        if not (self.epsilon > 0):
            raise InvalidInput(f"jitter must be positive, got {self.epsilon}")

    @property
    def p(self) -> int:
        return len(self.w)


def pb_default_hyperparams(epsilon: float = DEFAULT_EPSILON) -> GpHyperParams:
    return GpHyperParams(epsilon=epsilon, **PB_GP_HYPERPARAMS_VALUES)


def mb_default_hyperparams(epsilon: float = DEFAULT_EPSILON) -> GpHyperParams:
    return GpHyperParams(epsilon=epsilon, **MB_GP_HYPERPARAMS_VALUES)


def default_hyperparams(contaminant: Contaminant, epsilon: float = DEFAULT_EPSILON) -> GpHyperParams:
    if contaminant is Contaminant.PB:
        return pb_default_hyperparams(epsilon)
    return mb_default_hyperparams(epsilon)


def kernel(hp: GpHyperParams, x, x2) -> float:
    """Covariance between two input points; exactly v at zero distance.

    The jitter is never added here: it belongs to training-matrix
    diagonals only.
    """
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.size != hp.p or x2.size != hp.p:
        raise DimensionMismatch(
            f"kernel inputs must have {hp.p} dimensions, got {x.size} and {x2.size}"
        )
    d = x - x2
    return float(hp.v * np.exp(-np.dot(np.asarray(hp.w), d * d)))


def _as_input_matrix(x, p: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != p:
        raise DimensionMismatch(f"inputs must be (n, {p}), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("inputs must be finite")
    return arr


def kernel_matrix(hp: GpHyperParams, x, x2=None) -> np.ndarray:
    """Cross-covariance matrix K[i, j] = kernel(hp, x[i], x2[j])."""
    xa = _as_input_matrix(x, hp.p)
    xb = xa if x2 is None else _as_input_matrix(x2, hp.p)
    d = xa[:, None, :] - xb[None, :, :]
    return hp.v * np.exp(-np.einsum("ijp,p->ij", d * d, np.asarray(hp.w)))


@dataclass(frozen=True)
class GpModel:
    """Immutable fitted state: training set, factorized covariance, weights."""

    hp: GpHyperParams
    x_train: np.ndarray
    y_train: np.ndarray
    factor: CholeskyFactor
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.y_train.size


def gp_fit(hp: GpHyperParams, x_train, y_train) -> GpModel:
    """Build K(X, X) + eps*I, factorize it, and precompute (K+eps*I)^-1 y.

    Jitter escalation beyond ``hp.epsilon`` happens only if the
    factorization fails; ``model.factor.jitter_used`` stays 0 otherwise.
    """
    x = _as_input_matrix(x_train, hp.p)
    y = np.asarray(y_train, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise DimensionMismatch(
            f"{x.shape[0]} input rows but {y.size} targets"
        )
    if y.size < 1:
        raise InvalidInput("need at least one training point")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("targets must be finite")
    cov = kernel_matrix(hp, x)
    cov[np.diag_indices_from(cov)] += hp.epsilon
    factor = cholesky(cov, initial_jitter=0.0)
    alpha = solve(factor, y)
    return GpModel(hp=hp, x_train=x.copy(), y_train=y.copy(), factor=factor, alpha=alpha)


@dataclass(frozen=True)
class GpPrediction:
    """Posterior mean and (clamped, noise-free) variance per query point."""

    mean: np.ndarray
    variance: np.ndarray

    @property
    def m(self) -> int:
        return self.mean.size

    def quantile(self, q: float) -> np.ndarray:
        """Gaussian posterior quantile, for uncertainty bands."""
        from statistics import NormalDist

        if not (0.0 < q < 1.0):
            raise InvalidInput(f"quantile level must be in (0, 1), got {q}")
        return self.mean + np.sqrt(self.variance) * NormalDist().inv_cdf(q)


def gp_predict(model: GpModel, x_new) -> GpPrediction:
    """Posterior mean k(X', X) alpha and variance v - k (K+eps*I)^-1 k^T.

    The jitter is excluded from the cross- and query-covariances, so the
    variance is for the noise-free latent; negative round-off is clamped
    to zero.
    """
    xs = _as_input_matrix(x_new, model.hp.p)
    cross = kernel_matrix(model.hp, xs, model.x_train)  # (m, n)
    mean = cross @ model.alpha
    sol = solve(model.factor, cross.T)  # (n, m)
    variance = model.hp.v - np.einsum("ij,ji->i", cross, sol)
    return GpPrediction(mean=mean, variance=np.maximum(variance, 0.0))


def gp_nlml(model: GpModel) -> float:
    """Negative log marginal likelihood from the cached factorization.

    0.5 * y^T alpha + sum_i log L_ii + (n/2) log(2 pi)
    """
    log_det_half = float(np.sum(np.log(np.diag(model.factor.lower))))
    return float(
        0.5 * np.dot(model.y_train, model.alpha)
        + log_det_half
        + 0.5 * model.n * math.log(2.0 * math.pi)
    )


def gp_loo_sse(model: GpModel) -> float:
    """Leave-one-out squared-error sum, computed from the factor.

    The held-out residual at point i is alpha_i / (K+eps*I)^-1_ii, so no
    refits are needed.
    """
    inv = solve(model.factor, np.eye(model.n))
    resid = model.alpha / np.diag(inv)
    return float(np.dot(resid, resid))


_OBJECTIVES = {"nlml": gp_nlml, "sse": gp_loo_sse}


def gp_optimize_hyperparams(
    x_train,
    y_train,
    hp0: GpHyperParams,
    objective: str = "nlml",
    config: DescentConfig | None = None,
) -> GpHyperParams:
    """Descend on log(v) and log(w_p); epsilon is held fixed.

    The log reparameterization keeps v and the weights positive. The
    returned hyperparameters never score worse than ``hp0`` on the chosen
    objective ("nlml" or "sse", the latter meaning held-out leave-one-out
    squared error).
    """
    if objective not in _OBJECTIVES:
        raise InvalidInput(f"objective must be one of {sorted(_OBJECTIVES)}, got {objective!r}")
    if any(wi <= 0 for wi in hp0.w):
        raise InvalidInput("log-space search needs strictly positive starting weights")
    score = _OBJECTIVES[objective]
    x = _as_input_matrix(x_train, hp0.p)
    y = np.asarray(y_train, dtype=float).ravel()

    def obj(theta: np.ndarray) -> float:
        with np.errstate(over="ignore"):
            vals = np.exp(theta)
        if not np.all(np.isfinite(vals)):
            return math.inf
        try:
            hp = GpHyperParams(v=float(vals[0]), w=tuple(vals[1:]), epsilon=hp0.epsilon)
            return score(gp_fit(hp, x, y))
        except NotPositiveDefinite:
            return math.inf

    theta0 = np.log(np.array([hp0.v, *hp0.w]))
    res = gradient_descent(obj, theta0, config or DescentConfig(step=0.1, tolerance=1e-9, max_iters=200))
    best = np.exp(res.x)
    return GpHyperParams(v=float(best[0]), w=tuple(float(b) for b in best[1:]), epsilon=hp0.epsilon)


def build_inputs(
    series: ObservationSeries, default_ph: float = 7.0
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Assemble the (X, y) training arrays for a series.

    Columns are (t_norm, pH, W) for lead and (t_norm, W) for methylene
    blue. Returns ``(X, y, ph_assumed)`` where ``ph_assumed`` is True when
    any pH value had to be filled from ``default_ph``; reports should
    surface that flag.
    """
    removal = to_removal_series(series)
    t_norm = transform_time(series).t_norm
    y = np.array([r.removal_fraction for r in removal])
    w = np.array([r.thickness_w for r in removal])
    if series.contaminant is Contaminant.PB:
        ph_assumed = any(r.ph is None for r in removal)
        ph = np.array([default_ph if r.ph is None else r.ph for r in removal])
        x = np.column_stack([t_norm, ph, w])
    else:
        ph_assumed = False
        x = np.column_stack([t_norm, w])
    return x, y, ph_assumed
