"""Dense SPD linear algebra and a finite-difference descent optimizer.

The covariance solves used by the regression models never form an explicit
inverse: a jittered Cholesky factorization is computed once and reused
through triangular solves. The optimizer is plain steepest descent with
central-difference gradients and a backtracking (halving) line search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DimensionMismatch,
    InvalidInput,
    NonFiniteObjective,
    NotPositiveDefinite,
)

# sqrt(double eps): first rung when escalating from a zero jitter; small
# enough not to distort a healthy matrix, large enough to rescue a
# near-singular one.
DEFAULT_JITTER = float(np.sqrt(np.finfo(float).eps))
JITTER_CAP = 1e-4


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor of ``M + jitter_used * I``."""

    lower: np.ndarray
    jitter_used: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def cholesky(m: np.ndarray, initial_jitter: float = 0.0) -> CholeskyFactor:
    """Factor a symmetric matrix, escalating diagonal jitter on failure.

    Parameters
    ----------
    m : (n, n) array_like
        Symmetric matrix with finite entries.
    initial_jitter : float
        Diagonal mass added before the first attempt. On failure the jitter
        grows tenfold per attempt, capped at ``JITTER_CAP``; a zero start
        enters the ladder at ``DEFAULT_JITTER``.

    Returns
    -------
    CholeskyFactor
        Factor of ``m + jitter_used * I`` with the jitter actually applied.

    Raises
    ------
    NotPositiveDefinite
        If the factorization fails even at the jitter cap.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput("matrix entries must be finite")
    if initial_jitter < 0:
        raise InvalidInput("initial_jitter must be non-negative")

    jitter = float(initial_jitter)
    eye = np.eye(m.shape[0])
    while True:
        try:
            lower = np.linalg.cholesky(m if jitter == 0.0 else m + jitter * eye)
            return CholeskyFactor(lower=lower, jitter_used=jitter)
        except np.linalg.LinAlgError:
            if jitter >= JITTER_CAP:
                raise NotPositiveDefinite(
                    f"matrix not positive definite even with jitter {JITTER_CAP:g}"
                ) from None
            jitter = min(JITTER_CAP, jitter * 10.0 if jitter > 0.0 else DEFAULT_JITTER)


def solve(factor: CholeskyFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(M + jitter_used * I) x = rhs`` via two triangular solves.

    ``rhs`` may be a vector or a matrix of stacked right-hand-side columns.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != factor.n:
        raise DimensionMismatch(
            f"rhs has leading dimension {rhs.shape[0]}, factor is {factor.n}x{factor.n}"
        )
    y = solve_triangular(factor.lower, rhs, lower=True)
    return solve_triangular(factor.lower.T, y, lower=False)


@dataclass(frozen=True)
class DescentConfig:
    step: float = 0.1
    tolerance: float = 1e-10
    max_iters: int = 1000
    max_move: float = 1.0  # per-iteration cap on the largest coordinate move


@dataclass(frozen=True)
class DescentResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def finite_difference_gradient(
    objective: Callable[[np.ndarray], float], x: np.ndarray
) -> np.ndarray:
    """Central-difference gradient with per-coordinate step max(1e-6, 1e-6|x_i|)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = max(1e-6, 1e-6 * abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        fp = float(objective(xp))
        fm = float(objective(xm))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFiniteObjective(
                f"objective non-finite while differentiating coordinate {i}"
            )
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


_MIN_STEP = 1e-18
_MAX_STEP_GROWTH = 1024.0  # keeps the doubled step bounded on flat objectives


def gradient_descent(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float] | np.ndarray,
    config: DescentConfig | None = None,
) -> DescentResult:
    """Minimize a scalar objective by backtracking steepest descent.

    Each iteration takes a step ``-step * grad`` (rescaled so no coordinate
    moves more than ``config.max_move``, which keeps a huge early gradient
    from tunneling into a flat far-away region); the step halves until the
    objective strictly decreases and doubles after an accepted move.
    Terminates when an accepted decrease falls below ``config.tolerance``,
    when no decrease can be found, or at ``config.max_iters``.

    The returned point never has a higher objective than ``x0``. A NaN
    objective anywhere, or a non-finite value at a differentiation point,
    raises :class:`NonFiniteObjective`; an overflowing (infinite) value at
    a trial point is treated as an ordinary increase and backtracked.
    """
    config = config or DescentConfig()
    if config.max_iters < 1:
        raise InvalidInput("max_iters must be at least 1")
    x = np.asarray(x0, dtype=float).copy()
    f = float(objective(x))
    if not math.isfinite(f):
        raise NonFiniteObjective("objective not finite at the starting point")

    step = config.step
    iterations = 0
    converged = False
    for _ in range(config.max_iters):
        iterations += 1
        grad = finite_difference_gradient(objective, x)
        if not np.any(grad):
            converged = True
            break
        cap = config.max_move / float(np.max(np.abs(grad)))
        f_trial = f
        trial = x
        while step > _MIN_STEP:
            scale = min(step, cap)
            trial = x - scale * grad
            f_trial = float(objective(trial))
            if math.isnan(f_trial):
                raise NonFiniteObjective("objective returned NaN during descent")
            if f_trial < f:
                step = scale  # the scale actually used seeds the next doubling
                break
            step = scale * 0.5
        else:
            converged = True
            break
        delta = f - f_trial
        x, f = trial, f_trial
        step = min(step * 2.0, _MAX_STEP_GROWTH * config.step)
        if delta < config.tolerance:
            converged = True
            break
    return DescentResult(x=x, fun=f, iterations=iterations, converged=converged)
