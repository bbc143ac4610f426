"""Consistent measurement-noise variance estimation from Gram matrices.

The noisy Gram matrix decomposes as Q = Q_noise_free + sigma^2 * Q_tilde plus
a term that vanishes as the correspondence count grows. Since Q_noise_free is
singular along the true parameter vector, the largest generalized eigenvalue
mu of the pencil (Q_tilde, Q) converges to 1/sigma^2, giving the estimate
sigma2_hat = 1 / mu_max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .dlt import DltMode, DltSystem
from .errors import IllConditionedGram, InsufficientCorrespondences

# Minimum correspondence counts for Q to be invertible with probability one.
MIN_POINTS = 6
MIN_LINES = 9
MIN_COMBINED_TOTAL = 11
MIN_COMBINED_POINTS = 2
MIN_COMBINED_LINES = 5


@dataclass(frozen=True)
class VarianceEstimate:
    """Noise variance estimate in squared normalized-coordinate units.

    ``clamped`` flags the rounding case where the eigenvalue came out
    non-positive and sigma2_hat was clamped to zero.
    """

    sigma2_hat: float
    lambda_max: float
    mode: DltMode
    clamped: bool = False


def _check_counts(sys: DltSystem) -> None:
    n, m = sys.n_points, sys.n_lines
    if sys.mode is DltMode.POINT and n < MIN_POINTS:
        raise InsufficientCorrespondences(f"point mode needs n >= {MIN_POINTS}, got {n}")
    if sys.mode is DltMode.LINE and m < MIN_LINES:
        raise InsufficientCorrespondences(f"line mode needs m >= {MIN_LINES}, got {m}")
    if sys.mode is DltMode.COMBINED and (
        n + m < MIN_COMBINED_TOTAL or n < MIN_COMBINED_POINTS or m < MIN_COMBINED_LINES
    ):
        raise InsufficientCorrespondences(
            f"combined mode needs n >= {MIN_COMBINED_POINTS}, m >= {MIN_COMBINED_LINES} "
            f"and n + m >= {MIN_COMBINED_TOTAL}, got n={n}, m={m}"
        )


def _largest_pencil_eigenvalue(q_tilde: np.ndarray, q: np.ndarray) -> float:
    """Largest eigenvalue of the symmetric-definite pencil (q_tilde, q).

    Solved via the LAPACK reduction (Cholesky of q, never its explicit
    inverse). When q is not numerically positive definite (noise-free or
    near-noise-free data makes it singular along the true parameter) a tiny
    ridge regularizes the pencil; the eigenvalue then blows up and the
    caller's 1/mu estimate collapses to ~0, which is the correct limit.
    """
    dim = q.shape[0]
    ridge = 1e-13 * (np.trace(q) / dim + 1e-300)
    for attempt in range(2):
        b = q if attempt == 0 else q + ridge * np.eye(dim)
        w, _, info = lapack.dsygvd(q_tilde, b, itype=1, jobz="N", uplo="L")
        if info == 0 and np.isfinite(w[-1]):
            return float(w[-1])
        if info <= dim:  # eigensolver itself failed, a ridge will not help
            break
    raise IllConditionedGram("Gram matrix is numerically unusable for the pencil solve")


def estimate_sigma2(sys: DltSystem) -> VarianceEstimate:
    """Estimate the noise variance from a DLT system.

    Requires at least the mode's minimum correspondence count: 6 points,
    9 lines, or (n >= 2, m >= 5, n + m >= 11) combined.
    """
    _check_counts(sys)
    mu_max = _largest_pencil_eigenvalue(sys.q_tilde_sum, sys.q)
    if mu_max <= 0.0:
        return VarianceEstimate(0.0, mu_max, sys.mode, clamped=True)
    return VarianceEstimate(1.0 / mu_max, mu_max, sys.mode)
