"""Fisher information and the constrained Cramer-Rao bound.

The parameter is theta = vec([R t]) in R^12 (column-major). Because R is
constrained to SO(3), the plain inverse Fisher matrix is not the right
bound; instead the six orthonormality constraints h(theta) = 0 are imposed
and the bound becomes F_c = U (U^T F U)^-1 U^T, where the columns of U span
the nullspace of the constraint Jacobian H = dh/dtheta^T. The scalar bound
tr(F_c) is what estimator MSE (Frobenius for R plus Euclidean for t) is
benchmarked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import (
    DEPTH_EPS,
    LineCorrespondences,
    PointCorrespondences,
    camera_frame,
    homogeneous,
    project_line,
)
from .errors import BehindCamera, RankDeficientConstraints, SingularProjectedFisher
from .so3 import Pose, hat

_E_PROJ = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class CrbResult:
    """Fisher information, constrained bound matrix and its trace."""

    fisher: np.ndarray       # (12, 12)
    constrained: np.ndarray  # (12, 12), rank <= 6
    trace_bound: float

    @property
    def rotation_block_trace(self) -> float:
        return float(np.trace(self.constrained[:9, :9]))

    @property
    def translation_block_trace(self) -> float:
        return float(np.trace(self.constrained[9:, 9:]))


def _point_theta_jacobians(pose: Pose, points: PointCorrespondences) -> np.ndarray:
    """d r_pi / d theta^T blocks, (n, 2, 12)."""
    g = camera_frame(pose, points.world)
    den = g[:, 2]
    if np.any(den <= DEPTH_EPS):
        raise BehindCamera("point depth is not positive at the true pose")
    num = g[:, :2]
    core = (num[:, :, None] * _E3 - den[:, None, None] * _E_PROJ) / (
        den * den
    )[:, None, None]
    n = len(points)
    # d r / d vec(R): column 3a+b carries X[a] * core[:, b].
    d_rot = np.einsum("na,nkb->nkab", points.world, core).reshape(n, 2, 9)
    return np.concatenate([d_rot, core], axis=2)


def _line_theta_jacobians(pose: Pose, lines: LineCorrespondences) -> np.ndarray:
    """d r_lj / d theta^T blocks, (m, 2, 12)."""
    r, t = pose.rotation, pose.translation
    m = len(lines)
    w = np.stack([homogeneous(lines.image_p), homogeneous(lines.image_q)], axis=1)
    wt = np.einsum("mkc,cb->mkb", w, hat(t))
    d_rot = (
        np.einsum("ma,mkb->mkab", lines.moment, w)
        + np.einsum("ma,mkb->mkab", lines.direction, wt)
    ).reshape(m, 2, 9)
    d_t = -np.einsum("mkc,mcj->mkj", w, hat(lines.direction @ r.T))
    return np.concatenate([d_rot, d_t], axis=2)


def fisher_information(
    true_pose: Pose,
    points: PointCorrespondences | None,
    lines: LineCorrespondences | None,
    sigma2: float,
) -> np.ndarray:
    """Fisher information of theta = vec([R t]) at the true pose.

    Sums weighted outer products of the residual Jacobians: points carry
    weight 1/sigma2, lines 1/sigma_j^2 with sigma_j evaluated at the true
    pose.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    fisher = np.zeros((12, 12))
    if points is not None and len(points):
        jac = _point_theta_jacobians(true_pose, points)
        fisher += np.einsum("nki,nkj->ij", jac, jac) / sigma2
    if lines is not None and len(lines):
        jac = _line_theta_jacobians(true_pose, lines)
        l_bar = project_line(true_pose, lines.world)
        sigma_j2 = sigma2 * np.sum(l_bar[:, :2] ** 2, axis=1)
        fisher += np.einsum("m,mki,mkj->ij", 1.0 / sigma_j2, jac, jac)
    return 0.5 * (fisher + fisher.T)


def constraint_jacobian(theta12: np.ndarray) -> np.ndarray:
    """Jacobian H (6 x 12) of the six orthonormality constraints on vec(R).

    Constraint order: |c1|^2-1, c2.c1, c3.c1, |c2|^2-1, c3.c2, |c3|^2-1,
    where c_k is the k-th column of R (theta[3(k-1):3k]).
    """
    theta12 = np.asarray(theta12, dtype=float)
    c1, c2, c3 = theta12[0:3], theta12[3:6], theta12[6:9]
    h = np.zeros((6, 12))
    h[0, 0:3] = 2.0 * c1
    h[1, 0:3] = c2
    h[1, 3:6] = c1
    h[2, 0:3] = c3
    h[2, 6:9] = c1
    h[3, 3:6] = 2.0 * c2
    h[4, 3:6] = c3
    h[4, 6:9] = c2
    h[5, 6:9] = 2.0 * c3
    return h


def constrained_crb(fisher: np.ndarray, theta12: np.ndarray) -> CrbResult:
    """Constrained Cramer-Rao bound F_c = U (U^T F U)^-1 U^T.

    U is an orthonormal nullspace basis of the constraint Jacobian (any such
    basis gives the same F_c). Raises RankDeficientConstraints when H loses
    row rank and SingularProjectedFisher when U^T F U is unusable.
    """
    h = constraint_jacobian(theta12)
    _, sv, vt = np.linalg.svd(h)
    if sv[5] <= 1e-10 * sv[0]:
        raise RankDeficientConstraints("constraint Jacobian is rank deficient")
    u = vt[6:].T  # (12, 6) orthonormal, H @ u = 0

    projected = u.T @ fisher @ u
    eigvals = np.linalg.eigvalsh(0.5 * (projected + projected.T))
    if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > 1e14:
        raise SingularProjectedFisher("projected Fisher information is singular")
    constrained = u @ np.linalg.solve(projected, u.T)
    constrained = 0.5 * (constrained + constrained.T)
    return CrbResult(
        fisher=fisher, constrained=constrained, trace_bound=float(np.trace(constrained))
    )


def pose_crb(
    true_pose: Pose,
    points: PointCorrespondences | None,
    lines: LineCorrespondences | None,
    sigma2: float,
) -> CrbResult:
    """Convenience wrapper: Fisher information then the constrained bound."""
    fisher = fisher_information(true_pose, points, lines, sigma2)
    return constrained_crb(fisher, true_pose.theta())
