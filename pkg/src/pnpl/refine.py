"""Single Gauss-Newton refinement step on the lifted pose problem.

The rotation is reparameterized around the current estimate as
R(s) = R_hat @ exp(hat(s)), which turns the constrained problem into an
unconstrained one in (s, t) in R^6. One GN iteration from a consistent
initializer already attains the efficiency of the full ML solution, so a
single step is the default; iterated refinement is kept for verification.

Residual rows are whitened: point rows by 1/sigma, line rows by
1/sigma_j = 1/(sigma * |l_{1:2}|). Because sigma_j depends on the pose, the
line Jacobian carries an extra d(1/sigma_j) term; dropping it would bias the
step. The line weights in the residual vector are frozen at the initial pose.

Tangent-space derivative identity used throughout: for any fixed vector u,
d/ds [R_hat exp(hat(s)) u] at s = 0 equals -R_hat @ hat(u), and batched
products against hat matrices reduce to row-wise cross products
(X @ hat(u) = cross3(X, u)).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .camera import DEPTH_EPS, LineCorrespondences, PointCorrespondences
from .errors import (
    BehindCamera,
    DegenerateProjectedLine,
    InsufficientCorrespondences,
    SingularNormalEquations,
)
from .so3 import Pose, cross3, hat, retract

_E_PROJ = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_E3 = np.array([0.0, 0.0, 1.0])


def psi_at_zero() -> np.ndarray:
    """Derivative of vec(exp(hat(s))) with respect to s at s = 0 (9 x 3).

    Column k is the column-major vectorization of hat(e_k); all entries are
    in {-1, 0, +1}.
    """
    psi = np.zeros((9, 3))
    eye = np.eye(3)
    for k in range(3):
        psi[:, k] = hat(eye[k]).flatten(order="F")
    return psi


def _point_terms(pose: Pose, points: PointCorrespondences, out=None):
    """Residuals and unwhitened Jacobian blocks for the point rows.

    Fills ``out`` (n, 2, 7) with the Jacobian block in columns 0:6 (tangent
    s derivatives first, then translation) and the residual in column 6.
    """
    x_world = points.world
    g = x_world @ pose.rotation.T + pose.translation
    den = g[:, 2]
    if np.any(den <= DEPTH_EPS):
        raise BehindCamera("point depth is not positive at the linearization pose")
    num = g[:, :2]
    if out is None:
        out = np.empty((len(points), 2, 7))
    # d r / d g = (num e3^T - den E) / den^2, with g = R X + t.
    core = (num[:, :, None] * _E3 - den[:, None, None] * _E_PROJ) / (
        den * den
    )[:, None, None]
    # d r / d s = core @ (-R hat(X)): rows of (core @ R) crossed with X.
    out[:, :, 0:3] = -cross3(core @ pose.rotation, x_world[:, None, :])
    out[:, :, 3:6] = core
    out[:, :, 6] = points.image - num / den[:, None]
    return out


def _line_terms(pose: Pose, lines: LineCorrespondences, sigma: float, out=None):
    """Whitened residuals and Jacobian blocks for the line rows.

    Fills ``out`` (m, 2, 7) with the Jacobian of r_lj / sigma_j in columns
    0:6 (including the pose dependence of sigma_j) and the whitened residual
    in column 6.
    """
    r, t = pose.rotation, pose.translation
    mom, dirv = lines.moment, lines.direction
    m = len(lines)
    rd = dirv @ r.T
    l_bar = mom @ r.T + cross3(t, rd)
    v = l_bar[:, :2]
    vn2 = v[:, 0] ** 2 + v[:, 1] ** 2
    if np.any(vn2 <= 1e-24):
        raise DegenerateProjectedLine("projected line has no image-plane normal")
    vn = np.sqrt(vn2)
    sigma_j = sigma * vn

    # Third row [v1, v2, 0] rides along with [p^h, q^h] so one batch of
    # products serves both the residual Jacobian rows and the derivative of
    # the weight 1/sigma_j (which contracts l_bar's first two components).
    w3 = np.concatenate([lines.endpoint_rows, np.zeros((m, 1, 3))], axis=1)
    w3[:, 2, :2] = v
    res = (w3[:, :2] @ l_bar[:, :, None])[:, :, 0]

    # d l_bar / d s = -(R hat(mom) + hat(t) R hat(dir)); contractions against
    # hat matrices become row-wise cross products.
    cr_mom = cross3(w3 @ r, mom[:, None, :])
    cr_dir = cross3(w3 @ (hat(t) @ r), dirv[:, None, :])
    cr_rd = cross3(w3, rd[:, None, :])  # d l_bar / d t = -hat(R d)
    cr_mom += cr_dir

    inv_sig3 = 1.0 / (sigma * vn * vn2)
    weight_grad = np.concatenate([cr_mom[:, 2], cr_rd[:, 2]], axis=1)
    weight_grad *= inv_sig3[:, None]

    if out is None:
        out = np.empty((m, 2, 7))
    neg_inv_sigma_j = (-1.0 / sigma_j)[:, None, None]
    out[:, :, 0:3] = cr_mom[:, :2] * neg_inv_sigma_j
    out[:, :, 3:6] = cr_rd[:, :2] * neg_inv_sigma_j
    out[:, :, 0:6] += res[:, :, None] * weight_grad[:, None, :]
    out[:, :, 6] = res / sigma_j[:, None]
    return out


def point_jacobian_blocks(pose: Pose, points: PointCorrespondences) -> np.ndarray:
    """Unwhitened point residual Jacobians, one (2, 6) block per point.

    Columns 0:3 differentiate with respect to the tangent vector s at the
    current rotation, columns 3:6 with respect to t.
    """
    return _point_terms(pose, points)[:, :, :6]


def line_jacobian_blocks(
    pose: Pose, lines: LineCorrespondences, sigma2: float
) -> np.ndarray:
    """Whitened line residual Jacobians, one (2, 6) block per line.

    Differentiates r_lj / sigma_j including the pose dependence of sigma_j:
    block = (1/sigma_j) dr + diag(r) * d(1/sigma_j) replicated across the
    s and t columns.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return _line_terms(pose, lines, float(np.sqrt(sigma2)))[:, :, :6]


def _assemble(pose, sigma2, points, lines, sigma2_line):
    """Stack the whitened [J | r] rows: points first, then lines.

    Returned as one (2n + 2m, 7) array whose last column is the residual.
    """
    n, m = len(points), len(lines)
    # The global noise scale cancels in the GN step, so a zero estimate
    # (noise-free data) falls back to unit scale instead of dividing by 0.
    sig_pt = float(np.sqrt(sigma2)) if sigma2 > 0 else 1.0
    s2_ln = sigma2_line if sigma2_line is not None else sigma2
    sig_ln = float(np.sqrt(s2_ln)) if s2_ln > 0 else 1.0

    aug = np.empty((2 * n + 2 * m, 7))
    if n:
        _point_terms(pose, points, out=aug[: 2 * n].reshape(n, 2, 7))
        aug[: 2 * n] /= sig_pt
    if m:
        _line_terms(pose, lines, sig_ln, out=aug[2 * n :].reshape(m, 2, 7))
    return aug


def _step(pose, sigma2, points, lines, sigma2_line):
    aug = _assemble(pose, sigma2, points, lines, sigma2_line)
    # Orthogonal factorization of J (not J^T J) for conditioning; the
    # residual rides along as an extra column so the R factor carries both
    # J's triangle and Q^T r.
    qr_fac, _, _, info = lapack.dgeqrf(aug, overwrite_a=1)
    r_fac = qr_fac[:6, :6]
    rcond, _ = lapack.dtrcon(r_fac, norm="1", uplo="U", diag="N")
    if info != 0 or not rcond > 1e-7:  # cond(J^T J) beyond ~1e14
        raise SingularNormalEquations("Gauss-Newton normal equations are singular")
    delta, _ = lapack.dtrtrs(r_fac, -qr_fac[:6, 6], lower=0)
    new_pose = Pose(retract(pose.rotation, delta[:3]), pose.translation + delta[3:])
    return new_pose, float(np.linalg.norm(delta))


def gn_step(
    pose: Pose,
    sigma2: float,
    points: PointCorrespondences,
    lines: LineCorrespondences,
    sigma2_line: float | None = None,
) -> Pose:
    """One Gauss-Newton iteration from ``pose``; the rotation update uses the
    retraction, so the result stays on SO(3)."""
    if len(points) + len(lines) < 3:
        raise InsufficientCorrespondences("GN refinement needs n + m >= 3")
    return _step(pose, sigma2, points, lines, sigma2_line)[0]


def gn_refine(
    pose: Pose,
    sigma2: float,
    points: PointCorrespondences,
    lines: LineCorrespondences,
    iterations: int = 1,
    tol: float = 0.0,
    sigma2_line: float | None = None,
) -> Pose:
    """Iterated GN refinement (the default pipeline uses one iteration).

    Re-linearizes and re-freezes the line weights at each iterate. Stops
    early when the step norm drops to ``tol``; used by tests as the
    run-to-convergence reference.
    """
    if len(points) + len(lines) < 3:
        raise InsufficientCorrespondences("GN refinement needs n + m >= 3")
    for _ in range(iterations):
        pose, step_norm = _step(pose, sigma2, points, lines, sigma2_line)
        if step_norm <= tol:
            break
    return pose
