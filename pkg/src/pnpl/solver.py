"""First-step consistent pose estimation and the mode dispatcher.

The estimator subtracts the estimated noise bias sigma2_hat * Q_tilde from
the Gram matrix, takes the unit eigenvector of the smallest eigenvalue, and
recovers (R, t) from it with scale and sign corrections. The result converges
to the true pose as the correspondence count grows, which makes it a valid
initializer for the single Gauss-Newton refinement step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lapack

from .camera import (
    LineCorrespondences,
    PointCorrespondences,
    apply_intrinsics_inverse,
    intrinsics_inverse,
)
from .dlt import (
    DltMode,
    DltSystem,
    build_combined_system,
    build_line_system,
    build_point_system,
)
from .errors import RankDeficient, RepeatedSmallestEigenvalue, Underdetermined
from .refine import gn_refine
from .so3 import Pose, normalize_line_endpoints, skew_part_vee
from .variance import VarianceEstimate, estimate_sigma2


@dataclass(frozen=True)
class ThetaVector:
    """Unit eigenvector of the bias-eliminated Gram matrix, with its mode."""

    v: np.ndarray
    mode: DltMode


@dataclass(frozen=True)
class RecoveryDiagnostics:
    """Scale/sign corrections and eigen-solve diagnostics of one recovery."""

    scale_s: float
    sign_d: float
    smallest_eig: float = float("nan")
    eig_gap: float = float("nan")
    # Combined mode only: the two translation reads that get averaged.
    t_from_theta: np.ndarray | None = None
    t_from_essential: np.ndarray | None = None


@dataclass(frozen=True)
class SolverConfig:
    """Options for the two-step estimator.

    bias_elimination=False exposes the plain (asymptotically biased) DLT
    solution used as the A/B baseline in the benchmarks. sigma2_override
    skips variance estimation. split_variance estimates separate point and
    line noise variances (combined mode; needs n >= 6 and m >= 9).
    """

    bias_elimination: bool = True
    sigma2_override: float | None = None
    split_variance: bool = False
    gn_iterations: int = 1


@dataclass(frozen=True)
class EstimateReport:
    """Everything the two-step pipeline produced for one solve."""

    mode: DltMode
    first_step: Pose
    refined: Pose | None
    sigma2_hat: float
    sigma2_point: float | None
    sigma2_line: float | None
    theta: ThetaVector
    recovery: RecoveryDiagnostics
    variance: VarianceEstimate | None
    bias_eliminated: bool

    @property
    def pose(self) -> Pose:
        """Final estimate: the refined pose when available."""
        return self.refined if self.refined is not None else self.first_step


def dispatch_mode(n_points: int, n_lines: int) -> DltMode:
    """Select the estimation mode from the correspondence counts.

    Combined needs n >= 2, m >= 5 and n + m >= 11; point-only needs n >= 6
    with m < 5; line-only needs m >= 9 with n < 2. Everything else (including
    gap cases like n=1, m=8) is underdetermined for this estimator.
    """
    n, m = n_points, n_lines
    if n >= 2 and m >= 5 and n + m >= 11:
        return DltMode.COMBINED
    if n >= 6 and m < 5:
        return DltMode.POINT
    if m >= 9 and n < 2:
        return DltMode.LINE
    raise Underdetermined(f"pose is underdetermined for n={n}, m={m}")


def eliminate_bias(sys: DltSystem, sigma2_hat: float) -> np.ndarray:
    """Bias-eliminated Gram matrix Q - sigma2_hat * Q_tilde, symmetrized."""
    m = sys.q - sigma2_hat * sys.q_tilde_sum
    return 0.5 * (m + m.T)


def smallest_unit_eigvec(m: np.ndarray):
    """Unit eigenvector of the algebraically smallest eigenvalue.

    Returns (v, smallest_eig, eig_gap). The sign is fixed by making the
    largest-magnitude component positive, so runs are reproducible.
    Raises RepeatedSmallestEigenvalue when the spectral gap is below
    1e-12 * ||M||_F (the instance is ill-posed).
    """
    eigvals, eigvecs, info = lapack.dsyevd(m, compute_v=1, lower=1)
    if info != 0:
        raise RepeatedSmallestEigenvalue(f"eigendecomposition failed (info={info})")
    gap = float(eigvals[1] - eigvals[0])
    if gap < 1e-12 * float(np.sqrt((m * m).sum())):
        raise RepeatedSmallestEigenvalue("smallest eigenvalue is numerically repeated")
    v = eigvecs[:, 0].copy()
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v, float(eigvals[0]), gap


def recover_rotation(theta9: np.ndarray):
    """Project a 9-vector (column-major 3x3) onto SO(3).

    Returns (R, s, d): the rotation, the scale correction s (mean singular
    value of the reshaped matrix) and the sign correction d = det(U V^T).
    """
    r1 = np.asarray(theta9, dtype=float).reshape(3, 3, order="F")
    u, sv, vt, info = lapack.dgesdd(r1)
    if info != 0 or sv[2] < 1e-12 * sv[0] or sv[0] == 0.0:
        raise RankDeficient("reshaped rotation block is rank deficient")
    s = float(np.mean(sv))
    # r1 / s has the same singular vectors, so one SVD yields both s and d.
    uvt = u @ vt
    d = float(np.sign(np.linalg.det(uvt)))
    return d * uvt, s, d


def recover_essential(theta9: np.ndarray) -> np.ndarray:
    """Project a 9-vector (column-major 3x3) onto the essential-matrix set.

    Replaces the singular values (a, b, c) with (t, t, 0), t = (a + b) / 2.
    """
    e1 = np.asarray(theta9, dtype=float).reshape(3, 3, order="F")
    u, sv, vt, info = lapack.dgesdd(e1)
    if info != 0:
        raise RankDeficient("essential-matrix SVD failed")
    t = 0.5 * (sv[0] + sv[1])
    return (u * np.array([t, t, 0.0])) @ vt


def recover_pose_point(theta: ThetaVector):
    """Pose from a 12-parameter solution vector (point mode)."""
    v = theta.v
    r, s, d = recover_rotation(v[:9])
    t = d * v[9:12] / s
    return Pose(r, t), RecoveryDiagnostics(scale_s=s, sign_d=d)


def recover_pose_line(theta: ThetaVector):
    """Pose from an 18-parameter solution vector (line mode).

    The translation comes from the essential-matrix block: t = vee(E R^T).
    The rotation is taken from the first nine entries only; decomposing E
    into its four (R, t) candidates is deliberately avoided.
    """
    v = theta.v
    r, s, d = recover_rotation(v[:9])
    v = (d / s) * v
    e = recover_essential(v[9:18])
    t = skew_part_vee(e @ r.T)
    return Pose(r, t), RecoveryDiagnostics(scale_s=s, sign_d=d)


def recover_pose_combined(theta: ThetaVector):
    """Pose from a 21-parameter solution vector (combined mode).

    Both translation blocks carry comparable information, so the final
    translation averages the direct read theta[18:21] with vee(E R^T).
    """
    v = theta.v
    r, s, d = recover_rotation(v[:9])
    v = (d / s) * v
    t1 = v[18:21]
    e = recover_essential(v[9:18])
    t2 = skew_part_vee(e @ r.T)
    diag = RecoveryDiagnostics(
        scale_s=s, sign_d=d, t_from_theta=t1, t_from_essential=t2
    )
    return Pose(r, 0.5 * (t1 + t2)), diag


_RECOVER = {
    DltMode.POINT: recover_pose_point,
    DltMode.LINE: recover_pose_line,
    DltMode.COMBINED: recover_pose_combined,
}


def _variance_for(
    sys: DltSystem,
    points: PointCorrespondences,
    lines: LineCorrespondences,
    config: SolverConfig,
):
    """Resolve (shared sigma2, point sigma2, line sigma2, VarianceEstimate)."""
    if config.sigma2_override is not None:
        s2 = float(config.sigma2_override)
        return s2, s2, s2, None
    var = estimate_sigma2(sys)
    if config.split_variance and sys.mode is DltMode.COMBINED:
        var_pt = estimate_sigma2(build_point_system(points))
        var_ln = estimate_sigma2(build_line_system(lines))
        return var.sigma2_hat, var_pt.sigma2_hat, var_ln.sigma2_hat, var
    return var.sigma2_hat, var.sigma2_hat, var.sigma2_hat, var


def consistent_estimate(
    points: PointCorrespondences | None,
    lines: LineCorrespondences | None,
    config: SolverConfig | None = None,
) -> EstimateReport:
    """First-step estimator: variance estimation, bias elimination, recovery.

    Dispatches to the point, line, or combined system based on the counts
    (see :func:`dispatch_mode`) and returns the consistent estimate with its
    diagnostics; ``refined`` is left unset.
    """
    config = config or SolverConfig()
    points = points if points is not None else PointCorrespondences.empty()
    lines = lines if lines is not None else LineCorrespondences.empty()
    mode = dispatch_mode(len(points), len(lines))

    if mode is DltMode.POINT:
        sys = build_point_system(points)
    elif mode is DltMode.LINE:
        sys = build_line_system(lines)
    else:
        sys = build_combined_system(points, lines)

    s2, s2_pt, s2_ln, var = _variance_for(sys, points, lines, config)

    if not config.bias_elimination:
        q_be = sys.q
    elif mode is DltMode.COMBINED and s2_pt != s2_ln:
        q_be = _eliminate_bias_split(sys, s2_pt, s2_ln)
    else:
        q_be = eliminate_bias(sys, s2)

    v, smallest, gap = smallest_unit_eigvec(q_be)
    theta = ThetaVector(v=v, mode=mode)
    pose, rec = _RECOVER[mode](theta)
    rec = replace(rec, smallest_eig=smallest, eig_gap=gap)

    return EstimateReport(
        mode=mode,
        first_step=pose,
        refined=None,
        sigma2_hat=s2,
        sigma2_point=s2_pt,
        sigma2_line=s2_ln,
        theta=theta,
        recovery=rec,
        variance=var,
        bias_eliminated=config.bias_elimination,
    )


def _eliminate_bias_split(sys: DltSystem, sigma2_point: float, sigma2_line: float):
    """Bias elimination with separate point and line noise variances."""
    q = sys.q - sigma2_point * sys.q_tilde_point - sigma2_line * sys.q_tilde_line
    return 0.5 * (q + q.T)


def estimate_pose(
    points: PointCorrespondences | None,
    lines: LineCorrespondences | None,
    config: SolverConfig | None = None,
) -> EstimateReport:
    """Full two-step estimate: consistent first step plus GN refinement.

    With ``config.gn_iterations == 0`` the report's ``refined`` pose is None
    and the first-step estimate is final.
    """
    config = config or SolverConfig()
    report = consistent_estimate(points, lines, config)
    if config.gn_iterations <= 0:
        return report
    sigma2_line = (
        report.sigma2_line if report.sigma2_line is not None else report.sigma2_hat
    )
    refined = gn_refine(
        report.first_step,
        report.sigma2_point if report.sigma2_point is not None else report.sigma2_hat,
        points if points is not None else PointCorrespondences.empty(),
        lines if lines is not None else LineCorrespondences.empty(),
        iterations=config.gn_iterations,
        sigma2_line=sigma2_line,
    )
    return replace(report, refined=refined)


def estimate_pose_pixels(
    intrinsics,
    points_world=None,
    points_px=None,
    lines_p_world=None,
    lines_q_world=None,
    lines_p_px=None,
    lines_q_px=None,
    config: SolverConfig | None = None,
) -> EstimateReport:
    """Full pipeline from pixel-coordinate observations.

    Runs the preprocessing stage (pixel-to-normalized conversion, sqrt(3)
    line endpoint normalization, Pluecker construction) before the two-step
    estimate. This is the entry point the command-line tool uses.
    """
    k_inv = intrinsics_inverse(intrinsics)
    points = None
    if points_px is not None and len(points_px):
        points = PointCorrespondences(
            world=np.asarray(points_world, dtype=float),
            image=apply_intrinsics_inverse(k_inv, points_px),
        )
    lines = None
    if lines_p_px is not None and len(lines_p_px):
        p3, q3 = normalize_line_endpoints(lines_p_world, lines_q_world)
        lines = LineCorrespondences.from_endpoints(
            p3,
            q3,
            apply_intrinsics_inverse(k_inv, lines_p_px),
            apply_intrinsics_inverse(k_inv, lines_q_px),
        )
    return estimate_pose(points, lines, config)
