"""Camera pose estimation from point and line correspondences.

Two-step estimator: a bias-eliminated DLT solution that is consistent as the
feature count grows, followed by a single Gauss-Newton iteration that makes
it asymptotically efficient (MSE approaching the constrained Cramer-Rao
bound). Point-only, line-only and combined inputs share one pipeline.
"""

from .bench import SceneConfig, add_noise, generate_scene, run_monte_carlo, runtime_scaling
from .camera import (
    CameraIntrinsics,
    LineCorrespondences,
    PointCorrespondences,
    line_residual,
    line_weight_variance,
    ml_objective,
    normalize_pixel,
    point_residual,
    project_line,
    project_point,
)
from .crb import CrbResult, constrained_crb, constraint_jacobian, fisher_information, pose_crb
from .dlt import (
    DltMode,
    DltSystem,
    build_combined_system,
    build_line_system,
    build_point_system,
)
from .errors import PnplError
from .refine import gn_refine, gn_step, line_jacobian_blocks, point_jacobian_blocks, psi_at_zero
from .so3 import (
    PluckerLine,
    Pose,
    exp_so3,
    hat,
    log_so3,
    normalize_line_endpoints,
    plucker_from_endpoints,
    retract,
    vee,
)
from .solver import (
    EstimateReport,
    SolverConfig,
    consistent_estimate,
    dispatch_mode,
    eliminate_bias,
    estimate_pose,
    recover_essential,
    recover_pose_combined,
    recover_pose_line,
    recover_pose_point,
    recover_rotation,
    smallest_unit_eigvec,
)
from .variance import VarianceEstimate, estimate_sigma2

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "CrbResult",
    "DltMode",
    "DltSystem",
    "EstimateReport",
    "LineCorrespondences",
    "PluckerLine",
    "PnplError",
    "PointCorrespondences",
    "Pose",
    "SceneConfig",
    "SolverConfig",
    "VarianceEstimate",
    "add_noise",
    "build_combined_system",
    "build_line_system",
    "build_point_system",
    "consistent_estimate",
    "constrained_crb",
    "constraint_jacobian",
    "dispatch_mode",
    "eliminate_bias",
    "estimate_pose",
    "estimate_sigma2",
    "exp_so3",
    "fisher_information",
    "generate_scene",
    "gn_refine",
    "gn_step",
    "hat",
    "line_jacobian_blocks",
    "line_residual",
    "line_weight_variance",
    "log_so3",
    "ml_objective",
    "normalize_line_endpoints",
    "normalize_pixel",
    "plucker_from_endpoints",
    "point_jacobian_blocks",
    "point_residual",
    "pose_crb",
    "project_line",
    "project_point",
    "psi_at_zero",
    "recover_essential",
    "recover_pose_combined",
    "recover_pose_line",
    "recover_pose_point",
    "recover_rotation",
    "retract",
    "run_monte_carlo",
    "runtime_scaling",
    "smallest_unit_eigvec",
    "vee",
]
