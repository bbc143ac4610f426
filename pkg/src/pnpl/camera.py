"""Pinhole projection model, measurement residuals and noise weights.

2D observations are stored in normalized image coordinates (pixel coordinates
premultiplied by the inverse intrinsic matrix, focal length 1) immediately
after ingestion. Noise standard deviations given in pixels convert to
normalized units as sigma_norm = sigma_px / fx.

Correspondence containers are batch-oriented (structure of arrays): a set of
n point correspondences is one ``PointCorrespondences`` with (n, 3) and (n, 2)
arrays, which keeps every downstream operation vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import BehindCamera, DegenerateProjectedLine, SingularIntrinsics
from .so3 import PluckerLine, Pose, cross3

# Points with depth below this are treated as behind the camera.
DEPTH_EPS = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Upper-triangular 3x3 intrinsic matrix in pixels, k[2, 2] = 1."""

    k: np.ndarray

    @property
    def fx(self) -> float:
        return float(self.k[0, 0])


@dataclass(frozen=True)
class PointCorrespondences:
    """Batch of 2D-3D point correspondences.

    world: (n, 3) points in the world frame (meters).
    image: (n, 2) observed projections in normalized image coordinates.
    """

    world: np.ndarray
    image: np.ndarray

    def __len__(self) -> int:
        return self.world.shape[0]

    @classmethod
    def empty(cls) -> "PointCorrespondences":
        return cls(world=np.zeros((0, 3)), image=np.zeros((0, 2)))

    def with_image(self, image: np.ndarray) -> "PointCorrespondences":
        return replace(self, image=image)


@dataclass(frozen=True)
class LineCorrespondences:
    """Batch of 2D-3D line correspondences.

    Each 3D line is given by two endpoints and, redundantly, its Pluecker
    coordinates; each 2D observation is a pair of distinct image points on
    the projected line. The image endpoints need not be projections of the
    3D endpoints.
    """

    p_world: np.ndarray   # (m, 3)
    q_world: np.ndarray   # (m, 3)
    moment: np.ndarray    # (m, 3), P x Q
    direction: np.ndarray  # (m, 3), Q - P
    image_p: np.ndarray   # (m, 2) normalized coordinates
    image_q: np.ndarray   # (m, 2)

    def __len__(self) -> int:
        return self.p_world.shape[0]

    @classmethod
    def from_endpoints(cls, p_world, q_world, image_p, image_q) -> "LineCorrespondences":
        p_world = np.asarray(p_world, dtype=float)
        q_world = np.asarray(q_world, dtype=float)
        return cls(
            p_world=p_world,
            q_world=q_world,
            moment=cross3(p_world, q_world),
            direction=q_world - p_world,
            image_p=np.asarray(image_p, dtype=float),
            image_q=np.asarray(image_q, dtype=float),
        )

    @classmethod
    def empty(cls) -> "LineCorrespondences":
        z3, z2 = np.zeros((0, 3)), np.zeros((0, 2))
        return cls(z3, z3, z3.copy(), z3.copy(), z2, z2.copy())

    @property
    def world(self) -> PluckerLine:
        return PluckerLine(moment=self.moment, direction=self.direction)

    def plucker_vectors(self) -> np.ndarray:
        """(m, 6) stacked Pluecker coordinates [moment, direction]."""
        return np.concatenate([self.moment, self.direction], axis=1)

    @cached_property
    def endpoint_rows(self) -> np.ndarray:
        """(m, 2, 3) homogeneous observation matrix [p^h, q^h]^T per line."""
        rows = np.empty((len(self), 2, 3))
        rows[:, 0, :2] = self.image_p
        rows[:, 1, :2] = self.image_q
        rows[:, :, 2] = 1.0
        return rows

    def with_images(self, image_p, image_q) -> "LineCorrespondences":
        return replace(self, image_p=image_p, image_q=image_q)


def homogeneous(x: np.ndarray) -> np.ndarray:
    """Append a unit coordinate: (..., d) -> (..., d+1)."""
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def intrinsics_inverse(k) -> np.ndarray:
    """Validated inverse of an intrinsic matrix (raises SingularIntrinsics)."""
    km = k.k if isinstance(k, CameraIntrinsics) else np.asarray(k, dtype=float)
    if abs(np.linalg.det(km)) < 1e-12:
        raise SingularIntrinsics("intrinsic matrix is not invertible")
    return np.linalg.inv(km)


def normalize_pixel(k, x_px: np.ndarray) -> np.ndarray:
    """Convert pixel coordinates to normalized image coordinates.

    Computes the first two rows of K^-1 applied to the homogeneous pixel
    point; broadcasts over leading axes of ``x_px``.
    """
    return apply_intrinsics_inverse(intrinsics_inverse(k), x_px)


def apply_intrinsics_inverse(k_inv: np.ndarray, x_px: np.ndarray) -> np.ndarray:
    """Normalize pixels with a precomputed K^-1 (see intrinsics_inverse)."""
    x_px = np.asarray(x_px, dtype=float)
    return x_px @ k_inv[:2, :2].T + k_inv[:2, 2]


def camera_frame(pose: Pose, x_world: np.ndarray) -> np.ndarray:
    """Transform world points (..., 3) into the camera frame: R X + t."""
    return np.asarray(x_world, dtype=float) @ pose.rotation.T + pose.translation


def project_point(pose: Pose, x_world: np.ndarray) -> np.ndarray:
    """Exact pinhole projection of world points (..., 3) -> (..., 2).

    Raises BehindCamera if any point has depth <= DEPTH_EPS under ``pose``.
    """
    g = camera_frame(pose, x_world)
    depth = g[..., 2]
    if np.any(depth <= DEPTH_EPS):
        raise BehindCamera("point depth is not positive")
    return g[..., :2] / depth[..., None]


def project_line(pose: Pose, line: PluckerLine) -> np.ndarray:
    """Linear line projection: l = [R  hat(t) R] L, unnormalized (..., 3).

    Every image point on the projected line x satisfies l . [x, 1] = 0.
    """
    r, t = pose.rotation, pose.translation
    rd = line.direction @ r.T
    return line.moment @ r.T + cross3(t, rd)


def point_residual(pose: Pose, points: PointCorrespondences) -> np.ndarray:
    """Reprojection residuals x_i - h(X_i), one row per point (n, 2)."""
    return points.image - project_point(pose, points.world)


def line_residual(pose: Pose, lines: LineCorrespondences) -> np.ndarray:
    """Incidence residuals [p^h . l, q^h . l] per line (m, 2).

    Zero exactly when both observed image endpoints lie on the projected line.
    """
    l_bar = project_line(pose, lines.world)
    return (lines.endpoint_rows @ l_bar[:, :, None])[:, :, 0]


def line_weight_variance(pose: Pose, line: PluckerLine, sigma2: float) -> np.ndarray:
    """Variance of a line incidence residual entry: sigma2 * |l_{1:2}|^2.

    The endpoint noise enters the residual through the first two components
    of the projected line, so the residual variance scales with their norm.
    """
    l_bar = project_line(pose, line)
    sq = np.sum(l_bar[..., :2] ** 2, axis=-1)
    if np.any(sq <= 1e-24):
        raise DegenerateProjectedLine("projected line has no image-plane normal")
    return sigma2 * sq


def ml_objective(
    pose: Pose,
    points: PointCorrespondences | None,
    lines: LineCorrespondences | None,
    sigma2: float,
) -> float:
    """Weighted mean squared residual of the maximum-likelihood problem.

    (1/(n+m)) * (sum_i |r_pi|^2 / sigma2 + sum_j |r_lj|^2 / sigma_j^2), with
    the line weights sigma_j^2 evaluated at ``pose``.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    n = 0 if points is None else len(points)
    m = 0 if lines is None else len(lines)
    if n + m == 0:
        raise ValueError("at least one correspondence is required")
    total = 0.0
    if n:
        total += float(np.sum(point_residual(pose, points) ** 2)) / sigma2
    if m:
        r = line_residual(pose, lines)
        w = line_weight_variance(pose, lines.world, sigma2)
        total += float(np.sum(r**2 / w[:, None]))
    return total / (n + m)


def behind_camera_mask(pose: Pose, x_world: np.ndarray) -> np.ndarray:
    """Boolean mask of points with non-positive depth under ``pose``."""
    return camera_frame(pose, x_world)[..., 2] <= DEPTH_EPS
