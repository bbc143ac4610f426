"""Rotation-group algebra and Pluecker line construction.

Conventions:
- Rotation matrices R are 3x3 with R.T @ R = I and det(R) = +1; they act on
  column vectors, v_camera = R @ v_world + t.
- Axis-angle vectors s encode the rotation exp(hat(s)); ``|s|`` is the angle
  in radians and s/|s| the axis.
- A 3D line through endpoints P, Q is stored in Pluecker coordinates as
  (moment, direction) = (P x Q, Q - P), which satisfies moment . direction = 0.

All functions are pure and broadcast over leading axes where that makes
sense (e.g. ``hat`` maps (..., 3) -> (..., 3, 3)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLine, NearPiRotation, NotSkewSymmetric

# Angle below which sin(x)/x and (1 - cos x)/x^2 switch to their
# second-order Taylor expansions to avoid 0/0.
SMALL_ANGLE = 1e-4


@dataclass(frozen=True)
class Pose:
    """Rigid transform (R, t) mapping world coordinates into the camera frame."""

    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)

    def matrix(self) -> np.ndarray:
        """Return the 3x4 matrix [R t]."""
        return np.hstack([self.rotation, self.translation.reshape(3, 1)])

    def theta(self) -> np.ndarray:
        """Return vec([R t]) in column-major order (12-vector)."""
        return self.matrix().flatten(order="F")


@dataclass(frozen=True)
class PluckerLine:
    """Pluecker coordinates of one 3D line (or a batch of lines).

    ``moment`` and ``direction`` have matching shapes (..., 3) and satisfy
    the Pluecker constraint moment . direction = 0.
    """

    moment: np.ndarray
    direction: np.ndarray

    def as_vector(self) -> np.ndarray:
        """Stack into the 6-vector(s) [moment, direction]."""
        return np.concatenate([self.moment, self.direction], axis=-1)


_CROSS_ROLL1 = np.array([1, 2, 0])
_CROSS_ROLL2 = np.array([2, 0, 1])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product with broadcasting; faster than np.cross here.

    Also the batched form of multiplication by a hat matrix: for row vectors
    X, X @ hat(u) equals cross3(X, u).
    """
    return (
        a[..., _CROSS_ROLL1] * b[..., _CROSS_ROLL2]
        - a[..., _CROSS_ROLL2] * b[..., _CROSS_ROLL1]
    )


def hat(s: np.ndarray) -> np.ndarray:
    """Map a vector (..., 3) to the skew-symmetric matrix (..., 3, 3).

    hat(s) @ v == np.cross(s, v) for any 3-vector v.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape[:-1] + (3, 3))
    out[..., 0, 1] = -s[..., 2]
    out[..., 0, 2] = s[..., 1]
    out[..., 1, 0] = s[..., 2]
    out[..., 1, 2] = -s[..., 0]
    out[..., 2, 0] = -s[..., 1]
    out[..., 2, 1] = s[..., 0]
    return out


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat`: extract the 3-vector from a skew-symmetric matrix.

    Raises NotSkewSymmetric when ||M + M.T||_F > 1e-6 * ||M||_F.
    """
    m = np.asarray(m, dtype=float)
    sym = np.linalg.norm(m + np.swapaxes(m, -1, -2))
    if sym > 1e-6 * np.linalg.norm(m):
        raise NotSkewSymmetric(f"symmetric part too large: {sym:.3e}")
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def skew_part_vee(m: np.ndarray, rel_tol: float = 0.1) -> np.ndarray:
    """Extract the vector of the skew part (M - M.T)/2 of a nearly skew matrix.

    Used where noise makes a product only approximately skew-symmetric
    (e.g. E @ R.T for an estimated essential matrix). Raises NotSkewSymmetric
    only when the symmetric part exceeds ``rel_tol`` of the matrix norm.
    """
    m = np.asarray(m, dtype=float)
    m2 = (m * m).sum()
    sym = m + m.T
    if m2 > 0.0 and (sym * sym).sum() > rel_tol**2 * m2:
        raise NotSkewSymmetric("matrix is far from skew-symmetric")
    s = 0.5 * (m - m.T)
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def exp_so3(s: np.ndarray) -> np.ndarray:
    """Rodrigues formula: map an axis-angle vector to a rotation matrix.

    R = I + sin(a)/a * hat(s) + (1 - cos a)/a^2 * hat(s)^2  with a = |s|.
    Near a = 0 the coefficients use second-order Taylor expansions.
    """
    s = np.asarray(s, dtype=float)
    angle = float(np.linalg.norm(s))
    k = hat(s)
    if angle < SMALL_ANGLE:
        a2 = angle * angle
        c1 = 1.0 - a2 / 6.0
        c2 = 0.5 - a2 / 24.0
    else:
        c1 = np.sin(angle) / angle
        c2 = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + c1 * k + c2 * (k @ k)


def log_so3(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp_so3` for rotations with angle in [0, pi).

    Returns the zero vector at R = I (continuity). Raises NearPiRotation when
    the angle is within 1e-6 of pi, where the axis sign is ambiguous.
    """
    r = np.asarray(r, dtype=float)
    cos_angle = np.clip(0.5 * (np.trace(r) - 1.0), -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    if np.pi - angle < 1e-6:
        raise NearPiRotation(f"rotation angle {angle:.9f} is too close to pi")
    w = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if angle < SMALL_ANGLE:
        # angle/sin(angle) = 1 + a^2/6 + O(a^4)
        return w * (1.0 + angle * angle / 6.0)
    return w * (angle / np.sin(angle))


def retract(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Retraction on SO(3): move from R along the tangent vector s."""
    return np.asarray(r, dtype=float) @ exp_so3(s)


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    """Check the SO(3) invariants: orthonormality and det = +1."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        return False
    if np.linalg.norm(r.T @ r - np.eye(3)) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


def plucker_from_endpoints(p: np.ndarray, q: np.ndarray) -> PluckerLine:
    """Build Pluecker coordinates (P x Q, Q - P) from two distinct points.

    Broadcasts over leading axes: p, q of shape (..., 3) give a batch of lines.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    direction = q - p
    if np.any(np.linalg.norm(direction, axis=-1) <= 1e-9):
        raise DegenerateLine("line endpoints coincide")
    return PluckerLine(moment=np.cross(p, q), direction=direction)


def normalize_line_endpoints(p: np.ndarray, q: np.ndarray):
    """Slide endpoints along their line so that |P - Q| = sqrt(3).

    The segment midpoint is preserved, so the infinite line is unchanged.
    Broadcasts over leading axes.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    sep = np.linalg.norm(q - p, axis=-1, keepdims=True)
    if np.any(sep <= 1e-9):
        raise DegenerateLine("line endpoints coincide")
    mid = 0.5 * (p + q)
    half = (np.sqrt(3.0) / 2.0) * (q - p) / sep
    return mid - half, mid + half
