"""Stacked homogeneous linear systems for the three estimation modes.

Each correspondence contributes two rows to a regressor matrix A such that
A @ theta = 0 holds exactly on noise-free data, where theta is the
column-major vectorization of:

- point mode:    [R t]            (12 parameters),
- line mode:     [R hat(t) R]     (18 parameters),
- combined mode: [R hat(t) R t]   (21 parameters).

Alongside the normalized Gram matrix Q = A.T A / N, each builder produces the
noise-bias template Q_tilde: the expectation of the noise-induced inflation
of Q is sigma^2 * Q_tilde, which the solver later subtracts.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .camera import LineCorrespondences, PointCorrespondences, homogeneous
from .errors import EmptyInput

# Indices of the point-mode parameters inside the combined 21-vector:
# vec(R) occupies 0:9 and t occupies 18:21.
POINT_COLS_IN_COMBINED = np.r_[0:9, 18:21]


class DltMode(Enum):
    POINT = "point"
    LINE = "line"
    COMBINED = "combined"

    @property
    def dim(self) -> int:
        return {DltMode.POINT: 12, DltMode.LINE: 18, DltMode.COMBINED: 21}[self]


@dataclass(frozen=True)
class DltSystem:
    """Regressor matrix, Gram matrix and bias template for one mode.

    a:            (2 n_points + 2 n_lines, dim) stacked regressor rows.
    q:            dim x dim symmetric PSD Gram matrix A.T A / N.
    q_tilde_sum:  dim x dim symmetric PSD bias template (sum of the mode's
                  template matrices, same normalizer N as q).

    For the combined mode the point and line contributions to q_tilde_sum
    are also kept separately, so that distinct point/line noise variances
    can be subtracted when configured.
    """

    mode: DltMode
    a: np.ndarray
    q: np.ndarray
    q_tilde_sum: np.ndarray
    n_points: int
    n_lines: int
    q_tilde_point: np.ndarray | None = None
    q_tilde_line: np.ndarray | None = None

    @property
    def normalizer(self) -> int:
        if self.mode is DltMode.POINT:
            return self.n_points
        if self.mode is DltMode.LINE:
            return self.n_lines
        return self.n_points + self.n_lines


def _sym(m: np.ndarray) -> np.ndarray:
    """Symmetrize to kill rounding asymmetry before eigen-solves."""
    return 0.5 * (m + m.T)


def _kron_small(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product for small dense blocks (cheaper than np.kron)."""
    ra, ca = a.shape
    rb, cb = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ca * cb)


def _point_rows(points: PointCorrespondences):
    """Return the 2n x 12 point rows and the raw (unnormalized) bias template.

    Row pair i is kron(Xh_i, S_i) where S_i holds the first two rows of
    hat([x_i, 1]), so that the pair equals [hat(x_i^h) (R X_i + t)]_{1:2}
    when multiplied against vec([R t]).
    """
    n = len(points)
    x = points.image
    xh_world = homogeneous(points.world)          # (n, 4)
    s = np.zeros((n, 2, 3))
    s[:, 0, 1] = -1.0
    s[:, 0, 2] = x[:, 1]
    s[:, 1, 0] = 1.0
    s[:, 1, 2] = -x[:, 0]
    a = (xh_world[:, None, :, None] * s[:, :, None, :]).reshape(2 * n, 12)
    # E[noise-squared rows] = 2 sigma^2 (Xh Xh^T) kron (e3 e3^T) per point;
    # the kron of symmetric factors is exactly symmetric.
    e3e3 = np.zeros((3, 3))
    e3e3[2, 2] = 2.0
    raw_template = _kron_small(_sym(xh_world.T @ xh_world), e3e3)
    return a, raw_template


def _line_rows(lines: LineCorrespondences):
    """Return the 2m x 18 line rows and the raw (unnormalized) bias template.

    Row pair j is kron(L_j, W_j) with W_j = [p_j^h q_j^h]^T, which multiplied
    against vec([R hat(t) R]) gives the incidence residuals.
    """
    m = len(lines)
    lvec = lines.plucker_vectors()                # (m, 6)
    w = lines.endpoint_rows
    a = (lvec[:, None, :, None] * w[:, :, None, :]).reshape(2 * m, 18)
    # Endpoint noise hits the first two homogeneous components of each
    # observation: template is (L L^T) kron 2 (e1 e1^T + e2 e2^T); the kron
    # of symmetric factors is exactly symmetric.
    e12 = np.diag([2.0, 2.0, 0.0])
    raw_template = _kron_small(_sym(lvec.T @ lvec), e12)
    return a, raw_template


def build_point_system(points: PointCorrespondences) -> DltSystem:
    """Stack point rows into the 12-parameter system (requires n >= 1)."""
    n = len(points)
    if n < 1:
        raise EmptyInput("point system needs at least one correspondence")
    a, raw = _point_rows(points)
    return DltSystem(
        mode=DltMode.POINT,
        a=a,
        q=_sym(a.T @ a) / n,
        q_tilde_sum=raw / n,
        n_points=n,
        n_lines=0,
    )


def build_line_system(lines: LineCorrespondences) -> DltSystem:
    """Stack line rows into the 18-parameter system (requires m >= 1)."""
    m = len(lines)
    if m < 1:
        raise EmptyInput("line system needs at least one correspondence")
    a, raw = _line_rows(lines)
    return DltSystem(
        mode=DltMode.LINE,
        a=a,
        q=_sym(a.T @ a) / m,
        q_tilde_sum=raw / m,
        n_points=0,
        n_lines=m,
    )


def build_combined_system(
    points: PointCorrespondences, lines: LineCorrespondences
) -> DltSystem:
    """Assemble the 21-parameter system from both feature kinds.

    Point rows occupy columns 0:9 (rotation) and 18:21 (translation); line
    rows occupy columns 0:18. The zero blocks express that t appears only in
    point equations and hat(t) R only in line equations.
    """
    n, m = len(points), len(lines)
    if n < 1 or m < 1:
        raise EmptyInput("combined system needs points and lines")
    a_pt, raw_pt = _point_rows(points)
    a_ln, raw_ln = _line_rows(lines)

    a = np.zeros((2 * n + 2 * m, 21))
    a[: 2 * n, :9] = a_pt[:, :9]
    a[: 2 * n, 18:] = a_pt[:, 9:]
    a[2 * n :, :18] = a_ln

    total = n + m
    tilde_pt = np.zeros((21, 21))
    tilde_pt[:9, :9] = raw_pt[:9, :9]
    tilde_pt[:9, 18:] = raw_pt[:9, 9:]
    tilde_pt[18:, :9] = raw_pt[9:, :9]
    tilde_pt[18:, 18:] = raw_pt[9:, 9:]
    tilde_pt /= total
    tilde_ln = np.zeros((21, 21))
    tilde_ln[:18, :18] = raw_ln
    tilde_ln /= total

    return DltSystem(
        mode=DltMode.COMBINED,
        a=a,
        q=_sym(a.T @ a) / total,
        q_tilde_sum=tilde_pt + tilde_ln,
        n_points=n,
        n_lines=m,
        q_tilde_point=tilde_pt,
        q_tilde_line=tilde_ln,
    )
