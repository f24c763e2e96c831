"""Rigid poses, pinhole camera and two-view epipolar helpers.

Poses are world-to-camera transforms (``T_cw``) unless a name says otherwise.
Tangent vectors are ordered ``(v, w)``: translation part first, rotation
part second, and retraction multiplies on the left, ``exp(delta) * T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (
    DegenerateBaseline,
    InvalidDepth,
    NonPositiveDepth,
    NullLine,
)

DEPTH_EPS = 1e-9
BASELINE_EPS = 1e-4


def skew(w):
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def _orthonormalize(R):
    U, _, Vt = np.linalg.svd(R)
    Rn = U @ Vt
    if np.linalg.det(Rn) < 0:
        U[:, -1] *= -1
        Rn = U @ Vt
    return Rn


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> R x + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose contains non-finite values")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-6 or abs(np.linalg.det(R) - 1) > 1e-6:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_quaternion(cls, q_xyzw, t):
        """Build from a scalar-last unit quaternion and a translation."""
        q = np.asarray(q_xyzw, dtype=float)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n < 1e-12:
            raise ValueError("quaternion has zero norm")
        return cls(Rotation.from_quat(q / n).as_matrix(), t)

    def quaternion(self):
        """Scalar-last quaternion with non-negative ``qw``."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        if q[3] < 0:
            q = -q
        return q

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``: apply ``other`` first."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    __matmul__ = compose

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def apply(self, points):
        """Transform a 3-vector or an (N, 3) array."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def center(self):
        """Camera center in world coordinates when ``self`` is ``T_cw``."""
        return -self.rotation.T @ self.translation

    def __repr__(self):
        return f"Pose(q={np.round(self.quaternion(), 6)}, t={np.round(self.translation, 6)})"


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def params(self):
        return np.array([self.fx, self.fy, self.cx, self.cy])

    def in_bounds(self, uv):
        uv = np.asarray(uv, dtype=float)
        return (
            (uv[..., 0] >= 0)
            & (uv[..., 0] <= self.width)
            & (uv[..., 1] >= 0)
            & (uv[..., 1] <= self.height)
        )


@dataclass(frozen=True)
class ImageLine2D:
    """Line ``a*u + b*v + c = 0`` with ``a**2 + b**2 == 1``."""

    a: float
    b: float
    c: float

    @property
    def coeffs(self):
        return np.array([self.a, self.b, self.c])


def project(K: CameraIntrinsics, T_cw: Pose, P_w) -> np.ndarray:
    X = T_cw.apply(np.asarray(P_w, dtype=float).reshape(3))
    if not X[2] > DEPTH_EPS:
        raise NonPositiveDepth(f"camera depth {X[2]:.3g} is not positive")
    return np.array([K.fx * X[0] / X[2] + K.cx, K.fy * X[1] / X[2] + K.cy])


def project_points(K: CameraIntrinsics, T_cw: Pose, P_w):
    """Vectorized projection.

    Returns ``(uv, depth)``; rows with depth <= 1e-9 carry NaN pixels.
    """
    X = T_cw.apply(np.atleast_2d(np.asarray(P_w, dtype=float)))
    z = X[:, 2]
    ok = z > DEPTH_EPS
    uv = np.full((len(X), 2), np.nan)
    uv[ok, 0] = K.fx * X[ok, 0] / z[ok] + K.cx
    uv[ok, 1] = K.fy * X[ok, 1] / z[ok] + K.cy
    return uv, z


def backproject(K: CameraIntrinsics, pixel, depth: float) -> np.ndarray:
    depth = float(depth)
    if not (math.isfinite(depth) and depth > 0):
        raise InvalidDepth(f"depth must be positive and finite, got {depth}")
    u, v = float(pixel[0]), float(pixel[1])
    return np.array([(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth])


def backproject_points(K: CameraIntrinsics, pixels, depths):
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    d = np.asarray(depths, dtype=float).reshape(-1)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise InvalidDepth("all depths must be positive and finite")
    x = (pixels[:, 0] - K.cx) / K.fx * d
    y = (pixels[:, 1] - K.cy) / K.fy * d
    return np.column_stack([x, y, d])


def relative_pose(T_i: Pose, T_j: Pose) -> Pose:
    """Transform taking camera-i coordinates to camera-j coordinates."""
    return T_j @ T_i.inverse()


def fundamental_from_poses(K: CameraIntrinsics, T_i: Pose, T_j: Pose, baseline_eps=BASELINE_EPS):
    """F with ``x_j^T F x_i = 0`` for static points seen by both cameras."""
    T_ji = relative_pose(T_i, T_j)
    t = T_ji.translation
    if np.linalg.norm(t) <= baseline_eps:
        raise DegenerateBaseline(f"baseline {np.linalg.norm(t):.3g} <= {baseline_eps}")
    E = skew(t) @ T_ji.rotation
    K_inv = np.linalg.inv(K.matrix)
    return K_inv.T @ E @ K_inv


def epipolar_line(F, x) -> ImageLine2D:
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 2:
        x = np.array([x[0], x[1], 1.0])
    l = np.asarray(F, dtype=float) @ x
    n = math.hypot(l[0], l[1])
    if n < 1e-12:
        raise NullLine("point maps to a null epipolar line")
    # fix the sign so the representation is unique
    if l[1] < 0 or (l[1] == 0 and l[0] < 0):
        n = -n
    return ImageLine2D(l[0] / n, l[1] / n, l[2] / n)


def point_line_distance(line: ImageLine2D, pixel) -> float:
    return abs(line.a * pixel[0] + line.b * pixel[1] + line.c)


# --- SE(3) manifold --------------------------------------------------------


def so3_exp(w):
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    W = skew(w)
    if theta < 1e-8:
        return np.eye(3) + W + 0.5 * W @ W
    return (
        np.eye(3)
        + math.sin(theta) / theta * W
        + (1 - math.cos(theta)) / theta**2 * W @ W
    )


def so3_log(R):
    return Rotation.from_matrix(R).as_rotvec()


def _left_jacobian(w):
    theta = np.linalg.norm(w)
    W = skew(w)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    return (
        np.eye(3)
        + (1 - math.cos(theta)) / theta**2 * W
        + (theta - math.sin(theta)) / theta**3 * W @ W
    )


def se3_exp(delta) -> Pose:
    delta = np.asarray(delta, dtype=float)
    v, w = delta[:3], delta[3:]
    return Pose(so3_exp(w), _left_jacobian(w) @ v)


def se3_log(T: Pose) -> np.ndarray:
    w = so3_log(T.rotation)
    v = np.linalg.solve(_left_jacobian(w), T.translation)
    return np.concatenate([v, w])


def se3_retract(T: Pose, delta) -> Pose:
    """``exp(delta) * T`` followed by re-orthonormalization."""
    P = se3_exp(delta) @ T
    return Pose(_orthonormalize(P.rotation), P.translation)


def se3_local(T_a: Pose, T_b: Pose) -> np.ndarray:
    """Inverse of :func:`se3_retract`: the delta with ``retract(T_a, delta) == T_b``."""
    return se3_log(T_b @ T_a.inverse())


def rotation_angle(R) -> float:
    return float(np.linalg.norm(so3_log(R)))


def pose_distance(T_a: Pose, T_b: Pose):
    """(rotation angle, translation norm) of ``T_a^-1 T_b``; both zero iff equal."""
    D = T_a.inverse() @ T_b
    return rotation_angle(D.rotation), float(np.linalg.norm(D.translation))
