"""Core geometric types: similarity poses, the yaw-only subgroup, pointmaps.

Conventions used throughout the package:

- the y-axis is the vertical (up) direction,
- rotations follow the right-hand rule about the named axis, so the yaw
  matrix is ``[[cos t, 0, sin t], [0, 1, 0], [-sin t, 0, cos t]]``,
- a pose acts on a point as ``p -> s * R @ p + t``,
- points are float arrays of shape ``(..., 3)``, rotations are ``(3, 3)``.

All types are immutable values and all operations are pure functions, so
instances can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

ORTHONORMALITY_TOL = 1e-9


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the canonical interval (-pi, pi]."""
    r = math.remainder(theta, math.tau)
    if r <= -math.pi:
        r += math.tau
    return r


def rot_x(angle: float) -> np.ndarray:
    """Right-hand rotation matrix about +x (pitch)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    """Right-hand rotation matrix about +y (yaw)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    """Right-hand rotation matrix about +z (roll)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R: np.ndarray, tol: float = ORTHONORMALITY_TOL) -> bool:
    """True if R is orthonormal with det +1 within tol."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    if np.abs(R @ R.T - np.eye(3)).max() > tol:
        return False
    return abs(np.linalg.det(R) - 1.0) <= tol


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (QR of a Gaussian matrix, det-corrected)."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def geodesic_angle_deg(R1: np.ndarray, R2: np.ndarray) -> float:
    """Geodesic distance between two rotations in degrees.

    The trace argument is clamped to [-1, 1] before the arccos so that
    round-off near 0 and 180 degrees cannot produce NaN.
    """
    c = (np.trace(np.asarray(R2) @ np.asarray(R1).T) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def rotation_angle_deg(R1: np.ndarray, R2: np.ndarray) -> float:
    """Angle between rotations via ||R1 - R2||_F = 2*sqrt(2)*sin(angle/2).

    Equivalent to the geodesic distance but resolves angles down to
    round-off near zero, where the trace/arccos form has a ~1e-6 degree
    noise floor; used for tight pose-equality checks.
    """
    d = float(np.linalg.norm(np.asarray(R1) - np.asarray(R2))) / (2.0 * math.sqrt(2.0))
    return math.degrees(2.0 * math.asin(min(1.0, d)))


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Sim3Pose:
    """7-DoF similarity transform: positive scale, rotation, translation."""

    s: float
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "R", _freeze(self.R))
        object.__setattr__(self, "t", _freeze(self.t))
        if not (math.isfinite(self.s) and self.s > 0):
            raise ValueError(f"scale must be positive and finite, got {self.s}")
        if self.R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {self.R.shape}")
        if not is_rotation(self.R):
            raise ValueError("rotation matrix is not orthonormal with det +1")
        if self.t.shape != (3,) or not np.all(np.isfinite(self.t)):
            raise ValueError("translation must be a finite 3-vector")

    @classmethod
    def identity(cls) -> "Sim3Pose":
        return cls(1.0, np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 representation [[s*R, t], [0, 1]]."""
        m = np.eye(4)
        m[:3, :3] = self.s * self.R
        m[:3, 3] = self.t
        return m


@dataclass(frozen=True, eq=False)
class SimY3Pose:
    """5-DoF similarity transform with rotation restricted to the y-axis."""

    s: float
    yaw: float
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "t", _freeze(self.t))
        if not (math.isfinite(self.s) and self.s > 0):
            raise ValueError(f"scale must be positive and finite, got {self.s}")
        if self.t.shape != (3,) or not np.all(np.isfinite(self.t)):
            raise ValueError("translation must be a finite 3-vector")

    @classmethod
    def identity(cls) -> "SimY3Pose":
        return cls(1.0, 0.0, np.zeros(3))

    def rotation_matrix(self) -> np.ndarray:
        return rot_y(self.yaw)

    def to_sim3(self) -> Sim3Pose:
        """Lossless embedding into the full 7-DoF group."""
        return Sim3Pose(self.s, rot_y(self.yaw), self.t)

    def matrix(self) -> np.ndarray:
        return self.to_sim3().matrix()


Pose = Sim3Pose | SimY3Pose


def sim3_to_simy3(pose: Sim3Pose, tol: float = 1e-9) -> SimY3Pose:
    """Re-express a Sim3 pose as SimY3 if its rotation is a pure y-rotation."""
    R = pose.R
    off = max(abs(R[0, 1]), abs(R[1, 0]), abs(R[1, 2]), abs(R[2, 1]), abs(R[1, 1] - 1.0))
    if off > tol:
        raise ValueError(f"rotation has off-yaw components up to {off:.3e}")
    yaw = math.atan2(R[0, 2], R[0, 0])
    return SimY3Pose(pose.s, yaw, pose.t)


def apply_pose(pose: Pose, pts: np.ndarray) -> np.ndarray:
    """Apply ``p -> s * R @ p + t`` to an array of points of shape (..., 3)."""
    pts = np.asarray(pts, dtype=float)
    R = pose.R if isinstance(pose, Sim3Pose) else pose.rotation_matrix()
    return pose.s * (pts @ R.T) + pose.t


def compose(a: Pose, b: Pose) -> Pose:
    """Composition acting as ``apply(compose(a, b), p) == apply(a, apply(b, p))``.

    Two SimY3 poses compose to a SimY3 pose (yaw angles add); any mix
    involving a Sim3 pose composes in the full group.
    """
    if isinstance(a, SimY3Pose) and isinstance(b, SimY3Pose):
        t = a.s * (a.rotation_matrix() @ b.t) + a.t
        return SimY3Pose(a.s * b.s, a.yaw + b.yaw, t)
    a3 = a.to_sim3() if isinstance(a, SimY3Pose) else a
    b3 = b.to_sim3() if isinstance(b, SimY3Pose) else b
    return Sim3Pose(a3.s * b3.s, a3.R @ b3.R, a3.s * (a3.R @ b3.t) + a3.t)


def inverse(p: Pose) -> Pose:
    """Group inverse: ``compose(p, inverse(p))`` is the identity."""
    if isinstance(p, SimY3Pose):
        s = 1.0 / p.s
        yaw = -p.yaw
        return SimY3Pose(s, yaw, -s * (rot_y(yaw) @ p.t))
    s = 1.0 / p.s
    return Sim3Pose(s, p.R.T, -s * (p.R.T @ p.t))


def pose_error(a: Pose, b: Pose) -> tuple[float, float, float]:
    """(rotation deg, translation, relative scale) discrepancy between poses."""
    a3 = a.to_sim3() if isinstance(a, SimY3Pose) else a
    b3 = b.to_sim3() if isinstance(b, SimY3Pose) else b
    rot = rotation_angle_deg(a3.R, b3.R)
    trans = float(np.linalg.norm(a3.t - b3.t))
    scale = abs(a3.s / b3.s - 1.0)
    return rot, trans, scale


def poses_close(a: Pose, b: Pose, rot_deg: float = 1e-9, trans: float = 1e-9,
                scale: float = 1e-9) -> bool:
    """Component-wise pose equality with geodesic rotation distance."""
    dr, dt, ds = pose_error(a, b)
    return dr <= rot_deg and dt <= trans and ds <= scale


class FrameTag(IntEnum):
    """Coordinate-frame family a pointmap is expressed in."""

    CAMERA = 0
    GRAVITY = 1
    WORLD = 2


@dataclass(frozen=True, eq=False)
class Pointmap:
    """H x W grid of 3D points with optional per-pixel confidence.

    NaN point entries mark invalid pixels and are skipped by all consumers.
    Confidence values, where present, must be strictly positive and finite.
    """

    points: np.ndarray
    confidence: np.ndarray | None = None
    frame_tag: FrameTag = FrameTag.CAMERA

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 3 or pts.shape[2] != 3 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must have shape (H, W, 3), got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "frame_tag", FrameTag(self.frame_tag))
        if self.confidence is not None:
            conf = np.array(self.confidence, dtype=float)
            if conf.shape != pts.shape[:2]:
                raise ValueError(
                    f"confidence shape {conf.shape} does not match points {pts.shape[:2]}")
            if not np.all(np.isfinite(conf)) or np.any(conf <= 0):
                raise ValueError("confidence must be strictly positive and finite")
            conf.setflags(write=False)
            object.__setattr__(self, "confidence", conf)

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]

    def valid_mask(self) -> np.ndarray:
        """Boolean (H, W) mask of pixels with all-finite coordinates."""
        return np.all(np.isfinite(self.points), axis=2)


@dataclass(frozen=True)
class FrameRotation:
    """Roll and pitch taking a camera frame to its gravity-aligned frame.

    The conversion is ``X_gravity = rot_x(pitch) @ rot_z(roll) @ X_camera``,
    written in that order; both frames share the same origin.
    """

    roll: float
    pitch: float

    def matrix(self) -> np.ndarray:
        return rot_x(self.pitch) @ rot_z(self.roll)


def camera_to_gravity_frame(pm: Pointmap, fr: FrameRotation) -> Pointmap:
    """Rotate a camera-frame pointmap into its gravity-aligned frame."""
    if pm.frame_tag != FrameTag.CAMERA:
        raise ValueError(f"expected a camera-frame pointmap, got {pm.frame_tag.name}")
    pts = pm.points @ fr.matrix().T
    return Pointmap(pts, pm.confidence, FrameTag.GRAVITY)


def gravity_to_camera_frame(pm: Pointmap, fr: FrameRotation) -> Pointmap:
    """Inverse of :func:`camera_to_gravity_frame`."""
    if pm.frame_tag != FrameTag.GRAVITY:
        raise ValueError(f"expected a gravity-frame pointmap, got {pm.frame_tag.name}")
    pts = pm.points @ fr.matrix()
    return Pointmap(pts, pm.confidence, FrameTag.CAMERA)


def transform_pointmap(pose: Pose, pm: Pointmap, frame_tag: FrameTag | None = None) -> Pointmap:
    """Map every point of a pointmap through a pose; NaN pixels stay NaN."""
    pts = apply_pose(pose, pm.points)
    tag = pm.frame_tag if frame_tag is None else frame_tag
    return Pointmap(pts, pm.confidence, tag)
