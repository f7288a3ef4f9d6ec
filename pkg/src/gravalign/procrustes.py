"""Closed-form weighted similarity alignment between corresponding point sets.

Two variants:

- :func:`procrustes` fits a full 7-DoF similarity (scale, rotation,
  translation) by SVD of the weighted cross-covariance,
- :func:`ga_procrustes` restricts the rotation to the y-axis by projecting
  the centered clouds onto the xz-plane, solving a 2x2 rotation, and
  lifting the angle back to 3D.

Both use the root-mean-square ratio of the centered clouds as the scale
(not the covariance-based scale, which differs under noise), estimate the
rotation by SVD with the standard reflection correction (negate the last
column of V when det(V U^T) < 0), and recover the translation from the
weighted means. Weights generalize the unweighted algorithm: weighted
means, weighted rms, and a diag(w) factor inside the cross-covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, InsufficientPoints
from .geometry import Sim3Pose, SimY3Pose

# A centered cloud is degenerate when its second singular value falls below
# this fraction of the largest.
RANK_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Correspondences:
    """Paired source (P) and target (Q) points with optional positive weights."""

    P: np.ndarray
    Q: np.ndarray
    w: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        if P.ndim != 2 or P.shape[1] != 3 or Q.shape != P.shape:
            raise ValueError(f"P and Q must both have shape (N, 3), got {P.shape} and {Q.shape}")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
            raise ValueError("correspondence points must be finite")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        if self.w is not None:
            w = np.asarray(self.w, dtype=float)
            if w.shape != (P.shape[0],):
                raise ValueError(f"weights must have shape ({P.shape[0]},), got {w.shape}")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("weights must be strictly positive and finite")
            object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return self.P.shape[0]


def _center_and_scale(P, Q, w):
    wsum = w.sum()
    mu_p = w @ P / wsum
    mu_q = w @ Q / wsum
    Pc = P - mu_p
    Qc = Q - mu_q
    rms_p = np.sqrt(w @ np.einsum("ij,ij->i", Pc, Pc) / wsum)
    rms_q = np.sqrt(w @ np.einsum("ij,ij->i", Qc, Qc) / wsum)
    if rms_p < 1e-300 or rms_q < 1e-300:
        raise DegenerateConfiguration("a point cloud collapses to its centroid")
    return mu_p, mu_q, Pc, Qc, rms_q / rms_p


def _check_rank(cloud: np.ndarray, sqrt_w: np.ndarray, label: str,
                scale_ref: float | None = None) -> None:
    sv = np.linalg.svd(cloud * sqrt_w[:, None], compute_uv=False)
    if scale_ref is not None and sv[0] <= RANK_EPS * scale_ref:
        raise DegenerateConfiguration(f"{label} points collapse to the centroid")
    if sv[1] <= RANK_EPS * sv[0]:
        raise DegenerateConfiguration(
            f"{label} points are collinear through the centroid (rank < 2)")


def _rotation_from_svd(H: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    if np.linalg.det(V @ U.T) < 0:
        V = V.copy()
        V[:, -1] = -V[:, -1]
    return V @ U.T


def procrustes(c: Correspondences) -> Sim3Pose:
    """Weighted least-squares similarity mapping P onto Q.

    Minimizes ``sum_i w_i || Q_i - (s R P_i + t) ||^2`` over rotation and
    translation, with the scale fixed to the weighted rms ratio of the
    centered clouds. Requires at least 3 correspondences whose centered
    clouds are not collinear.
    """
    if len(c) < 3:
        raise InsufficientPoints(f"need >= 3 correspondences, got {len(c)}")
    w = np.ones(len(c)) if c.w is None else c.w
    mu_p, mu_q, Pc, Qc, s = _center_and_scale(c.P, c.Q, w)
    sqrt_w = np.sqrt(w)
    _check_rank(Pc, sqrt_w, "source")
    _check_rank(Qc, sqrt_w, "target")
    H = (s * Pc).T @ (w[:, None] * Qc)
    R = _rotation_from_svd(H)
    return Sim3Pose(s, R, mu_q - s * (R @ mu_p))


def ga_procrustes(c: Correspondences) -> SimY3Pose:
    """Weighted similarity with the rotation constrained to the y-axis.

    The scale comes from the full 3D rms ratio; the yaw is the global
    minimizer of the weighted objective over y-rotations, obtained from a
    2x2 SVD of the xz-projected cross-covariance. Requires the centered
    xz-projections of both clouds to have rank 2 (points on one vertical
    line, for example, leave the yaw undetermined enough to be rejected).
    """
    if len(c) < 2:
        raise InsufficientPoints(f"need >= 2 correspondences, got {len(c)}")
    w = np.ones(len(c)) if c.w is None else c.w
    mu_p, mu_q, Pc, Qc, s = _center_and_scale(c.P, c.Q, w)
    sqrt_w = np.sqrt(w)
    Pxz = Pc[:, [0, 2]]
    Qxz = Qc[:, [0, 2]]
    # Rank of the projections is judged against the full 3D spread, so a
    # vertical-line cloud (tiny projection) is flagged as degenerate.
    _check_rank(Pxz, sqrt_w, "source xz-projected",
                scale_ref=float(np.linalg.norm(Pc * sqrt_w[:, None])))
    _check_rank(Qxz, sqrt_w, "target xz-projected",
                scale_ref=float(np.linalg.norm(Qc * sqrt_w[:, None])))
    H = (s * Pxz).T @ (w[:, None] * Qxz)
    M = _rotation_from_svd(H)
    # The xz-block of rot_y(yaw) is [[cos, sin], [-sin, cos]].
    yaw = float(np.arctan2(M[0, 1], M[0, 0]))
    pose = SimY3Pose(s, yaw, np.zeros(3))
    return SimY3Pose(s, yaw, mu_q - s * (pose.rotation_matrix() @ mu_p))


def alignment_residual(c: Correspondences, pose) -> float:
    """Weighted objective value ``sum_i w_i || Q_i - pose(P_i) ||^2``."""
    from .geometry import apply_pose

    w = np.ones(len(c)) if c.w is None else c.w
    d = c.Q - apply_pose(pose, c.P)
    return float(w @ np.einsum("ij,ij->i", d, d))
