"""Evaluation metrics: rotation errors, absolute pose error, structure quality.

Nearest-neighbor queries go through a KD-tree but the reported distances
are recomputed from the matched indices with plain numpy, so the results
are bit-identical to a brute-force all-pairs search (verified in tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateConfiguration, InsufficientPoints, LengthMismatch
from .geometry import (
    Pose,
    Sim3Pose,
    SimY3Pose,
    apply_pose,
    compose,
    geodesic_angle_deg,
)
from .procrustes import Correspondences, ga_procrustes, procrustes

NORMAL_NEIGHBORS = 16


@dataclass(frozen=True, eq=False)
class RotationErrorStats:
    errors_deg: np.ndarray
    mean_deg: float
    median_deg: float
    acc_at_1: float
    acc_at_2: float
    acc_at_5: float


@dataclass(frozen=True)
class PoseErrorStats:
    ape_rot_deg: float    # RMSE of per-pose geodesic rotation errors
    ape_trans: float      # RMSE of per-pose translation L2 errors
    delta_y: float        # median absolute vertical translation error


@dataclass(frozen=True)
class StructureStats:
    acc: float            # mean distance, prediction -> truth
    comp: float           # mean distance, truth -> prediction
    nc: float             # mean absolute normal agreement, symmetric
    acc_median: float
    comp_median: float


def geodesic_rotation_error(R1: np.ndarray, R2: np.ndarray) -> float:
    """arccos((trace(R2 R1^T) - 1) / 2) in degrees, clamped for safety."""
    return geodesic_angle_deg(R1, R2)


def rotation_stats(pred: list, gt: list) -> RotationErrorStats:
    """Per-sample geodesic errors with mean, median and accuracy buckets.

    Accuracy buckets use strict less-than: a sample at exactly 2 degrees
    does not count toward acc@2.
    """
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gt)} ground truths")
    if len(pred) == 0:
        raise LengthMismatch("need at least one rotation pair")
    errs = np.array([geodesic_rotation_error(g, p) for p, g in zip(pred, gt)])
    return RotationErrorStats(
        errors_deg=errs,
        mean_deg=float(errs.mean()),
        median_deg=float(np.median(errs)),
        acc_at_1=float(100.0 * np.count_nonzero(errs < 1.0) / errs.size),
        acc_at_2=float(100.0 * np.count_nonzero(errs < 2.0) / errs.size),
        acc_at_5=float(100.0 * np.count_nonzero(errs < 5.0) / errs.size),
    )


def _as_sim3(p: Pose) -> Sim3Pose:
    return p.to_sim3() if isinstance(p, SimY3Pose) else p


def ape(pred: list, gt: list, mode: str = "sim3", align: bool = True) -> PoseErrorStats:
    """Absolute pose error after closed-form trajectory alignment.

    The predicted trajectory carries an arbitrary gauge, so by default a
    similarity fit in ``mode``'s group is estimated over the pose
    translations and applied to the predictions before comparison
    (Procrustes for "sim3", the yaw-constrained variant for "simy3");
    pass ``align=False`` to compare in the raw frames.
    """
    if mode not in ("sim3", "simy3"):
        raise ValueError(f"mode must be 'sim3' or 'simy3', got {mode!r}")
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gt)} ground truths")
    if len(pred) < 2:
        raise LengthMismatch("need at least two poses")

    pred3 = [_as_sim3(p) for p in pred]
    gt3 = [_as_sim3(p) for p in gt]
    if align:
        c = Correspondences(np.array([p.t for p in pred3]), np.array([p.t for p in gt3]))
        fit = ga_procrustes(c) if mode == "simy3" else procrustes(c)
        pred3 = [_as_sim3(compose(fit, p)) for p in pred]

    rot = np.array([geodesic_rotation_error(g.R, p.R) for p, g in zip(pred3, gt3)])
    dt = np.array([p.t - g.t for p, g in zip(pred3, gt3)])
    trans = np.linalg.norm(dt, axis=1)
    return PoseErrorStats(
        ape_rot_deg=float(np.sqrt(np.mean(rot**2))),
        ape_trans=float(np.sqrt(np.mean(trans**2))),
        delta_y=float(np.median(np.abs(dt[:, 1]))),
    )


def _nearest_indices(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    _, idx = cKDTree(reference).query(query, k=1)
    return idx


def _nn_distances(query: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = _nearest_indices(query, reference)
    d = query - reference[idx]
    return np.sqrt(np.einsum("ij,ij->i", d, d)), idx


def pca_normals(cloud: np.ndarray, k: int = NORMAL_NEIGHBORS) -> np.ndarray:
    """Unit normals from the smallest principal axis of each point's k-NN."""
    cloud = np.asarray(cloud, dtype=float)
    if cloud.shape[0] < k:
        raise InsufficientPoints(f"need >= {k} points for PCA normals, got {cloud.shape[0]}")
    _, idx = cKDTree(cloud).query(cloud, k=k)
    nbrs = cloud[idx]                                  # (N, k, 3)
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, :, 0]                               # eigenvector of smallest eigenvalue


def structure_metrics(pred: np.ndarray, gt: np.ndarray, align: bool = True,
                      k_normals: int = NORMAL_NEIGHBORS) -> StructureStats:
    """Accuracy, completeness and normal consistency between point clouds.

    ACC is the mean distance from each predicted point to its nearest
    ground-truth point, COMP the reverse. NC is the mean absolute dot
    product between PCA normals of matched nearest neighbors, averaged
    symmetrically over both directions. With ``align=True`` the clouds
    must be index-corresponding (pointmap-style) and the prediction is
    first registered to the truth by Procrustes.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.ndim != 2 or pred.shape[1] != 3 or gt.ndim != 2 or gt.shape[1] != 3:
        raise ValueError("point clouds must have shape (N, 3)")
    if pred.shape[0] < k_normals or gt.shape[0] < k_normals:
        raise InsufficientPoints(
            f"both clouds need >= {k_normals} points, got {pred.shape[0]} and {gt.shape[0]}")
    if align:
        if pred.shape[0] != gt.shape[0]:
            raise DegenerateConfiguration(
                "align=True requires index-corresponding clouds of equal size")
        pred = apply_pose(procrustes(Correspondences(pred, gt)), pred)

    d_pg, idx_pg = _nn_distances(pred, gt)
    d_gp, idx_gp = _nn_distances(gt, pred)
    n_pred = pca_normals(pred, k_normals)
    n_gt = pca_normals(gt, k_normals)
    nc_pg = np.abs(np.einsum("ij,ij->i", n_pred, n_gt[idx_pg])).mean()
    nc_gp = np.abs(np.einsum("ij,ij->i", n_gt, n_pred[idx_gp])).mean()
    return StructureStats(
        acc=float(d_pg.mean()),
        comp=float(d_gp.mean()),
        nc=float(0.5 * (nc_pg + nc_gp)),
        acc_median=float(np.median(d_pg)),
        comp_median=float(np.median(d_gp)),
    )
