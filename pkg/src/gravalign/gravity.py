"""Robust camera-to-gravity rotation estimation from paired pointmaps.

Given a gravity-frame and a camera-frame pointmap of the same pixels
(the two frames share an origin, so no translation is involved), the
rotation taking camera points to gravity points is estimated by:

1. combining the two confidence maps into a joint score (product of logs),
2. keeping the top fraction of pixels by that score,
3. scale-normalizing each side independently by the median distance of
   points to their componentwise-median center (points are divided by the
   scale; the center is not subtracted),
4. a RANSAC loop: sample correspondences, fit rotation + scale by SVD on
   the raw vectors (no centering), discard the scale, count inliers by L2
   error on the normalized points, and keep the rotation with the most
   inliers (earliest iteration wins ties).

Everything is deterministic given the seed; iterations draw from
independently spawned child generators, so they may be evaluated in
parallel with an unchanged result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, DimensionMismatch, InsufficientPoints, ZeroScale
from .geometry import Pointmap, is_rotation
from .procrustes import RANK_EPS, _rotation_from_svd

# Confidences are clamped to at least this before taking logs, so inputs
# that are not of the >= 1 kind still produce a sensible ordering.
CONFIDENCE_CLAMP = 1.0 + 1e-6


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 5000
    sample_size: int = 50000
    inlier_threshold: float = 0.05
    top_confidence_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.sample_size < 1:
            raise ValueError("iterations and sample_size must be >= 1")
        if not 0.0 < self.top_confidence_fraction <= 1.0:
            raise ValueError("top_confidence_fraction must be in (0, 1]")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")


@dataclass(frozen=True, eq=False)
class GravityEstimate:
    rotation: np.ndarray     # camera-to-gravity
    inlier_count: int
    inlier_ratio: float

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        R.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        if not is_rotation(R, tol=1e-8):
            raise ValueError("estimate rotation must be proper orthonormal")
        if not 0.0 <= self.inlier_ratio <= 1.0:
            raise ValueError("inlier_ratio must lie in [0, 1]")


def joint_confidence(psi_g: np.ndarray, psi_c: np.ndarray) -> np.ndarray:
    """Elementwise product of the log-confidences, clamped to stay positive."""
    psi_g = np.asarray(psi_g, dtype=float)
    psi_c = np.asarray(psi_c, dtype=float)
    if psi_g.shape != psi_c.shape:
        raise DimensionMismatch(f"confidence shapes differ: {psi_g.shape} vs {psi_c.shape}")
    return np.log(np.maximum(psi_g, CONFIDENCE_CLAMP)) * np.log(np.maximum(psi_c, CONFIDENCE_CLAMP))


def normalize_pointmap_scale(pts: np.ndarray) -> tuple[np.ndarray, float]:
    """Divide points by the median distance to their componentwise median.

    The center is not subtracted; only the scale is normalized. Raises
    ZeroScale when the cloud collapses to a single location.
    """
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise InsufficientPoints(f"expected (N, 3) points, got shape {pts.shape}")
    center = np.median(pts, axis=0)
    scale = float(np.median(np.linalg.norm(pts - center, axis=1)))
    if scale < 1e-12:
        raise ZeroScale("median distance to the pointmap center is zero")
    return pts / scale, scale


def _rotation_only_fit(C: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Rotation R maximizing sum_i G_i . (R C_i) over raw (uncentered) vectors.

    This is the rotation part of a rotation+scale fit between vector sets;
    the scale would be a positive factor that does not change R and is
    discarded by the caller.
    """
    H = C.T @ G
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[1] <= RANK_EPS * sv[0]:
        raise DegenerateConfiguration("sampled vectors do not determine a rotation")
    # _rotation_from_svd(H) maps source onto target for H = P^T Q.
    return _rotation_from_svd(H)


def estimate_gravity_rotation(pm_g: Pointmap, pm_c: Pointmap,
                              cfg: RansacConfig = RansacConfig()) -> GravityEstimate:
    """RANSAC estimate of the rotation with ``gravity ~= R @ camera``."""
    if pm_g.points.shape != pm_c.points.shape:
        raise DimensionMismatch(
            f"pointmap shapes differ: {pm_g.points.shape} vs {pm_c.points.shape}")
    if pm_g.confidence is None or pm_c.confidence is None:
        raise ValueError("both pointmaps must carry confidence grids")

    score = joint_confidence(pm_g.confidence, pm_c.confidence).reshape(-1)
    g_pts = pm_g.points.reshape(-1, 3)
    c_pts = pm_c.points.reshape(-1, 3)
    valid = np.all(np.isfinite(g_pts), axis=1) & np.all(np.isfinite(c_pts), axis=1)
    idx = np.flatnonzero(valid)
    if idx.size < 3:
        raise InsufficientPoints(f"only {idx.size} valid correspondences")

    keep = max(3, int(np.ceil(cfg.top_confidence_fraction * idx.size)))
    order = np.argsort(-score[idx], kind="stable")
    idx = idx[order[:keep]]

    G, _ = normalize_pointmap_scale(g_pts[idx])
    C, _ = normalize_pointmap_scale(c_pts[idx])
    n = idx.size

    children = np.random.SeedSequence(cfg.seed).spawn(cfg.iterations)
    best_R, best_count = None, -1
    use_all = cfg.sample_size >= n
    for child in children:
        if use_all:
            Cs, Gs = C, G
        else:
            rng = np.random.default_rng(child)
            sel = rng.integers(0, n, size=cfg.sample_size)
            Cs, Gs = C[sel], G[sel]
        try:
            R = _rotation_only_fit(Cs, Gs)
        except DegenerateConfiguration:
            if use_all:
                raise
            continue
        err = np.linalg.norm(G - C @ R.T, axis=1)
        count = int(np.count_nonzero(err < cfg.inlier_threshold))
        if count > best_count:
            best_R, best_count = R, count
        if use_all:
            break  # every iteration sees identical data

    if best_R is None:
        raise DegenerateConfiguration("no RANSAC iteration produced a rotation")
    return GravityEstimate(best_R, best_count, best_count / n)
