"""Confidence-initialized IRLS alignment of two overlapping chunks.

A chunk is an ordered run of frames whose pointmaps share one reference
frame. Two chunks that contain the same source images are aligned by
solving a weighted Procrustes problem over the pixelwise correspondences
of those shared images, iteratively reweighted by a robust loss:

- weights are initialized from the product of the two confidence maps,
  normalized to mean one (so scaling all confidences is a no-op),
- each iteration re-solves the closed-form weighted fit, then updates the
  robust weights from the residual norms (Huber by default, scale set to
  ``loss_scale * MAD`` of the current residuals),
- a candidate pose is accepted only if it does not increase the weighted
  objective, which makes the recorded objective trace non-increasing by
  construction (mirroring step acceptance in the graph optimizer).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyOverlap, InvalidConfig
from .geometry import FrameTag, Pointmap, Pose, apply_pose, compose, inverse
from .lie import log_sim3, log_simy3
from .procrustes import Correspondences, ga_procrustes, procrustes

ROBUST_LOSSES = ("huber", "cauchy")


@dataclass(frozen=True, eq=False)
class Chunk:
    """Ordered frames with pointmaps expressed in one shared reference frame."""

    id: int
    frames: tuple[int, ...]
    pointmaps: tuple[Pointmap, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(int(f) for f in self.frames))
        object.__setattr__(self, "pointmaps", tuple(self.pointmaps))
        if len(self.frames) != len(self.pointmaps):
            raise ValueError("one pointmap per frame required")
        if len(self.frames) == 0:
            raise ValueError("chunk must contain at least one frame")
        if any(b <= a for a, b in zip(self.frames, self.frames[1:])):
            raise ValueError("frame ids must be strictly increasing")
        tags = {pm.frame_tag for pm in self.pointmaps}
        if len(tags) > 1:
            raise ValueError(f"all pointmaps must share one frame tag, got {tags}")

    @property
    def frame_tag(self) -> FrameTag:
        return self.pointmaps[0].frame_tag


@dataclass(frozen=True)
class OverlapSet:
    """Index pairs (i in chunk A, j in chunk B) referring to the same image."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))
        if not self.pairs:
            raise ValueError("overlap set must be non-empty")

    @staticmethod
    def from_shared_frames(a: Chunk, b: Chunk) -> "OverlapSet":
        """Pairs for every frame id present in both chunks."""
        in_b = {f: j for j, f in enumerate(b.frames)}
        pairs = [(i, in_b[f]) for i, f in enumerate(a.frames) if f in in_b]
        if not pairs:
            raise EmptyOverlap(f"chunks {a.id} and {b.id} share no frames")
        return OverlapSet(tuple(pairs))


@dataclass(frozen=True)
class IrlsConfig:
    max_iters: int = 10
    loss: str = "huber"
    # Robust scale is loss_scale * MAD of the current residual norms.
    loss_scale: float = 1.345
    convergence_tol: float = 1e-8
    min_weight: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidConfig("max_iters must be >= 1")
        if self.loss not in ROBUST_LOSSES:
            raise InvalidConfig(f"loss must be one of {ROBUST_LOSSES}, got {self.loss!r}")
        if self.loss_scale <= 0 or self.convergence_tol <= 0 or self.min_weight <= 0:
            raise InvalidConfig("loss_scale, convergence_tol and min_weight must be positive")


@dataclass(frozen=True, eq=False)
class AlignResult:
    pose: Pose
    weights: np.ndarray          # final per-correspondence weights
    residual: float              # final weighted objective value
    pair_index: np.ndarray       # overlap-pair index of each correspondence
    pixel_index: np.ndarray      # flat pixel index of each correspondence
    objective_trace: list[float]
    iterations: int
    converged: bool
    reason: str


def _gather_correspondences(a: Chunk, b: Chunk, m: OverlapSet, stride: int):
    src, dst, w0, pair_idx, pix_idx = [], [], [], [], []
    for k, (i, j) in enumerate(m.pairs):
        pa, pb = a.pointmaps[i], b.pointmaps[j]
        if pa.points.shape != pb.points.shape:
            raise InvalidConfig(
                f"overlap pair ({i}, {j}) has mismatched pointmap shapes "
                f"{pa.points.shape[:2]} vs {pb.points.shape[:2]}")
        qa = pa.points.reshape(-1, 3)
        qb = pb.points.reshape(-1, 3)
        mask = np.all(np.isfinite(qa), axis=1) & np.all(np.isfinite(qb), axis=1)
        idx = np.flatnonzero(mask)[::stride]
        if idx.size == 0:
            continue
        conf = np.ones(idx.size)
        if pa.confidence is not None:
            conf = conf * pa.confidence.reshape(-1)[idx]
        if pb.confidence is not None:
            conf = conf * pb.confidence.reshape(-1)[idx]
        src.append(qb[idx])
        dst.append(qa[idx])
        w0.append(conf)
        pair_idx.append(np.full(idx.size, k))
        pix_idx.append(idx)
    if not src:
        raise EmptyOverlap("no finite correspondences in the overlap")
    return (np.concatenate(src), np.concatenate(dst), np.concatenate(w0),
            np.concatenate(pair_idx), np.concatenate(pix_idx))


def _robust_weights(r: np.ndarray, loss: str, loss_scale: float) -> np.ndarray | None:
    med = np.median(r)
    mad = np.median(np.abs(r - med))
    c = loss_scale * mad
    if c < 1e-12:
        return None  # residuals essentially identical; nothing to downweight
    if loss == "huber":
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, np.where(r > 0, c / r, 1.0))
    return 1.0 / (1.0 + (r / c) ** 2)


def align_chunks(a: Chunk, b: Chunk, m: OverlapSet, mode: str,
                 cfg: IrlsConfig = IrlsConfig(), stride: int = 1) -> AlignResult:
    """Estimate the pose mapping chunk ``b``'s frame into chunk ``a``'s frame.

    ``mode`` is "sim3" for the full 7-DoF fit or "simy3" for the yaw-only
    fit; the latter requires both chunks to carry gravity-frame pointmaps.
    Returns the pose together with the final weights, the weighted
    objective, and the (pair, pixel) index of every correspondence used.
    """
    if mode not in ("sim3", "simy3"):
        raise InvalidConfig(f"mode must be 'sim3' or 'simy3', got {mode!r}")
    if stride < 1:
        raise InvalidConfig("stride must be >= 1")
    if mode == "simy3":
        for chunk in (a, b):
            if chunk.frame_tag != FrameTag.GRAVITY:
                raise InvalidConfig(
                    f"simy3 alignment requires gravity-frame chunks; chunk "
                    f"{chunk.id} is tagged {chunk.frame_tag.name}")

    P, Q, conf, pair_idx, pix_idx = _gather_correspondences(a, b, m, stride)
    solve = ga_procrustes if mode == "simy3" else procrustes
    log = log_simy3 if mode == "simy3" else log_sim3

    w0 = conf / conf.mean()
    w0 = np.maximum(w0, cfg.min_weight)

    def residual_norms(pose):
        d = Q - apply_pose(pose, P)
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    w = w0
    pose = solve(Correspondences(P, Q, w))
    r = residual_norms(pose)
    trace = [float(w @ r**2)]
    iterations = 1
    converged, reason = False, "max_iters reached"

    for _ in range(1, cfg.max_iters):
        w_rob = _robust_weights(r, cfg.loss, cfg.loss_scale)
        if w_rob is None:
            converged, reason = True, "residual spread below robust floor"
            break
        w_new = np.maximum(w0 * w_rob, cfg.min_weight)
        candidate = solve(Correspondences(P, Q, w_new))
        r_new = residual_norms(candidate)
        obj = float(w_new @ r_new**2)
        if obj > trace[-1] + 1e-12:
            reason = "objective would increase"
            break
        step = compose(inverse(pose), candidate)
        step_norm = float(np.linalg.norm(log(step).as_vector()))
        pose, r, w = candidate, r_new, w_new
        trace.append(obj)
        iterations += 1
        if step_norm < cfg.convergence_tol:
            converged, reason = True, "pose update below convergence_tol"
            break

    return AlignResult(pose=pose, weights=w, residual=trace[-1],
                       pair_index=pair_idx, pixel_index=pix_idx,
                       objective_trace=trace, iterations=iterations,
                       converged=converged, reason=reason)
