"""Synthetic room scenes with ground-truth trajectories and pointmaps.

The generator samples a box room (floor, walls, box obstacles), moves a
camera along a parametric trajectory, and records for every frame a
gravity-to-world pose (yaw + translation, a SimY3 element) plus a
camera-to-world pose obtained by composing roll and pitch onto the
gravity pose. Per-frame pointmap grids hold the frustum-visible scene
points (no occlusion test); invalid grid cells are NaN.

Everything is deterministic given the seed. The ``corrupt`` helper adds
pixel-level Gaussian noise and gross outliers (with confidences derived
from the injected displacement) and, optionally, one pose drift applied
to all maps it is given, which models a per-chunk prediction error when
applied chunk by chunk via :func:`corrupting_provider`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .geometry import (
    FrameTag,
    FrameRotation,
    Pointmap,
    Pose,
    Sim3Pose,
    SimY3Pose,
    apply_pose,
    compose,
    inverse,
)
from .lie import TangentSim3, TangentSimY3, exp_sim3, exp_simy3
from .pipeline import LoopDetection, PointmapProvider

TRAJECTORY_KINDS = ("orbit", "lawnmower", "loop")


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "orbit"
    radius_frac: float = 0.32     # orbit radius as a fraction of the room footprint
    height_frac: float = 0.45     # camera height as a fraction of the room height
    rows: int = 4                 # lawnmower sweep rows
    revisit: int = 6              # length of each revisit block in a "loop" trajectory
    num_loops: int = 2            # revisit blocks spread over a "loop" trajectory

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise InvalidSpec(f"trajectory kind must be one of {TRAJECTORY_KINDS}")
        if not 0 < self.radius_frac < 0.5 or not 0 < self.height_frac < 1:
            raise InvalidSpec("radius_frac must be in (0, 0.5), height_frac in (0, 1)")
        if self.rows < 2 or self.revisit < 1 or self.num_loops < 1:
            raise InvalidSpec("rows must be >= 2, revisit >= 1 and num_loops >= 1")


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    num_frames: int = 60
    room: tuple[float, float, float] = (8.0, 3.0, 8.0)
    num_boxes: int = 6
    points_per_frame: int = 1536
    fov_deg: float = 70.0
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)

    def __post_init__(self):
        if min(self.room) <= 0:
            raise InvalidSpec("room extents must be positive")
        if self.points_per_frame < 100:
            raise InvalidSpec("points_per_frame must be >= 100")
        if self.num_frames < 1:
            raise InvalidSpec("num_frames must be >= 1")
        if self.num_boxes < 0:
            raise InvalidSpec("num_boxes must be >= 0")
        if not 10.0 <= self.fov_deg <= 170.0:
            raise InvalidSpec("fov_deg must lie in [10, 170]")
        traj = self.trajectory
        if traj.kind == "loop" and traj.num_loops * traj.revisit >= self.num_frames:
            raise InvalidSpec("revisit blocks must leave room for base frames")

    def grid_shape(self) -> tuple[int, int]:
        h = max(2, round(math.sqrt(self.points_per_frame * 0.75)))
        return h, math.ceil(self.points_per_frame / h)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    gravity_poses: tuple[SimY3Pose, ...]   # gravity-frame-to-world, per frame
    camera_poses: tuple[Sim3Pose, ...]     # camera-frame-to-world, per frame
    roll: np.ndarray
    pitch: np.ndarray
    scene_points: np.ndarray
    loops: tuple[LoopDetection, ...]

    def reference_poses(self, mode: str) -> tuple:
        return self.gravity_poses if mode == "simy3" else self.camera_poses

    def chunk_reference_poses(self, ranges, mode: str) -> list[Pose]:
        """Ground-truth chunk poses relative to the first chunk's frame."""
        refs = self.reference_poses(mode)
        base_inv = inverse(refs[ranges[0][0]])
        return [compose(base_inv, refs[r[0]]) for r in ranges]


@dataclass(frozen=True, eq=False)
class SyntheticSequence:
    spec: SceneSpec
    world_grids: tuple[np.ndarray, ...]    # per-frame (H, W, 3) grids in world frame
    gt: GroundTruth

    @property
    def num_frames(self) -> int:
        return len(self.world_grids)

    def frame_pointmap(self, frame: int, frame_kind: str = "gravity") -> Pointmap:
        """Pointmap of one frame expressed in its own gravity/camera/world frame."""
        grid = self.world_grids[frame]
        if frame_kind == "world":
            pts, tag = grid, FrameTag.WORLD
        elif frame_kind == "gravity":
            pts = apply_pose(inverse(self.gt.gravity_poses[frame]), grid)
            tag = FrameTag.GRAVITY
        elif frame_kind == "camera":
            pts = apply_pose(inverse(self.gt.camera_poses[frame]), grid)
            tag = FrameTag.CAMERA
        else:
            raise ValueError(f"unknown frame kind {frame_kind!r}")
        return Pointmap(pts, np.ones(grid.shape[:2]), tag)

    def provider(self, mode: str) -> PointmapProvider:
        """Noise-free provider for :func:`gravalign.pipeline.reconstruct`."""
        refs = self.gt.reference_poses(mode)
        tag = FrameTag.GRAVITY if mode == "simy3" else FrameTag.CAMERA

        def provide(frame_ids):
            ref_inv = inverse(refs[frame_ids[0]])
            return [Pointmap(apply_pose(ref_inv, self.world_grids[f]),
                             np.ones(self.world_grids[f].shape[:2]), tag)
                    for f in frame_ids]

        return provide


def _scene_points(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    xe, ye, ze = spec.room
    total = max(20_000, 8 * spec.points_per_frame)
    n_floor = int(total * 0.35)
    n_walls = int(total * 0.35)
    n_boxes = total - n_floor - n_walls if spec.num_boxes > 0 else 0

    pts = [np.column_stack([
        rng.uniform(-xe / 2, xe / 2, n_floor),
        np.zeros(n_floor),
        rng.uniform(-ze / 2, ze / 2, n_floor),
    ])]
    per_wall = n_walls // 4
    for sign in (-1, 1):
        pts.append(np.column_stack([
            np.full(per_wall, sign * xe / 2),
            rng.uniform(0, ye, per_wall),
            rng.uniform(-ze / 2, ze / 2, per_wall),
        ]))
        pts.append(np.column_stack([
            rng.uniform(-xe / 2, xe / 2, per_wall),
            rng.uniform(0, ye, per_wall),
            np.full(per_wall, sign * ze / 2),
        ]))
    if spec.num_boxes > 0:
        per_box = max(1, n_boxes // spec.num_boxes)
        for _ in range(spec.num_boxes):
            size = rng.uniform(0.3, 0.9, size=3)
            center = np.array([
                rng.uniform(-0.4 * xe, 0.4 * xe),
                size[1] / 2,
                rng.uniform(-0.4 * ze, 0.4 * ze),
            ])
            local = rng.uniform(-0.5, 0.5, size=(per_box, 3))
            axis = rng.integers(0, 3, per_box)
            side = rng.integers(0, 2, per_box)
            local[np.arange(per_box), axis] = side - 0.5
            pts.append(center + local * size)
    return np.concatenate(pts)


def _trajectory(rng: np.random.Generator, spec: SceneSpec):
    xe, ye, ze = spec.room
    traj = spec.trajectory
    n = spec.num_frames
    base = n - traj.num_loops * traj.revisit if traj.kind == "loop" else n
    base = max(base, 1)
    h = traj.height_frac * ye

    if traj.kind == "orbit":
        r = traj.radius_frac * min(xe, ze)
        phi = 1.6 * np.pi * np.arange(base) / base
        pos = np.column_stack([r * np.sin(phi), np.full(base, h), r * np.cos(phi)])
        look = -pos + np.array([0.0, h, 0.0])           # toward the room center
    else:
        # Serpentine sweep. Unlike a circle, accumulated drift over a
        # serpentine does not alias into a single global tilt, so it
        # cannot be silently removed by trajectory alignment.
        rows = traj.rows
        per_row = max(base // rows, 1)
        pos_list, look_list = [], []
        zs = np.linspace(-0.3 * ze, 0.3 * ze, rows)
        for k in range(base):
            row = min(k // per_row, rows - 1)
            u = (k - row * per_row) / max(per_row - 1, 1)
            direction = 1 if row % 2 == 0 else -1
            x = direction * (u - 0.5) * 0.6 * xe
            pos_list.append([x, h, zs[row]])
            look_list.append([direction, 0.0, 0.35])    # mostly along the row
        pos = np.array(pos_list)
        look = np.array(look_list)

    yaw = np.arctan2(look[:, 0], look[:, 2])
    t = np.arange(base) / max(base, 1)
    roll = 0.12 * np.sin(2 * np.pi * 2 * t + 0.9) + rng.uniform(-0.02, 0.02, base)
    pitch = 0.16 * np.sin(2 * np.pi * 3 * t + 0.4) + rng.uniform(-0.02, 0.02, base)

    loops: tuple[LoopDetection, ...] = ()
    if traj.kind == "loop":
        # Revisit blocks duplicate the first `revisit` frames at several
        # points of the sequence, each emitting one loop detection.
        rep, blocks = traj.revisit, traj.num_loops
        ends = [(b + 1) * n // blocks for b in range(blocks)]
        block_starts = [e - rep for e in ends]
        sel, detections = [], []
        next_base = 0
        k = 0
        while k < n:
            if k in block_starts:
                detections.append(LoopDetection(tuple(range(k, k + rep)), tuple(range(rep))))
                sel.extend(range(rep))
                k += rep
            else:
                sel.append(min(next_base, base - 1))
                next_base += 1
                k += 1
        sel = np.array(sel)
        pos, yaw, roll, pitch = pos[sel], yaw[sel], roll[sel], pitch[sel]
        loops = tuple(detections)
    return pos, yaw, roll, pitch, loops


def generate(spec: SceneSpec) -> SyntheticSequence:
    """Build scene, trajectory and per-frame pointmap grids for a spec."""
    rng = np.random.default_rng(spec.seed)
    scene = _scene_points(rng, spec)
    pos, yaw, roll, pitch, loops = _trajectory(rng, spec)

    gravity_poses, camera_poses = [], []
    for k in range(spec.num_frames):
        g = SimY3Pose(1.0, yaw[k], pos[k])
        tilt = Sim3Pose(1.0, FrameRotation(roll[k], pitch[k]).matrix(), np.zeros(3))
        gravity_poses.append(g)
        camera_poses.append(compose(g.to_sim3(), tilt))

    h, w = spec.grid_shape()
    budget = h * w
    tan_h = math.tan(math.radians(spec.fov_deg) / 2)
    tan_v = math.tan(math.radians(spec.fov_deg) * h / w / 2)
    grids = []
    for k in range(spec.num_frames):
        cam = apply_pose(inverse(camera_poses[k]), scene)
        z = cam[:, 2]
        visible = (z > 0.15) & (np.abs(cam[:, 0]) < z * tan_h) & (np.abs(cam[:, 1]) < z * tan_v)
        idx = np.flatnonzero(visible)
        if idx.size > budget:
            idx = idx[:: math.ceil(idx.size / budget)][:budget]
        grid = np.full((budget, 3), np.nan)
        grid[: idx.size] = scene[idx]
        grids.append(grid.reshape(h, w, 3))

    gt = GroundTruth(tuple(gravity_poses), tuple(camera_poses), roll[: spec.num_frames],
                     pitch[: spec.num_frames], scene, loops)
    return SyntheticSequence(spec, tuple(grids), gt)


@dataclass(frozen=True)
class CorruptionSpec:
    gaussian_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_confidence: float = 1e-3
    drift_rot_sigma: float = 0.0
    drift_trans_sigma: float = 0.0
    drift_scale_sigma: float = 0.0
    drift_group: str = "sim3"
    # False: one drift shared by all maps in a corrupt() call (per-chunk
    # drift). True: an independent drift per map, modelling per-frame
    # prediction wobble inside a chunk.
    drift_per_frame: bool = False
    # Per-call linear distortion of the shared frame, points -> (I + G) @
    # points with G ~ N(0, warp_sigma) entrywise. Models the smooth
    # geometric inconsistency between chunk predictions; unlike a pose
    # drift it is not a group element, so it does not cancel when
    # relative poses are chained.
    warp_sigma: float = 0.0

    def __post_init__(self):
        if min(self.gaussian_sigma, self.outlier_fraction, self.drift_rot_sigma,
               self.drift_trans_sigma, self.drift_scale_sigma, self.warp_sigma) < 0:
            raise InvalidSpec("noise parameters must be non-negative")
        if not 0 <= self.outlier_fraction <= 1:
            raise InvalidSpec("outlier_fraction must lie in [0, 1]")
        if self.outlier_confidence <= 0:
            raise InvalidSpec("outlier_confidence must be positive")
        if self.drift_group not in ("sim3", "simy3"):
            raise InvalidSpec("drift_group must be 'sim3' or 'simy3'")

    @property
    def has_drift(self) -> bool:
        return max(self.drift_rot_sigma, self.drift_trans_sigma, self.drift_scale_sigma) > 0


def _sample_drift(rng: np.random.Generator, noise: CorruptionSpec) -> Pose:
    nu = rng.normal(0.0, 1.0, 3) * noise.drift_trans_sigma
    sigma = rng.normal(0.0, 1.0) * noise.drift_scale_sigma
    if noise.drift_group == "simy3":
        theta = rng.normal(0.0, 1.0) * noise.drift_rot_sigma
        return exp_simy3(TangentSimY3(nu, theta, sigma))
    omega = rng.normal(0.0, 1.0, 3) * noise.drift_rot_sigma
    return exp_sim3(TangentSim3(nu, omega, sigma))


def corrupt(pointmaps, noise: CorruptionSpec,
            seed: int | np.random.Generator) -> list[Pointmap]:
    """Noisy copies of pointmaps; confidence reflects the injected error.

    Gaussian noise displaces valid pixels; a random subset of pixels is
    replaced by outliers drawn uniformly in the bounding box of the map's
    own points, with confidence pinned to the outlier floor. Per-pixel
    confidence is ``1 / (1 + displacement)``. If any drift sigma is set,
    one pose drawn in the requested group's tangent space is applied to
    every map in the list, so calling this per chunk yields per-chunk
    pose drift.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    warp = None
    if noise.warp_sigma > 0:
        warp = np.eye(3) + rng.normal(0.0, noise.warp_sigma, (3, 3))
    drift = None
    if noise.has_drift and not noise.drift_per_frame:
        drift = _sample_drift(rng, noise)
    out = []
    for pm in pointmaps:
        if noise.has_drift and noise.drift_per_frame:
            drift = _sample_drift(rng, noise)
        pts = np.array(pm.points)
        shape = pts.shape[:2]
        flat = pts.reshape(-1, 3)
        if warp is not None:
            flat[:] = flat @ warp.T
        valid = np.flatnonzero(np.all(np.isfinite(flat), axis=1))
        conf = np.ones(flat.shape[0])
        if valid.size:
            displacement = np.zeros(valid.size)
            if noise.gaussian_sigma > 0:
                delta = rng.normal(0.0, noise.gaussian_sigma, (valid.size, 3))
                flat[valid] += delta
                displacement = np.linalg.norm(delta, axis=1)
            conf[valid] = 1.0 / (1.0 + displacement)
            if noise.outlier_fraction > 0:
                hit = valid[rng.random(valid.size) < noise.outlier_fraction]
                if hit.size:
                    lo = flat[valid].min(axis=0)
                    hi = flat[valid].max(axis=0)
                    flat[hit] = rng.uniform(lo, hi, (hit.size, 3))
                    conf[hit] = noise.outlier_confidence
        if drift is not None:
            flat[:] = apply_pose(drift, flat)
        out.append(Pointmap(pts, conf.reshape(shape), pm.frame_tag))
    return out


def corrupting_provider(base: PointmapProvider, noise: CorruptionSpec,
                        seed: int) -> PointmapProvider:
    """Wrap a provider so every chunk gets its own deterministic corruption.

    The per-chunk generator is derived from (seed, first frame id), so a
    chunk is corrupted identically every time it is requested while
    different chunks receive independent noise.
    """

    def provide(frame_ids):
        rng = np.random.default_rng(np.random.SeedSequence([seed, int(frame_ids[0])]))
        return corrupt(base(frame_ids), noise, rng)

    return provide
