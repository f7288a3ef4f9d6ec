"""End-to-end incremental reconstruction from overlapping chunks.

A sequence of frames is split into sliding-window chunks that overlap by
a fixed number of frames. A provider callback supplies, for any list of
frame ids, the pointmaps of those frames expressed in the frame of the
first id (gravity frame in "simy3" mode, camera frame in "sim3" mode).
Adjacent chunks are aligned through their shared frames, loop closures
through dedicated short loop chunks, and the resulting relative poses
feed a pose graph whose optimized absolute poses place every chunk's
points in the frame of the first chunk.

Chunk alignments are independent; setting the GRAVALIGN_THREADS
environment variable caps the thread pool used for them (0 or unset
picks a small automatic value, 1 forces serial execution). Results do
not depend on the schedule.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chunk_align import AlignResult, Chunk, IrlsConfig, OverlapSet, align_chunks
from .errors import InsufficientLoopOverlap, InvalidConfig
from .geometry import FrameTag, Pointmap, Pose, apply_pose, compose, inverse
from .posegraph import ChunkGraph, LmConfig, OptimizeResult, PoseEdge, chain_initialize, optimize

# provider(frame_ids) -> pointmaps of those frames in the first id's frame
PointmapProvider = Callable[[Sequence[int]], Sequence[Pointmap]]


@dataclass(frozen=True)
class PipelineConfig:
    chunk_size: int = 25
    overlap: int = 7
    loop_chunk_size: int = 3
    mode: str = "simy3"
    irls: IrlsConfig = field(default_factory=IrlsConfig)
    lm: LmConfig = field(default_factory=LmConfig)
    stride: int = 1

    def __post_init__(self):
        if self.mode not in ("sim3", "simy3"):
            raise InvalidConfig(f"mode must be 'sim3' or 'simy3', got {self.mode!r}")
        if not 1 <= self.overlap < self.chunk_size:
            raise InvalidConfig(
                f"need 1 <= overlap < chunk_size, got overlap={self.overlap}, "
                f"chunk_size={self.chunk_size}")
        if self.loop_chunk_size < 1:
            raise InvalidConfig("loop_chunk_size must be >= 1")
        if self.stride < 1:
            raise InvalidConfig("stride must be >= 1")


@dataclass(frozen=True)
class LoopDetection:
    """Matched frame pairs believed to view the same place.

    ``frame_a[k]`` corresponds to ``frame_b[k]``; in the synthetic data the
    matched frames share a viewpoint, so their pointmap grids correspond
    pixel by pixel.
    """

    frame_a: tuple[int, ...]
    frame_b: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(f) for f in np.atleast_1d(self.frame_a))
        b = tuple(int(f) for f in np.atleast_1d(self.frame_b))
        object.__setattr__(self, "frame_a", a)
        object.__setattr__(self, "frame_b", b)
        if len(a) != len(b) or not a:
            raise InvalidConfig("frame_a and frame_b must be non-empty and equally long")


@dataclass(eq=False)
class Reconstruction:
    mode: str
    chunk_ranges: list[range]
    poses: list                     # absolute chunk poses, chunk 0 anchored
    fused_points: np.ndarray        # (M, 3) in the first chunk's frame
    fused_frames: np.ndarray        # (M,) source frame id per fused point
    diagnostics: list[dict]
    graph: ChunkGraph | None
    optimize_result: OptimizeResult | None


def make_chunks(num_frames: int, cfg: PipelineConfig) -> list[range]:
    """Sliding-window frame ranges overlapping by exactly ``cfg.overlap``.

    The last chunk may be shorter than ``chunk_size`` but always covers at
    least ``overlap + 1`` frames when more than one chunk exists.
    """
    if num_frames < 1:
        raise InvalidConfig("num_frames must be >= 1")
    stride = cfg.chunk_size - cfg.overlap
    starts = [0]
    while starts[-1] + cfg.chunk_size < num_frames:
        starts.append(starts[-1] + stride)
    return [range(s, min(s + cfg.chunk_size, num_frames)) for s in starts]


def make_loop_chunks(d: LoopDetection, cfg: PipelineConfig,
                     num_frames: int) -> tuple[range, range]:
    """Frame ranges of 2 * loop_chunk_size frames around a loop detection.

    Each range is centered on the middle matched frame of its side,
    spanning ``[center - L, center + L - 1]``, shifted to stay inside the
    sequence while preserving the span when possible.
    """
    if min(d.frame_a + d.frame_b) < 0 or max(d.frame_a + d.frame_b) >= num_frames:
        raise InvalidConfig("loop detection references frames outside the sequence")
    span = 2 * cfg.loop_chunk_size

    def centered(center: int) -> range:
        start = center - cfg.loop_chunk_size
        end = start + span
        if start < 0:
            start, end = 0, min(span, num_frames)
        elif end > num_frames:
            end = num_frames
            start = max(0, end - span)
        return range(start, end)

    return centered(d.frame_a[len(d.frame_a) // 2]), centered(d.frame_b[len(d.frame_b) // 2])


def _max_workers() -> int:
    raw = os.environ.get("GRAVALIGN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfig(f"GRAVALIGN_THREADS must be an integer, got {raw!r}")
    if n <= 0:
        return min(8, os.cpu_count() or 1)
    return n


def _run_tasks(tasks: list):
    workers = _max_workers()
    if workers == 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: t(), tasks))


def _build_chunk(provider: PointmapProvider, chunk_id: int, frames: range) -> Chunk:
    maps = list(provider(list(frames)))
    if len(maps) != len(frames):
        raise InvalidConfig(
            f"provider returned {len(maps)} pointmaps for {len(frames)} frames")
    return Chunk(chunk_id, tuple(frames), tuple(maps))


def _matched_overlap(loop_a: Chunk, loop_b: Chunk, d: LoopDetection) -> OverlapSet:
    shared = set(loop_a.frames) & set(loop_b.frames)
    if shared:
        return OverlapSet.from_shared_frames(loop_a, loop_b)
    in_a = {f: i for i, f in enumerate(loop_a.frames)}
    in_b = {f: i for i, f in enumerate(loop_b.frames)}
    pairs = [(in_a[fa], in_b[fb]) for fa, fb in zip(d.frame_a, d.frame_b)
             if fa in in_a and fb in in_b]
    if not pairs:
        raise InsufficientLoopOverlap(
            "no matched frame pair falls inside both loop chunks")
    return OverlapSet(tuple(pairs))


def _anchor_chunk(chunks: list[Chunk], loop_range: range) -> int:
    shared = [len(set(c.frames) & set(loop_range)) for c in chunks]
    best = int(np.argmax(shared))
    if shared[best] == 0:
        raise InsufficientLoopOverlap(
            f"loop chunk {list(loop_range)} shares no frames with any chunk")
    return best


def reconstruct(provider: PointmapProvider, num_frames: int,
                loops: Sequence[LoopDetection] = (),
                cfg: PipelineConfig = PipelineConfig()) -> Reconstruction:
    """Chunk, align, optimize and fuse a frame sequence.

    Returns the optimized absolute chunk poses (first chunk anchored at
    the identity) and the union of all chunk pointmaps mapped through
    them, tagged with each point's source frame id.
    """
    ranges = make_chunks(num_frames, cfg)
    for d in loops:
        if any(abs(fa - fb) <= cfg.chunk_size for fa, fb in zip(d.frame_a, d.frame_b)):
            raise InvalidConfig(
                "loop detections must connect frames further apart than chunk_size")

    chunks = [_build_chunk(provider, k, r) for k, r in enumerate(ranges)]
    if cfg.mode == "simy3":
        for c in chunks:
            if c.frame_tag != FrameTag.GRAVITY:
                raise InvalidConfig(
                    f"simy3 mode requires gravity-frame chunks; chunk {c.id} is "
                    f"{c.frame_tag.name}-tagged")

    diagnostics: list[dict] = []
    if len(chunks) == 1:
        pts, frames = _fuse(chunks, [_identity(cfg.mode)])
        return Reconstruction(cfg.mode, ranges, [_identity(cfg.mode)], pts, frames,
                              diagnostics, None, None)

    def adjacency_task(k: int):
        def run() -> AlignResult:
            m = OverlapSet.from_shared_frames(chunks[k], chunks[k + 1])
            return align_chunks(chunks[k], chunks[k + 1], m, cfg.mode, cfg.irls, cfg.stride)
        return run

    adj_results = _run_tasks([adjacency_task(k) for k in range(len(chunks) - 1)])
    edges = []
    for k, res in enumerate(adj_results):
        edges.append(PoseEdge(k, k + 1, res.pose, "adjacency"))
        diagnostics.append({"kind": "adjacency", "i": k, "j": k + 1,
                            "residual": res.residual, "iterations": res.iterations,
                            "converged": res.converged, "num_points": len(res.weights)})

    def loop_task(idx: int, d: LoopDetection):
        def run():
            range_a, range_b = make_loop_chunks(d, cfg, num_frames)
            loop_a = _build_chunk(provider, 10_000 + 2 * idx, range_a)
            loop_b = _build_chunk(provider, 10_001 + 2 * idx, range_b)
            ka = _anchor_chunk(chunks, range_a)
            kb = _anchor_chunk(chunks, range_b)
            if abs(ka - kb) <= 1:
                return ("skipped", ka, kb, None)
            m_ab = _matched_overlap(loop_a, loop_b, d)
            r_mid = align_chunks(loop_a, loop_b, m_ab, cfg.mode, cfg.irls, cfg.stride)
            r_a = align_chunks(chunks[ka], loop_a,
                               OverlapSet.from_shared_frames(chunks[ka], loop_a),
                               cfg.mode, cfg.irls, cfg.stride)
            r_b = align_chunks(chunks[kb], loop_b,
                               OverlapSet.from_shared_frames(chunks[kb], loop_b),
                               cfg.mode, cfg.irls, cfg.stride)
            # chunk_kb frame -> chunk_ka frame
            ka_from_kb = compose(r_a.pose, compose(r_mid.pose, inverse(r_b.pose)))
            return ("ok", ka, kb, (ka_from_kb, r_mid))
        return run

    loop_results = _run_tasks([loop_task(i, d) for i, d in enumerate(loops)])
    for status, ka, kb, payload in loop_results:
        if status == "skipped":
            diagnostics.append({"kind": "loop-skipped", "i": ka, "j": kb,
                                "reason": "loop chunks anchor to the same or adjacent chunks"})
            continue
        ka_from_kb, r_mid = payload
        i, j = (ka, kb) if ka < kb else (kb, ka)
        measured = ka_from_kb if ka < kb else inverse(ka_from_kb)
        edges.append(PoseEdge(i, j, measured, "loop"))
        diagnostics.append({"kind": "loop", "i": i, "j": j,
                            "residual": r_mid.residual, "iterations": r_mid.iterations,
                            "converged": r_mid.converged, "num_points": len(r_mid.weights)})

    graph = ChunkGraph(len(chunks), cfg.mode, tuple(edges))
    initial = chain_initialize(graph)
    result = optimize(graph, initial, cfg.lm)
    pts, frames = _fuse(chunks, result.poses)
    return Reconstruction(cfg.mode, ranges, result.poses, pts, frames,
                          diagnostics, graph, result)


def _identity(mode: str) -> Pose:
    from .geometry import Sim3Pose, SimY3Pose

    return SimY3Pose.identity() if mode == "simy3" else Sim3Pose.identity()


def _fuse(chunks: list[Chunk], poses: list) -> tuple[np.ndarray, np.ndarray]:
    pts_out, frame_out = [], []
    for chunk, pose in zip(chunks, poses):
        for frame_id, pm in zip(chunk.frames, chunk.pointmaps):
            flat = pm.points.reshape(-1, 3)
            valid = np.all(np.isfinite(flat), axis=1)
            if not np.any(valid):
                continue
            pts_out.append(apply_pose(pose, flat[valid]))
            frame_out.append(np.full(int(valid.sum()), frame_id))
    if not pts_out:
        return np.zeros((0, 3)), np.zeros(0, dtype=int)
    return np.concatenate(pts_out), np.concatenate(frame_out)
