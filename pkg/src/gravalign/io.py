"""File formats: binary pointmap grids, PLY clouds, JSON poses and graphs.

Pointmap files ("PMP1") have a 16-byte header — magic, u32 height, u32
width, u8 channels (3 = points, 1 = confidence), u8 frame tag, 2 padding
bytes — followed by float32 little-endian data, row-major and
channel-interleaved. NaN entries mark invalid pixels. Points and
confidence live in separate files (channels 3 and 1).

A sequence manifest is JSON of the form::

    {"frames": [{"id": 0, "pointmap": "...", "confidence": "...",
                 "pose": {...}}, ...],
     "loops": [{"a": 10, "b": 90}, ...]}

Paths are resolved relative to the manifest. The optional per-frame
"pose" places that frame's pointmap in the sequence's ambient frame; when
present, the file provider re-expresses frames in each chunk's reference
frame (the pose of the chunk's first frame). Without poses, the frames
are assumed to be pre-registered in a common frame already.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionOverflow,
    InvalidConfig,
    PointmapFileError,
    TruncatedFile,
)
from .geometry import FrameTag, Pointmap, Pose, Sim3Pose, SimY3Pose, apply_pose, compose, inverse
from .pipeline import LoopDetection, PointmapProvider
from .posegraph import ChunkGraph, PoseEdge

MAGIC = b"PMP1"
HEADER_SIZE = 16
MAX_PAYLOAD_BYTES = 1 << 40


def pose_to_json(pose: Pose) -> dict:
    """JSON-ready dict: {"s", "R" (9 floats or {"yaw"}), "t", "group"}."""
    if isinstance(pose, SimY3Pose):
        return {"s": pose.s, "R": {"yaw": pose.yaw}, "t": pose.t.tolist(), "group": "simy3"}
    return {"s": pose.s, "R": pose.R.reshape(-1).tolist(), "t": pose.t.tolist(), "group": "sim3"}


def pose_from_json(obj: dict) -> Pose:
    group = obj.get("group")
    if group == "simy3":
        return SimY3Pose(obj["s"], obj["R"]["yaw"], np.array(obj["t"], dtype=float))
    if group == "sim3":
        R = np.array(obj["R"], dtype=float).reshape(3, 3)
        return Sim3Pose(obj["s"], R, np.array(obj["t"], dtype=float))
    raise InvalidConfig(f"unknown pose group {group!r}")


def graph_to_json(graph: ChunkGraph) -> dict:
    edges = [{"type": e.kind, "i": e.i, "j": e.j, "pose": pose_to_json(e.pose),
              **({"weight": e.weight} if e.weight != 1.0 else {})}
             for e in graph.edges]
    return {"mode": graph.mode, "K": graph.num_chunks, "edges": edges}


def graph_from_json(obj: dict) -> ChunkGraph:
    edges = tuple(PoseEdge(e["i"], e["j"], pose_from_json(e["pose"]), e["type"],
                           e.get("weight", 1.0))
                  for e in obj["edges"])
    return ChunkGraph(obj["K"], obj["mode"], edges)


def _write_grid(path, data: np.ndarray, channels: int, frame_tag: FrameTag) -> None:
    h, w = data.shape[:2]
    header = MAGIC + struct.pack("<IIBB2x", h, w, channels, int(frame_tag))
    assert len(header) == HEADER_SIZE
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def _read_grid(path) -> tuple[np.ndarray, int, FrameTag]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a pointmap file")
    if len(raw) < HEADER_SIZE:
        raise TruncatedFile(f"{path}: header is incomplete")
    h, w, channels, tag = struct.unpack("<IIBB2x", raw[len(MAGIC):HEADER_SIZE])
    if h < 1 or w < 1 or h * w * channels * 4 > MAX_PAYLOAD_BYTES:
        raise DimensionOverflow(f"{path}: implausible dimensions {h}x{w}x{channels}")
    if channels not in (1, 3):
        raise PointmapFileError(f"{path}: channels must be 1 or 3, got {channels}")
    try:
        frame_tag = FrameTag(tag)
    except ValueError:
        raise PointmapFileError(f"{path}: unknown frame tag {tag}")
    expected = h * w * channels * 4
    body = raw[HEADER_SIZE:]
    if len(body) < expected:
        raise TruncatedFile(f"{path}: expected {expected} payload bytes, found {len(body)}")
    if len(body) > expected:
        raise PointmapFileError(f"{path}: {len(body) - expected} trailing bytes")
    data = np.frombuffer(body, dtype="<f4").astype(float)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape), channels, frame_tag


def write_pointmap(pm: Pointmap, points_path, confidence_path=None) -> None:
    """Write the points grid and, when requested, the confidence grid."""
    _write_grid(points_path, pm.points, 3, pm.frame_tag)
    if confidence_path is not None:
        if pm.confidence is None:
            raise InvalidConfig("pointmap has no confidence grid to write")
        _write_grid(confidence_path, pm.confidence, 1, pm.frame_tag)


def read_pointmap(points_path, confidence_path=None) -> Pointmap:
    """Read a points file (and optional confidence file) back losslessly."""
    data, channels, tag = _read_grid(points_path)
    if channels != 3:
        raise PointmapFileError(f"{points_path}: expected a 3-channel points file")
    conf = None
    if confidence_path is not None:
        conf, cch, _ = _read_grid(confidence_path)
        if cch != 1:
            raise PointmapFileError(f"{confidence_path}: expected a 1-channel confidence file")
        if conf.shape != data.shape[:2]:
            raise PointmapFileError(
                f"confidence grid {conf.shape} does not match points {data.shape[:2]}")
    return Pointmap(data, conf, tag)


def write_ply(path, points: np.ndarray, colors: np.ndarray | None = None) -> None:
    """Binary little-endian PLY with float x y z (and optional uchar rgb)."""
    points = np.asarray(points, dtype="<f4")
    if points.ndim != 2 or points.shape[1] != 3:
        raise InvalidConfig("points must have shape (N, 3)")
    lines = ["ply", "format binary_little_endian 1.0",
             f"element vertex {points.shape[0]}",
             "property float x", "property float y", "property float z"]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8)
        if colors.shape != points.shape:
            raise InvalidConfig("colors must match points shape")
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        if colors is None:
            f.write(points.tobytes())
        else:
            rec = np.zeros(points.shape[0],
                           dtype=[("xyz", "<f4", 3), ("rgb", "u1", 3)])
            rec["xyz"] = points
            rec["rgb"] = colors
            f.write(rec.tobytes())


def read_ply(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read the binary little-endian PLY subset written by write_ply."""
    raw = Path(path).read_bytes()
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply\n") or end < 0:
        raise PointmapFileError(f"{path}: not a PLY file")
    header = raw[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise PointmapFileError(f"{path}: only binary little-endian PLY is supported")
    n = None
    props = []
    for line in header:
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        elif line.startswith("property") and n is not None:
            props.append(tuple(line.split()[1:]))
    if n is None:
        raise PointmapFileError(f"{path}: no vertex element")
    if [p[1] for p in props[:3]] != ["x", "y", "z"]:
        raise PointmapFileError(f"{path}: expected x y z as the leading properties")
    has_rgb = len(props) == 6 and [p[1] for p in props[3:]] == ["red", "green", "blue"]
    if len(props) != 3 and not has_rgb:
        raise PointmapFileError(f"{path}: unsupported property layout {props}")
    body = raw[end + len(b"end_header\n"):]
    if has_rgb:
        rec = np.frombuffer(body, dtype=[("xyz", "<f4", 3), ("rgb", "u1", 3)], count=n)
        return rec["xyz"].astype(float), rec["rgb"].copy()
    pts = np.frombuffer(body, dtype="<f4", count=3 * n).reshape(n, 3)
    return pts.astype(float), None


def eval_report_json(pose_stats=None, structure_stats=None, rotation_stats=None,
                     config: dict | None = None) -> dict:
    """EvalReport dict: the fields of whichever stats are present + config."""
    report: dict = {"config": dict(config or {})}
    if rotation_stats is not None:
        report["rotation"] = {
            "mean_deg": rotation_stats.mean_deg,
            "median_deg": rotation_stats.median_deg,
            "acc_at_1": rotation_stats.acc_at_1,
            "acc_at_2": rotation_stats.acc_at_2,
            "acc_at_5": rotation_stats.acc_at_5,
        }
    if pose_stats is not None:
        report["pose"] = {
            "ape_rot_deg": pose_stats.ape_rot_deg,
            "ape_trans": pose_stats.ape_trans,
            "delta_y": pose_stats.delta_y,
        }
    if structure_stats is not None:
        report["structure"] = {
            "acc": structure_stats.acc,
            "comp": structure_stats.comp,
            "nc": structure_stats.nc,
            "acc_median": structure_stats.acc_median,
            "comp_median": structure_stats.comp_median,
        }
    return report


def write_manifest(path, frames: list[dict], loops: list[dict]) -> None:
    Path(path).write_text(json.dumps({"frames": frames, "loops": loops}, indent=1))


def read_manifest(path) -> dict:
    path = Path(path)
    obj = json.loads(path.read_text())
    if "frames" not in obj or not obj["frames"]:
        raise InvalidConfig(f"{path}: manifest has no frames")
    base = path.parent
    frames = []
    for entry in obj["frames"]:
        frames.append({
            "id": int(entry["id"]),
            "pointmap": base / entry["pointmap"],
            "confidence": base / entry["confidence"] if entry.get("confidence") else None,
            "pose": pose_from_json(entry["pose"]) if entry.get("pose") else None,
        })
    frames.sort(key=lambda e: e["id"])
    ids = [e["id"] for e in frames]
    if ids != list(range(len(ids))):
        raise InvalidConfig(f"{path}: frame ids must be contiguous starting at 0")
    pairs = sorted((int(l["a"]), int(l["b"])) for l in obj.get("loops", []))
    loops = []
    for a, b in pairs:
        if loops and a == loops[-1][0][-1] + 1 and b == loops[-1][1][-1] + 1:
            loops[-1][0].append(a)
            loops[-1][1].append(b)
        else:
            loops.append(([a], [b]))
    detections = [LoopDetection(tuple(a), tuple(b)) for a, b in loops]
    return {"frames": frames, "loops": detections}


def file_provider(manifest: dict) -> tuple[PointmapProvider, int]:
    """Chunk provider over a parsed manifest; returns (provider, num_frames).

    With per-frame poses in the manifest, frame f's pointmap is mapped
    into the chunk reference frame via ``pose_ref^-1 * pose_f``. Without
    poses the files are used as stored.
    """
    frames = manifest["frames"]
    cache: dict[int, Pointmap] = {}

    def load(fid: int) -> Pointmap:
        if fid not in cache:
            entry = frames[fid]
            cache[fid] = read_pointmap(entry["pointmap"], entry["confidence"])
        return cache[fid]

    def provide(frame_ids):
        ref_pose = frames[frame_ids[0]]["pose"]
        out = []
        for fid in frame_ids:
            pm = load(fid)
            pose = frames[fid]["pose"]
            if ref_pose is not None and pose is not None:
                rel = compose(inverse(ref_pose), pose)
                pm = Pointmap(apply_pose(rel, pm.points), pm.confidence, pm.frame_tag)
            out.append(pm)
        return out

    return provide, len(frames)
