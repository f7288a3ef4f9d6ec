"""Command-line interface.

Subcommands: synth, align, gravity, reconstruct, eval-pose,
eval-structure. Exit code 0 on success, 1 on usage errors, 2 on
computation errors. All randomness is controlled by --seed, and repeated
runs with the same inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .chunk_align import Chunk, IrlsConfig, OverlapSet, align_chunks
from .errors import GravalignError, InvalidConfig
from .geometry import Sim3Pose, SimY3Pose
from .gravity import RansacConfig, estimate_gravity_rotation
from .lie import TangentSim3, TangentSimY3, exp_sim3, exp_simy3
from .metrics import ape, structure_metrics
from .pipeline import PipelineConfig, reconstruct
from .posegraph import LmConfig
from .synth import CorruptionSpec, SceneSpec, TrajectorySpec, corrupt, generate


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _dump_json(obj, path=None) -> None:
    text = json.dumps(obj, indent=1)
    if path is not None:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _cmd_synth(args) -> int:
    out = Path(args.out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    traj = TrajectorySpec(kind=args.trajectory)
    if args.trajectory == "loop":
        # Space revisit blocks so the loop gap clears common chunk sizes.
        traj = TrajectorySpec(kind="loop", num_loops=max(1, args.frames // 80))
    spec = SceneSpec(seed=args.seed, num_frames=args.frames,
                     points_per_frame=args.points_per_frame, trajectory=traj)
    seq = generate(spec)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
    noise = CorruptionSpec(gaussian_sigma=args.noise_sigma,
                           outlier_fraction=args.outlier_frac)
    ambient = seq.gt.gravity_poses if args.frame == "gravity" else seq.gt.camera_poses

    frames = []
    for f in range(seq.num_frames):
        pm = seq.frame_pointmap(f, args.frame)
        if args.noise_sigma > 0 or args.outlier_frac > 0:
            pm = corrupt([pm], noise, rng)[0]
        ppath, cpath = f"frames/{f:04d}_points.pmp", f"frames/{f:04d}_conf.pmp"
        gio.write_pointmap(pm, out / ppath, out / cpath)
        pose = ambient[f]
        if args.pose_noise_rot > 0 or args.pose_noise_trans > 0:
            nu = rng.normal(0.0, args.pose_noise_trans, 3)
            if args.frame == "gravity":
                wobble = exp_simy3(TangentSimY3(nu, rng.normal(0.0, args.pose_noise_rot), 0.0))
                pose = SimY3Pose(pose.s, pose.yaw + wobble.yaw, pose.t + wobble.t)
            else:
                omega = rng.normal(0.0, args.pose_noise_rot, 3)
                wob = exp_sim3(TangentSim3(nu, omega, 0.0))
                pose = Sim3Pose(pose.s, pose.R @ wob.R, pose.t + wob.t)
        frames.append({"id": f, "pointmap": ppath, "confidence": cpath,
                       "pose": gio.pose_to_json(pose)})

    loops = [{"a": int(a), "b": int(b)}
             for d in seq.gt.loops for a, b in zip(d.frame_a, d.frame_b)]
    gio.write_manifest(out / "manifest.json", frames, loops)
    _dump_json({
        "seed": args.seed,
        "frame": args.frame,
        "gravity_poses": [gio.pose_to_json(p) for p in seq.gt.gravity_poses],
        "camera_poses": [gio.pose_to_json(p) for p in seq.gt.camera_poses],
        "loops": loops,
    }, out / "gt.json")
    # The ground-truth cloud is written in frame 0's ambient frame, the
    # gauge every reconstruction of this sequence is anchored to.
    from .geometry import apply_pose, inverse

    gio.write_ply(out / "gt_cloud.ply", apply_pose(inverse(ambient[0]), seq.gt.scene_points))
    print(f"wrote {seq.num_frames} frames, {len(loops)} loop pairs to {out}")
    return 0


def _load_chunk(manifest_path, chunk_id: int) -> Chunk:
    manifest = gio.read_manifest(manifest_path)
    provider, n = gio.file_provider(manifest)
    ids = [e["id"] for e in manifest["frames"]]
    return Chunk(chunk_id, tuple(ids), tuple(provider(ids)))


def _cmd_align(args) -> int:
    a = _load_chunk(args.manifest_a, 0)
    b = _load_chunk(args.manifest_b, 1)
    m = OverlapSet.from_shared_frames(a, b)
    res = align_chunks(a, b, m, args.mode, IrlsConfig(max_iters=args.irls_iters),
                       stride=args.stride)
    out = {"pose": gio.pose_to_json(res.pose), "residual": res.residual,
           "iterations": res.iterations, "converged": res.converged,
           "num_points": int(len(res.weights))}
    _dump_json(out, args.out)
    return 0


def _cmd_gravity(args) -> int:
    pm_g = gio.read_pointmap(args.gravity_points, args.gravity_conf)
    pm_c = gio.read_pointmap(args.camera_points, args.camera_conf)
    cfg = RansacConfig(iterations=args.iterations, sample_size=args.sample_size,
                       inlier_threshold=args.inlier_threshold,
                       top_confidence_fraction=args.top_fraction, seed=args.seed)
    est = estimate_gravity_rotation(pm_g, pm_c, cfg)
    _dump_json({"rotation": est.rotation.reshape(-1).tolist(),
                "inlier_count": est.inlier_count,
                "inlier_ratio": est.inlier_ratio}, args.out)
    return 0


def _cmd_reconstruct(args) -> int:
    manifest = gio.read_manifest(args.manifest)
    provider, num_frames = gio.file_provider(manifest)
    cfg = PipelineConfig(chunk_size=args.chunk_size, overlap=args.overlap,
                         loop_chunk_size=args.loop_chunk_size, mode=args.mode,
                         irls=IrlsConfig(max_iters=args.irls_iters),
                         lm=LmConfig(max_iters=args.lm_iters), stride=args.stride)
    rec = reconstruct(provider, num_frames, manifest["loops"], cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    first = manifest["frames"][0]
    frame_kind = gio.read_pointmap(first["pointmap"]).frame_tag.name.lower()
    _dump_json({
        "mode": rec.mode,
        "frame": frame_kind,
        "chunk_ranges": [[r.start, r.stop] for r in rec.chunk_ranges],
        "poses": [gio.pose_to_json(p) for p in rec.poses],
        "config": {"chunk_size": cfg.chunk_size, "overlap": cfg.overlap,
                   "loop_chunk_size": cfg.loop_chunk_size, "stride": cfg.stride},
    }, out / "poses.json")
    gio.write_ply(out / "fused.ply", rec.fused_points)
    _dump_json(rec.diagnostics, out / "diagnostics.json")
    print(f"reconstructed {len(rec.chunk_ranges)} chunks, "
          f"{rec.fused_points.shape[0]} fused points -> {out}")
    return 0


def _cmd_eval_pose(args) -> int:
    pred = json.loads(Path(args.poses).read_text())
    gt = json.loads(Path(args.gt).read_text())
    mode = pred["mode"]
    family = gt["gravity_poses"] if pred["frame"] == "gravity" else gt["camera_poses"]
    refs = [gio.pose_from_json(p) for p in family]
    starts = [r[0] for r in pred["chunk_ranges"]]
    from .geometry import compose, inverse
    base_inv = inverse(refs[starts[0]])
    gt_poses = [compose(base_inv, refs[s]) for s in starts]
    if mode == "sim3":
        gt_poses = [p.to_sim3() if isinstance(p, SimY3Pose) else p for p in gt_poses]
    pred_poses = [gio.pose_from_json(p) for p in pred["poses"]]
    stats = ape(pred_poses, gt_poses, mode=mode, align=not args.no_align)
    report = gio.eval_report_json(pose_stats=stats, config={
        "mode": mode, "aligned": not args.no_align, "num_poses": len(pred_poses)})
    _dump_json(report, args.out)
    if args.out:
        _dump_json(report)
    return 0


def _cmd_eval_structure(args) -> int:
    pred, _ = gio.read_ply(args.pred)
    gt, _ = gio.read_ply(args.gt)

    def thin(c):
        if c.shape[0] > args.max_points:
            c = c[:: int(np.ceil(c.shape[0] / args.max_points))]
        return c

    pred, gt = thin(pred), thin(gt)
    stats = structure_metrics(pred, gt, align=args.align)
    report = gio.eval_report_json(structure_stats=stats, config={
        "aligned": args.align, "pred_points": int(pred.shape[0]),
        "gt_points": int(gt.shape[0])})
    _dump_json(report, args.out)
    if args.out:
        _dump_json(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gravalign",
                description="Gravity-aligned chunk alignment and reconstruction toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate a synthetic sequence on disk")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("-o", "--out", required=True)
    ps.add_argument("--frames", type=int, default=60)
    ps.add_argument("--trajectory", choices=["orbit", "lawnmower", "loop"], default="loop")
    ps.add_argument("--points-per-frame", type=int, default=1536)
    ps.add_argument("--frame", choices=["gravity", "camera"], default="gravity")
    ps.add_argument("--noise-sigma", type=float, default=0.0)
    ps.add_argument("--outlier-frac", type=float, default=0.0)
    ps.add_argument("--pose-noise-rot", type=float, default=0.0)
    ps.add_argument("--pose-noise-trans", type=float, default=0.0)
    ps.set_defaults(func=_cmd_synth)

    pa = sub.add_parser("align", help="align two chunk manifests")
    pa.add_argument("manifest_a")
    pa.add_argument("manifest_b")
    pa.add_argument("--mode", choices=["sim3", "simy3"], default="simy3")
    pa.add_argument("--stride", type=int, default=1)
    pa.add_argument("--irls-iters", type=int, default=10)
    pa.add_argument("-o", "--out", default=None)
    pa.set_defaults(func=_cmd_align)

    pg = sub.add_parser("gravity", help="camera-to-gravity rotation via RANSAC")
    pg.add_argument("gravity_points")
    pg.add_argument("gravity_conf")
    pg.add_argument("camera_points")
    pg.add_argument("camera_conf")
    pg.add_argument("--iterations", type=int, default=5000)
    pg.add_argument("--sample-size", type=int, default=50000)
    pg.add_argument("--inlier-threshold", type=float, default=0.05)
    pg.add_argument("--top-fraction", type=float, default=0.5)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("-o", "--out", default=None)
    pg.set_defaults(func=_cmd_gravity)

    pr = sub.add_parser("reconstruct", help="chunked reconstruction of a sequence")
    pr.add_argument("manifest")
    pr.add_argument("--mode", choices=["sim3", "simy3"], default="simy3")
    pr.add_argument("--chunk-size", type=int, default=25)
    pr.add_argument("--overlap", type=int, default=7)
    pr.add_argument("--loop-chunk-size", type=int, default=3)
    pr.add_argument("--stride", type=int, default=1)
    pr.add_argument("--irls-iters", type=int, default=10)
    pr.add_argument("--lm-iters", type=int, default=100)
    pr.add_argument("-o", "--out", required=True)
    pr.set_defaults(func=_cmd_reconstruct)

    pe = sub.add_parser("eval-pose", help="absolute pose error of chunk poses")
    pe.add_argument("poses")
    pe.add_argument("gt")
    pe.add_argument("--no-align", action="store_true")
    pe.add_argument("-o", "--out", default=None)
    pe.set_defaults(func=_cmd_eval_pose)

    pv = sub.add_parser("eval-structure", help="ACC/COMP/NC between two PLY clouds")
    pv.add_argument("pred")
    pv.add_argument("gt")
    pv.add_argument("--align", action="store_true")
    pv.add_argument("--max-points", type=int, default=200000)
    pv.add_argument("-o", "--out", default=None)
    pv.set_defaults(func=_cmd_eval_structure)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GravalignError as err:
        print(f"gravalign: error: {err}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
