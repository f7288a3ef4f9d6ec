"""Gravity-aligned similarity-transform toolkit.

Pose types and frame conversions live in :mod:`gravalign.geometry`,
exp/log maps in :mod:`gravalign.lie`, closed-form alignment in
:mod:`gravalign.procrustes`, robust chunk alignment in
:mod:`gravalign.chunk_align`, camera-to-gravity RANSAC in
:mod:`gravalign.gravity`, pose-graph optimization in
:mod:`gravalign.posegraph`, the reconstruction pipeline in
:mod:`gravalign.pipeline`, evaluation in :mod:`gravalign.metrics`,
synthetic data in :mod:`gravalign.synth`, and file formats plus the CLI
in :mod:`gravalign.io` / :mod:`gravalign.cli`.
"""

from . import errors
from .chunk_align import AlignResult, Chunk, IrlsConfig, OverlapSet, align_chunks
from .geometry import (
    FrameRotation,
    FrameTag,
    Pointmap,
    Sim3Pose,
    SimY3Pose,
    apply_pose,
    camera_to_gravity_frame,
    compose,
    gravity_to_camera_frame,
    inverse,
)
from .gravity import (
    GravityEstimate,
    RansacConfig,
    estimate_gravity_rotation,
    joint_confidence,
    normalize_pointmap_scale,
)
from .lie import (
    TangentSim3,
    TangentSimY3,
    exp_sim3,
    exp_simy3,
    log_sim3,
    log_simy3,
)
from .metrics import (
    PoseErrorStats,
    RotationErrorStats,
    StructureStats,
    ape,
    geodesic_rotation_error,
    rotation_stats,
    structure_metrics,
)
from .pipeline import (
    LoopDetection,
    PipelineConfig,
    Reconstruction,
    make_chunks,
    make_loop_chunks,
    reconstruct,
)
from .posegraph import (
    ChunkGraph,
    LmConfig,
    PoseEdge,
    chain_initialize,
    edge_residual,
    optimize,
)
from .procrustes import Correspondences, ga_procrustes, procrustes
from .synth import CorruptionSpec, SceneSpec, TrajectorySpec, corrupt, corrupting_provider, generate

__version__ = "0.1.0"
