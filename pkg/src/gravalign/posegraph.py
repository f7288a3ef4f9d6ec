"""Global pose-graph optimization over Sim(3) or Sim_y(3).

The graph holds one absolute pose per chunk plus relative-pose
measurements on adjacency edges (consecutive chunks) and loop edges.
Each edge contributes the residual ``log(measured^-1 * pose_i^-1 *
pose_j)`` in the group's tangent space; the summed squared norm is
minimized by Levenberg-Marquardt with the first pose held fixed as the
gauge anchor. Updates are applied by right multiplication,
``pose <- pose * exp(delta)``.

Jacobians are central finite differences on the tangent parameters by
default; the analytic option evaluates the exact differential of the
group logarithm through Frechet derivatives of the matrix exponential
and the closed-form adjoint, and matches the numeric Jacobian to
round-off of the differencing scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidConfig, MissingAdjacency, SingularNormalEquations
from .geometry import Pose, Sim3Pose, SimY3Pose, compose, inverse
from .lie import (
    TangentSim3,
    TangentSimY3,
    exp_sim3,
    exp_simy3,
    log_sim3,
    log_simy3,
    sim3_hat,
    sim3_vee,
)

EDGE_KINDS = ("adjacency", "loop")
# Embedding of the 5-dim tangent coordinates into the 7-dim ones.
_SIMY3_SUBINDEX = np.array([0, 1, 2, 4, 6])


@dataclass(frozen=True, eq=False)
class PoseEdge:
    """Relative-pose measurement: ``pose ~= pose_i^-1 * pose_j``."""

    i: int
    j: int
    pose: Pose
    kind: str
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in EDGE_KINDS:
            raise InvalidConfig(f"edge kind must be one of {EDGE_KINDS}, got {self.kind!r}")
        if self.weight <= 0:
            raise InvalidConfig("edge weight must be positive")


@dataclass(frozen=True, eq=False)
class ChunkGraph:
    """Pose variables (chunks) plus adjacency and loop measurements."""

    num_chunks: int
    mode: str
    edges: tuple[PoseEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if self.num_chunks < 2:
            raise InvalidConfig("a chunk graph needs at least 2 chunks")
        if self.mode not in ("sim3", "simy3"):
            raise InvalidConfig(f"mode must be 'sim3' or 'simy3', got {self.mode!r}")
        want = SimY3Pose if self.mode == "simy3" else Sim3Pose
        for e in self.edges:
            if not 0 <= e.i < self.num_chunks and 0 <= e.j < self.num_chunks:
                raise InvalidConfig(f"edge ({e.i}, {e.j}) references a missing chunk")
            if not isinstance(e.pose, want):
                raise InvalidConfig(
                    f"edge ({e.i}, {e.j}) measurement is not in the {self.mode} group")
            if e.kind == "adjacency" and e.j != e.i + 1:
                raise InvalidConfig(f"adjacency edge ({e.i}, {e.j}) is not consecutive")
            if e.kind == "loop" and (e.i >= e.j or e.j == e.i + 1):
                raise InvalidConfig(f"loop edge ({e.i}, {e.j}) must have i < j, non-consecutive")

    @property
    def adjacency_edges(self) -> tuple[PoseEdge, ...]:
        return tuple(e for e in self.edges if e.kind == "adjacency")

    @property
    def loop_edges(self) -> tuple[PoseEdge, ...]:
        return tuple(e for e in self.edges if e.kind == "loop")


@dataclass(frozen=True)
class LmConfig:
    max_iters: int = 100
    init_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 0.1
    gradient_tol: float = 1e-10
    step_tol: float = 1e-10
    jacobian: str = "numeric_central"
    finite_diff_step: float = 1e-6

    def __post_init__(self):
        if min(self.max_iters, self.init_damping, self.damping_up, self.damping_down,
               self.gradient_tol, self.step_tol, self.finite_diff_step) <= 0:
            raise InvalidConfig("all LmConfig values must be positive")
        if self.jacobian not in ("numeric_central", "analytic"):
            raise InvalidConfig(f"unknown jacobian mode {self.jacobian!r}")


@dataclass(eq=False)
class OptimizeResult:
    poses: list
    cost_trace: list[float]
    iterations: int
    converged: bool
    reason: str


def _mode_ops(mode: str):
    if mode == "simy3":
        return 5, (lambda v: exp_simy3(TangentSimY3.from_vector(v))), \
            (lambda p: log_simy3(p).as_vector())
    return 7, (lambda v: exp_sim3(TangentSim3.from_vector(v))), \
        (lambda p: log_sim3(p).as_vector())


def edge_residual(measured: Pose, pose_i: Pose, pose_j: Pose) -> np.ndarray:
    """Tangent-space discrepancy ``log(measured^-1 * pose_i^-1 * pose_j)``.

    Zero exactly when ``pose_i^-1 * pose_j`` equals the measurement.
    Returns a 7-vector for Sim3 poses and a 5-vector for SimY3 poses.
    """
    delta = compose(inverse(measured), compose(inverse(pose_i), pose_j))
    if isinstance(delta, SimY3Pose):
        return log_simy3(delta).as_vector()
    return log_sim3(delta).as_vector()


def chain_initialize(graph: ChunkGraph) -> list:
    """Identity-anchored odometry: ``pose_{k+1} = pose_k * measured_{k,k+1}``."""
    adj = {e.i: e.pose for e in graph.adjacency_edges}
    missing = [k for k in range(graph.num_chunks - 1) if k not in adj]
    if missing:
        raise MissingAdjacency(f"no adjacency measurement for pairs {missing}")
    poses = [SimY3Pose.identity() if graph.mode == "simy3" else Sim3Pose.identity()]
    for k in range(graph.num_chunks - 1):
        poses.append(compose(poses[-1], adj[k]))
    return poses


def _check_connected(graph: ChunkGraph) -> None:
    neighbors: dict[int, list[int]] = {k: [] for k in range(graph.num_chunks)}
    for e in graph.edges:
        neighbors[e.i].append(e.j)
        neighbors[e.j].append(e.i)
    seen = {0}
    stack = [0]
    while stack:
        for nb in neighbors[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != graph.num_chunks:
        raise SingularNormalEquations(
            f"graph is disconnected: chunks {sorted(set(range(graph.num_chunks)) - seen)} "
            "are unreachable from the anchor")


def _adjoint_sim3(p: Sim3Pose) -> np.ndarray:
    """7x7 adjoint in (nu, omega, sigma) coordinates."""
    ad = np.zeros((7, 7))
    t = p.t
    hat_t = np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])
    ad[:3, :3] = p.s * p.R
    ad[:3, 3:6] = hat_t @ p.R
    ad[:3, 6] = -t
    ad[3:6, 3:6] = p.R
    ad[6, 6] = 1.0
    return ad


def _adjoint(p: Pose, mode: str) -> np.ndarray:
    if mode == "simy3":
        ad = _adjoint_sim3(p.to_sim3())
        return ad[np.ix_(_SIMY3_SUBINDEX, _SIMY3_SUBINDEX)]
    return _adjoint_sim3(p)


def _right_jacobian(xi: np.ndarray, mode: str) -> np.ndarray:
    """d exp: columns a satisfy hat(Jr e_a) = exp(xi)^-1 * Dexp(xi)[hat(e_a)]."""
    dim = 5 if mode == "simy3" else 7
    if mode == "simy3":
        xi7 = TangentSimY3.from_vector(xi).embed()
    else:
        xi7 = TangentSim3.from_vector(xi)
    A = sim3_hat(xi7)
    J = np.zeros((dim, dim))
    for a in range(dim):
        e = np.zeros(dim)
        e[a] = 1.0
        if mode == "simy3":
            eta = TangentSimY3.from_vector(e).embed()
        else:
            eta = TangentSim3.from_vector(e)
        expA, L = scipy.linalg.expm_frechet(A, sim3_hat(eta))
        col7 = sim3_vee(np.linalg.solve(expA, L)).as_vector()
        J[:, a] = col7[_SIMY3_SUBINDEX] if mode == "simy3" else col7
    return J


class _Problem:
    """Residual/Jacobian assembly for one optimize() call."""

    def __init__(self, graph: ChunkGraph, cfg: LmConfig):
        self.graph = graph
        self.cfg = cfg
        self.dim, self.exp, self.log = _mode_ops(graph.mode)
        self.edges = [(e.i, e.j, inverse(e.pose), np.sqrt(e.weight)) for e in graph.edges]
        h = cfg.finite_diff_step
        self.perturb = []
        for a in range(self.dim):
            e = np.zeros(self.dim)
            e[a] = h
            self.perturb.append((self.exp(e), self.exp(-e)))

    def _edge_residual(self, inv_i: Pose, pose_j: Pose, tilde_inv: Pose,
                       sqrt_w: float) -> np.ndarray:
        delta = compose(tilde_inv, compose(inv_i, pose_j))
        return sqrt_w * self.log(delta)

    def residuals(self, poses: list) -> np.ndarray:
        inv_poses = [inverse(p) for p in poses]
        return np.concatenate([
            self._edge_residual(inv_poses[i], poses[j], tinv, sw)
            for i, j, tinv, sw in self.edges])

    def cost(self, poses: list) -> float:
        r = self.residuals(poses)
        return float(r @ r)

    def jacobian(self, poses: list) -> np.ndarray:
        if self.cfg.jacobian == "analytic":
            return self._jacobian_analytic(poses)
        return self._jacobian_numeric(poses)

    def _jacobian_numeric(self, poses: list) -> np.ndarray:
        d = self.dim
        h = self.cfg.finite_diff_step
        inv_poses = [inverse(p) for p in poses]
        J = np.zeros((d * len(self.edges), d * (len(poses) - 1)))
        for row, (i, j, tinv, sw) in enumerate(self.edges):
            rows = slice(row * d, (row + 1) * d)
            for a, (plus, minus) in enumerate(self.perturb):
                if j > 0:
                    rp = self._edge_residual(inv_poses[i], compose(poses[j], plus), tinv, sw)
                    rm = self._edge_residual(inv_poses[i], compose(poses[j], minus), tinv, sw)
                    J[rows, (j - 1) * d + a] = (rp - rm) / (2.0 * h)
                if i > 0:
                    # (pose_i * exp(delta))^-1 = exp(-delta) * pose_i^-1
                    rp = self._edge_residual(compose(minus, inv_poses[i]), poses[j], tinv, sw)
                    rm = self._edge_residual(compose(plus, inv_poses[i]), poses[j], tinv, sw)
                    J[rows, (i - 1) * d + a] = (rp - rm) / (2.0 * h)
        return J

    def _jacobian_analytic(self, poses: list) -> np.ndarray:
        d = self.dim
        mode = self.graph.mode
        inv_poses = [inverse(p) for p in poses]
        J = np.zeros((d * len(self.edges), d * (len(poses) - 1)))
        for row, (i, j, tinv, sw) in enumerate(self.edges):
            delta = compose(tinv, compose(inv_poses[i], poses[j]))
            xi = self.log(delta)
            jr_inv = np.linalg.inv(_right_jacobian(xi, mode))
            rows = slice(row * d, (row + 1) * d)
            if j > 0:
                J[rows, (j - 1) * d: j * d] = sw * jr_inv
            if i > 0:
                g_inv = compose(inv_poses[j], poses[i])
                J[rows, (i - 1) * d: i * d] = -sw * (jr_inv @ _adjoint(g_inv, mode))
        return J


def optimize(graph: ChunkGraph, initial: list, cfg: LmConfig = LmConfig()) -> OptimizeResult:
    """Levenberg-Marquardt over the free poses with the first pose anchored.

    The cost is the sum over edges of the squared tangent-space residual
    (optionally weighted per edge). The returned trace contains the cost
    at the initial point followed by the cost after every accepted step,
    and is non-increasing by construction.
    """
    want = SimY3Pose if graph.mode == "simy3" else Sim3Pose
    if len(initial) != graph.num_chunks:
        raise InvalidConfig(f"expected {graph.num_chunks} initial poses, got {len(initial)}")
    if not all(isinstance(p, want) for p in initial):
        raise InvalidConfig(f"initial poses must all be in the {graph.mode} group")
    _check_connected(graph)

    problem = _Problem(graph, cfg)
    d = problem.dim
    poses = list(initial)
    cost = problem.cost(poses)
    trace = [cost]
    lam = cfg.init_damping
    converged, reason = False, "max_iters reached"
    iterations = 0

    for _ in range(cfg.max_iters):
        iterations += 1
        r = problem.residuals(poses)
        J = problem.jacobian(poses)
        g = J.T @ r
        if np.abs(g).max() < cfg.gradient_tol:
            converged, reason = True, "gradient below gradient_tol"
            break
        JtJ = J.T @ J
        accepted = False
        while lam < 1e15:
            try:
                cho = scipy.linalg.cho_factor(JtJ + lam * np.eye(JtJ.shape[0]))
                step = scipy.linalg.cho_solve(cho, -g)
            except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as err:
                raise SingularNormalEquations(str(err)) from err
            candidate = list(poses)
            for n in range(1, len(poses)):
                candidate[n] = compose(poses[n], problem.exp(step[(n - 1) * d: n * d]))
            new_cost = problem.cost(candidate)
            if new_cost <= cost:
                poses, cost = candidate, new_cost
                trace.append(cost)
                lam = max(lam * cfg.damping_down, 1e-15)
                accepted = True
                break
            lam *= cfg.damping_up
        if not accepted:
            reason = "damping overflow (no acceptable step)"
            break
        if float(np.linalg.norm(step)) < cfg.step_tol:
            converged, reason = True, "step below step_tol"
            break

    return OptimizeResult(poses=poses, cost_trace=trace, iterations=iterations,
                          converged=converged, reason=reason)
