"""Exponential and logarithmic maps for Sim(3) and its yaw-only subgroup.

Tangent coordinates are ordered (nu, omega, sigma): translational part,
rotational part, log-scale. The translation block of the exponential is
``t = W(omega, sigma) @ nu`` where

    W = A * I + B * hat(omega) + C * hat(omega)^2
    A = integral_0^1 exp(sigma u) du
    B = integral_0^1 exp(sigma u) * sin(u theta)/theta du
    C = integral_0^1 exp(sigma u) * (1 - cos(u theta))/theta^2 du

with theta = |omega|. A uses the closed form expm1(sigma)/sigma (Taylor
below 1e-6); B and C are evaluated by fixed-order Gauss-Legendre quadrature
of the integrands rewritten through sinc, which is uniformly accurate for
all (theta, sigma) of practical size and has no 0/0 branch points. The
quadrature is validated against high-precision numerical integration in the
test suite.

The 5-dimensional maps are implemented by embedding into the 7-dimensional
algebra; closure is guaranteed because the y-rotation generator together
with translations and scale spans a subalgebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RotationNearPi
from .geometry import Sim3Pose, SimY3Pose

# Log branch cutoff: rotations closer to pi than this are rejected.
NEAR_PI_MARGIN = 1e-6

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
_GL_U = 0.5 * (_GL_X + 1.0)        # nodes mapped to [0, 1]
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class TangentSim3:
    """sim(3) coordinates: 3-vector nu, 3-vector omega, scalar sigma."""

    nu: np.ndarray
    omega: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "nu", np.array(self.nu, dtype=float))
        object.__setattr__(self, "omega", np.array(self.omega, dtype=float))
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.nu.shape != (3,) or self.omega.shape != (3,):
            raise ValueError("nu and omega must be 3-vectors")
        if not (np.all(np.isfinite(self.nu)) and np.all(np.isfinite(self.omega))
                and math.isfinite(self.sigma)):
            raise ValueError("tangent coordinates must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.nu, self.omega, [self.sigma]])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "TangentSim3":
        v = np.asarray(v, dtype=float)
        if v.shape != (7,):
            raise ValueError(f"expected a 7-vector, got shape {v.shape}")
        return cls(v[:3], v[3:6], v[6])


@dataclass(frozen=True)
class TangentSimY3:
    """sim_y(3) coordinates: 3-vector nu, yaw rate theta, scalar sigma."""

    nu: np.ndarray
    theta: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "nu", np.array(self.nu, dtype=float))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.nu.shape != (3,):
            raise ValueError("nu must be a 3-vector")
        if not (np.all(np.isfinite(self.nu)) and math.isfinite(self.theta)
                and math.isfinite(self.sigma)):
            raise ValueError("tangent coordinates must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.nu, [self.theta, self.sigma]])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "TangentSimY3":
        v = np.asarray(v, dtype=float)
        if v.shape != (5,):
            raise ValueError(f"expected a 5-vector, got shape {v.shape}")
        return cls(v[:3], v[3], v[4])

    def embed(self) -> TangentSim3:
        return TangentSim3(self.nu, np.array([0.0, self.theta, 0.0]), self.sigma)


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix with hat(v) @ w == cross(v, w)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula, stable for all angles via sinc."""
    omega = np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(omega))
    K = hat(omega)
    a = np.sinc(theta / np.pi)                       # sin(theta)/theta
    b = 0.5 * np.sinc(theta / (2.0 * np.pi)) ** 2    # (1 - cos(theta))/theta^2
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; raises RotationNearPi within the branch margin."""
    R = np.asarray(R, dtype=float)
    v = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_theta = float(np.linalg.norm(v))
    cos_theta = 0.5 * (np.trace(R) - 1.0)
    theta = math.atan2(sin_theta, cos_theta)
    if theta >= np.pi - NEAR_PI_MARGIN:
        raise RotationNearPi(f"rotation angle {theta:.9f} is within {NEAR_PI_MARGIN} of pi")
    return v / np.sinc(theta / np.pi)


def _scale_integral(sigma: float) -> float:
    # A = expm1(sigma)/sigma with a short Taylor series below the 0/0 point.
    if abs(sigma) < 1e-6:
        return 1.0 + sigma * (0.5 + sigma * (1.0 / 6.0 + sigma / 24.0))
    return math.expm1(sigma) / sigma


def _w_coefficients(theta: float, sigma: float) -> tuple[float, float, float]:
    u = _GL_U
    e = np.exp(sigma * u)
    b = float(np.dot(_GL_W, e * u * np.sinc(u * (theta / np.pi))))
    c = float(np.dot(_GL_W, e * (0.5 * u * u) * np.sinc(u * (theta / (2.0 * np.pi))) ** 2))
    return _scale_integral(sigma), b, c


def _w_matrix(omega: np.ndarray, sigma: float) -> np.ndarray:
    theta = float(np.linalg.norm(omega))
    a, b, c = _w_coefficients(theta, sigma)
    K = hat(omega)
    return a * np.eye(3) + b * K + c * (K @ K)


def exp_sim3(xi: TangentSim3) -> Sim3Pose:
    """Group exponential: R = exp(hat(omega)), s = e^sigma, t = W @ nu."""
    R = so3_exp(xi.omega)
    t = _w_matrix(xi.omega, xi.sigma) @ xi.nu
    return Sim3Pose(math.exp(xi.sigma), R, t)


def log_sim3(p: Sim3Pose) -> TangentSim3:
    """Inverse of exp_sim3 for rotation angles strictly below pi."""
    omega = so3_log(p.R)
    sigma = math.log(p.s)
    nu = np.linalg.solve(_w_matrix(omega, sigma), p.t)
    return TangentSim3(nu, omega, sigma)


def exp_simy3(xi: TangentSimY3) -> SimY3Pose:
    """Exponential of the 5-dim subalgebra via the sim(3) embedding."""
    t = _w_matrix(np.array([0.0, xi.theta, 0.0]), xi.sigma) @ xi.nu
    return SimY3Pose(math.exp(xi.sigma), xi.theta, t)


def log_simy3(p: SimY3Pose) -> TangentSimY3:
    """Inverse of exp_simy3 for yaw magnitudes strictly below pi."""
    if abs(p.yaw) >= np.pi - NEAR_PI_MARGIN:
        raise RotationNearPi(f"yaw {p.yaw:.9f} is within {NEAR_PI_MARGIN} of pi")
    sigma = math.log(p.s)
    omega = np.array([0.0, p.yaw, 0.0])
    nu = np.linalg.solve(_w_matrix(omega, sigma), p.t)
    return TangentSimY3(nu, p.yaw, sigma)


def sim3_hat(xi: TangentSim3) -> np.ndarray:
    """4x4 matrix representation [[sigma*I + hat(omega), nu], [0, 0]]."""
    m = np.zeros((4, 4))
    m[:3, :3] = xi.sigma * np.eye(3) + hat(xi.omega)
    m[:3, 3] = xi.nu
    return m


def sim3_vee(m: np.ndarray) -> TangentSim3:
    """Inverse of sim3_hat (symmetrizes round-off in the rotation block)."""
    block = np.asarray(m, dtype=float)[:3, :3]
    sigma = float(np.trace(block)) / 3.0
    skew = 0.5 * (block - block.T)
    omega = np.array([skew[2, 1], skew[0, 2], skew[1, 0]])
    return TangentSim3(np.asarray(m, dtype=float)[:3, 3], omega, sigma)
