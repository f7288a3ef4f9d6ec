import math

import numpy as np
import pytest

from gravalign.errors import RotationNearPi
from gravalign.geometry import Sim3Pose, SimY3Pose, pose_error, rot_y
from gravalign.lie import (
    TangentSim3,
    TangentSimY3,
    exp_sim3,
    exp_simy3,
    hat,
    log_sim3,
    log_simy3,
    sim3_hat,
    sim3_vee,
    _w_coefficients,
)

from conftest import random_sim3, random_simy3


def test_exp_zero_is_identity():
    p = exp_sim3(TangentSim3(np.zeros(3), np.zeros(3), 0.0))
    assert max(pose_error(p, Sim3Pose.identity())) == 0
    q = exp_simy3(TangentSimY3(np.zeros(3), 0.0, 0.0))
    assert max(pose_error(q, SimY3Pose.identity())) == 0


def test_exp_pure_rotation():
    p = exp_sim3(TangentSim3(np.zeros(3), np.array([0.0, np.pi / 2, 0.0]), 0.0))
    assert np.abs(p.R - rot_y(np.pi / 2)).max() < 1e-15
    assert p.s == 1.0 and np.allclose(p.t, 0.0)


def test_log_pure_scale():
    xi = log_sim3(Sim3Pose(np.e, np.eye(3), np.zeros(3)))
    assert np.allclose(xi.as_vector(), [0, 0, 0, 0, 0, 0, 1.0], atol=1e-15)


def test_log_pure_translation():
    xi = log_sim3(Sim3Pose(1.0, np.eye(3), np.array([3.0, 4.0, 5.0])))
    assert np.allclose(xi.as_vector(), [3, 4, 5, 0, 0, 0, 0], atol=1e-14)


def test_exp_simy3_pure_translation():
    p = exp_simy3(TangentSimY3(np.array([1.0, 0.0, 0.0]), 0.0, 0.0))
    assert max(pose_error(p, SimY3Pose(1.0, 0.0, np.array([1.0, 0.0, 0.0])))) < 1e-15


def test_log_simy3_pure_yaw():
    xi = log_simy3(SimY3Pose(1.0, 0.3, np.zeros(3)))
    assert np.allclose(xi.as_vector(), [0, 0, 0, 0.3, 0], atol=1e-15)


def test_sim3_roundtrip(rng):
    for _ in range(300):
        w = rng.normal(size=3)
        w = w / np.linalg.norm(w) * rng.uniform(0.0, np.pi - 0.1)
        xi = TangentSim3(rng.normal(size=3) * 3, w, rng.normal() * 1.5)
        back = log_sim3(exp_sim3(xi))
        assert np.abs(back.as_vector() - xi.as_vector()).max() < 1e-9


def test_simy3_roundtrip(rng):
    for _ in range(300):
        xi = TangentSimY3(rng.normal(size=3) * 3,
                          rng.uniform(-np.pi + 0.1, np.pi - 0.1),
                          rng.normal() * 1.5)
        back = log_simy3(exp_simy3(xi))
        assert np.abs(back.as_vector() - xi.as_vector()).max() < 1e-9


def test_log_exp_other_direction(rng):
    for _ in range(100):
        p = random_sim3(rng)
        q = exp_sim3(log_sim3(p))
        assert max(pose_error(q, p)) < 1e-9


def test_exp_of_negated_tangent_is_inverse(rng):
    from gravalign.geometry import compose

    for _ in range(50):
        v = rng.normal(size=7)
        v[3:6] *= 0.8
        a = exp_sim3(TangentSim3.from_vector(v))
        b = exp_sim3(TangentSim3.from_vector(-v))
        assert max(pose_error(compose(a, b), Sim3Pose.identity())) < 1e-12


def test_small_tangent_linearization(rng):
    for _ in range(50):
        v = rng.normal(size=7)
        v *= 1e-4 / np.linalg.norm(v)
        xi = TangentSim3.from_vector(v)
        p = exp_sim3(xi)
        first_order = np.eye(4) + sim3_hat(xi)
        assert np.abs(p.matrix() - first_order).max() < 1e-7


def test_embedding_consistency(rng):
    for _ in range(100):
        xi = TangentSimY3(rng.normal(size=3) * 2, rng.uniform(-3, 3), rng.normal())
        a = exp_simy3(xi).to_sim3()
        b = exp_sim3(xi.embed())
        assert np.abs(a.matrix() - b.matrix()).max() < 1e-12


def test_subalgebra_closure_via_log(rng):
    from gravalign.geometry import compose

    for _ in range(50):
        a = random_simy3(rng, yaw_max=1.4)
        b = random_simy3(rng, yaw_max=1.4)
        prod = compose(a.to_sim3(), b.to_sim3())
        omega = log_sim3(prod).omega
        assert abs(omega[0]) < 1e-9 and abs(omega[2]) < 1e-9


def test_rotation_near_pi_raises():
    p = exp_sim3(TangentSim3(np.zeros(3), np.array([0.0, np.pi - 1e-8, 0.0]), 0.0))
    with pytest.raises(RotationNearPi):
        log_sim3(p)
    with pytest.raises(RotationNearPi):
        log_simy3(SimY3Pose(1.0, np.pi - 1e-8, np.zeros(3)))


def test_hat_vee_roundtrip(rng):
    xi = TangentSim3(rng.normal(size=3), rng.normal(size=3), rng.normal())
    back = sim3_vee(sim3_hat(xi))
    assert np.abs(back.as_vector() - xi.as_vector()).max() < 1e-15


def test_hat_is_cross_product(rng):
    v, w = rng.normal(size=3), rng.normal(size=3)
    assert np.allclose(hat(v) @ w, np.cross(v, w))


def test_translation_jacobian_matches_quadrature_oracle():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40

    def oracle(theta, sigma):
        t, s = mp.mpf(theta), mp.mpf(sigma)
        A = mp.quad(lambda u: mp.e ** (s * u), [0, 1])
        if theta == 0:
            B = mp.quad(lambda u: mp.e ** (s * u) * u, [0, 1])
            C = mp.quad(lambda u: mp.e ** (s * u) * u * u / 2, [0, 1])
        else:
            B = mp.quad(lambda u: mp.e ** (s * u) * mp.sin(u * t) / t, [0, 1])
            C = mp.quad(lambda u: mp.e ** (s * u) * (1 - mp.cos(u * t)) / t ** 2, [0, 1])
        return float(A), float(B), float(C)

    thetas = [0.0, 1e-9, 1e-6, 1e-4, 1e-2, 0.5, 1.0, 2.0, 3.0, np.pi - 1e-7, 5.0]
    sigmas = [0.0, 1e-9, -1e-6, 1e-4, -1e-2, 0.5, -1.0, 2.0, -4.0, 8.0]
    for theta in thetas:
        for sigma in sigmas:
            got = _w_coefficients(theta, sigma)
            want = oracle(theta, sigma)
            for g, w in zip(got, want):
                assert abs(g - w) <= 1e-11 * max(1.0, abs(w))


def test_tangent_vector_roundtrip(rng):
    v7 = rng.normal(size=7)
    assert np.array_equal(TangentSim3.from_vector(v7).as_vector(), v7)
    v5 = rng.normal(size=5)
    assert np.array_equal(TangentSimY3.from_vector(v5).as_vector(), v5)
