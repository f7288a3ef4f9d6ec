import math

import numpy as np
import pytest

from gravalign.geometry import (
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
    pose_error,
    rot_y,
    sim3_to_simy3,
    wrap_angle,
)

from conftest import random_pose, random_sim3, random_simy3


def test_apply_identity():
    p = np.array([[1.0, 2.0, 3.0]])
    assert np.allclose(apply_pose(Sim3Pose.identity(), p), p)
    assert np.allclose(apply_pose(SimY3Pose.identity(), p), p)


def test_apply_yaw_quarter_turn():
    pose = SimY3Pose(2.0, np.pi / 2, np.zeros(3))
    out = apply_pose(pose, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(out, [0.0, 0.0, -2.0], atol=1e-12)


def test_apply_pure_translation():
    pose = SimY3Pose(1.0, 0.0, np.array([0.0, 5.0, 0.0]))
    assert np.allclose(apply_pose(pose, np.array([1.0, 1.0, 1.0])), [1.0, 6.0, 1.0])


def test_compose_with_identity(rng):
    for mode in ("sim3", "simy3"):
        p = random_pose(rng, mode)
        assert max(pose_error(compose(p, type(p).identity()), p)) < 1e-12
        assert max(pose_error(compose(type(p).identity(), p), p)) < 1e-12


def test_compose_inverse_is_identity(rng):
    for mode in ("sim3", "simy3"):
        for _ in range(20):
            p = random_pose(rng, mode)
            err = pose_error(compose(p, inverse(p)), type(p).identity())
            assert max(err) < 1e-12


def test_simy3_yaw_angles_add():
    a = SimY3Pose(1.0, np.pi / 4, np.zeros(3))
    out = compose(a, a)
    assert isinstance(out, SimY3Pose)
    assert abs(out.yaw - np.pi / 2) < 1e-15


def test_inverse_examples():
    assert max(pose_error(inverse(Sim3Pose.identity()), Sim3Pose.identity())) == 0
    inv = inverse(Sim3Pose(2.0, np.eye(3), np.array([2.0, 0.0, 0.0])))
    assert abs(inv.s - 0.5) < 1e-15
    assert np.allclose(inv.t, [-1.0, 0.0, 0.0])


def test_double_inverse_roundtrip(rng):
    for mode in ("sim3", "simy3"):
        for _ in range(20):
            p = random_pose(rng, mode)
            assert max(pose_error(inverse(inverse(p)), p)) < 1e-12


def test_associativity(rng):
    for mode in ("sim3", "simy3"):
        for _ in range(20):
            a, b, c = (random_pose(rng, mode) for _ in range(3))
            lhs = compose(compose(a, b), c)
            rhs = compose(a, compose(b, c))
            assert max(pose_error(lhs, rhs)) < 1e-12


def test_action_homomorphism(rng):
    for mode in ("sim3", "simy3"):
        a, b = random_pose(rng, mode), random_pose(rng, mode)
        pts = rng.normal(size=(50, 3))
        lhs = apply_pose(compose(a, b), pts)
        rhs = apply_pose(a, apply_pose(b, pts))
        assert np.abs(lhs - rhs).max() < 1e-12


def test_simy3_closure_off_axis_zero(rng):
    for _ in range(20):
        a, b = random_simy3(rng), random_simy3(rng)
        R = compose(a, b).to_sim3().R
        off = max(abs(R[0, 1]), abs(R[1, 0]), abs(R[1, 2]), abs(R[2, 1]))
        assert off < 1e-12


def test_rotation_y_lift_exact():
    for theta in np.linspace(-np.pi, np.pi, 17):
        R = rot_y(theta)
        assert np.abs(R @ R.T - np.eye(3)).max() < 1e-15
        assert abs(np.linalg.det(R) - 1.0) < 1e-15


def test_mixed_compose_promotes_to_sim3(rng):
    a = random_sim3(rng)
    b = random_simy3(rng)
    out = compose(a, b)
    assert isinstance(out, Sim3Pose)
    pts = rng.normal(size=(10, 3))
    assert np.abs(apply_pose(out, pts) - apply_pose(a, apply_pose(b, pts))).max() < 1e-12


def test_yaw_normalized_to_canonical_interval():
    assert SimY3Pose(1.0, 3 * np.pi, np.zeros(3)).yaw == pytest.approx(np.pi)
    assert abs(SimY3Pose(1.0, -3.5 * np.pi, np.zeros(3)).yaw - 0.5 * np.pi) < 1e-12
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)


def test_scale_must_be_positive():
    with pytest.raises(ValueError):
        Sim3Pose(0.0, np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        SimY3Pose(-1.0, 0.0, np.zeros(3))


def test_rotation_validation():
    bad = np.eye(3)
    bad = bad.copy()
    bad[0, 0] = 1.1
    with pytest.raises(ValueError):
        Sim3Pose(1.0, bad, np.zeros(3))


def test_sim3_to_simy3_roundtrip(rng):
    p = random_simy3(rng)
    back = sim3_to_simy3(p.to_sim3())
    assert max(pose_error(back, p)) < 1e-12
    with pytest.raises(ValueError):
        sim3_to_simy3(random_sim3(rng))


def _grid(rng, h=4, w=5):
    return rng.normal(size=(h, w, 3))


def test_camera_to_gravity_zero_rotation(rng):
    pm = Pointmap(_grid(rng), frame_tag=FrameTag.CAMERA)
    out = camera_to_gravity_frame(pm, FrameRotation(0.0, 0.0))
    assert np.allclose(out.points, pm.points)
    assert out.frame_tag == FrameTag.GRAVITY


def test_camera_to_gravity_pitch_quarter_turn():
    pts = np.array([[[0.0, 0.0, 1.0]]])
    pm = Pointmap(pts, frame_tag=FrameTag.CAMERA)
    out = camera_to_gravity_frame(pm, FrameRotation(roll=0.0, pitch=np.pi / 2))
    # right-hand rotation about +x maps +z to -y
    assert np.allclose(out.points[0, 0], [0.0, -1.0, 0.0], atol=1e-12)


def test_frame_rotation_roundtrip(rng):
    fr = FrameRotation(roll=0.3, pitch=-0.7)
    pm = Pointmap(_grid(rng), frame_tag=FrameTag.CAMERA)
    back = gravity_to_camera_frame(camera_to_gravity_frame(pm, fr), fr)
    assert np.abs(back.points - pm.points).max() < 1e-12


def test_frame_rotation_order_is_pitch_after_roll():
    fr = FrameRotation(roll=0.4, pitch=0.9)
    from gravalign.geometry import rot_x, rot_z

    assert np.allclose(fr.matrix(), rot_x(0.9) @ rot_z(0.4))


def test_camera_to_gravity_rejects_wrong_tag(rng):
    pm = Pointmap(_grid(rng), frame_tag=FrameTag.GRAVITY)
    with pytest.raises(ValueError):
        camera_to_gravity_frame(pm, FrameRotation(0.0, 0.0))


def test_pointmap_validation(rng):
    with pytest.raises(ValueError):
        Pointmap(np.zeros((3, 3)))  # missing channel axis
    with pytest.raises(ValueError):
        Pointmap(_grid(rng), confidence=np.ones((2, 2)))
    with pytest.raises(ValueError):
        Pointmap(_grid(rng), confidence=np.zeros((4, 5)))
    pm = Pointmap(_grid(rng), confidence=np.ones((4, 5)))
    assert pm.height == 4 and pm.width == 5
    grid = _grid(rng)
    grid[1, 2] = np.nan
    assert Pointmap(grid).valid_mask().sum() == 19


def test_pointmap_is_immutable(rng):
    pm = Pointmap(_grid(rng))
    with pytest.raises(ValueError):
        pm.points[0, 0, 0] = 1.0
