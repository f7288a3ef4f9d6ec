import numpy as np
import pytest

from gravalign.geometry import Sim3Pose, SimY3Pose
from gravalign.lie import TangentSim3, TangentSimY3, exp_sim3, exp_simy3


def random_sim3(rng, trans_scale=2.0, rot_max=2.5, log_scale=0.3) -> Sim3Pose:
    w = rng.normal(size=3)
    w = w / np.linalg.norm(w) * rng.uniform(0.0, rot_max)
    return exp_sim3(TangentSim3(rng.normal(size=3) * trans_scale, w,
                                rng.normal() * log_scale))


def random_simy3(rng, trans_scale=2.0, yaw_max=2.5, log_scale=0.3) -> SimY3Pose:
    return exp_simy3(TangentSimY3(rng.normal(size=3) * trans_scale,
                                  rng.uniform(-yaw_max, yaw_max),
                                  rng.normal() * log_scale))


def random_pose(rng, mode, trans_scale=2.0, rot_max=2.5, log_scale=0.3):
    if mode == "simy3":
        return random_simy3(rng, trans_scale, rot_max, log_scale)
    return random_sim3(rng, trans_scale, rot_max, log_scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
