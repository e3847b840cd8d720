import time

import numpy as np
import pytest

from camsel.geometry import CameraModel, look_at_camera

SESSION_START = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    # the suite-runtime check has to see every other test finish first
    last = [it for it in items if it.get_closest_marker("run_last")]
    items[:] = [it for it in items if not it.get_closest_marker("run_last")] + last


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: run after every other test")


def ring_rig(n=5, radius=4000.0, height=1500.0, target=(0.0, 0.0, 900.0)):
    az = np.linspace(0, 2 * np.pi, n, endpoint=False) + 0.3
    return [
        look_at_camera(k, (radius * np.cos(a), radius * np.sin(a), height + 300.0 * (k % 2)), target)
        for k, a in enumerate(az)
    ]


def random_camera(rng, cam_id=0):
    """Random full-rank camera looking roughly at the origin region from 3-6 m away."""
    while True:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        if abs(d[2]) < 0.8:
            break
    pos = d * rng.uniform(3000, 6000)
    target = rng.uniform(-300, 300, 3)
    cam = look_at_camera(cam_id, pos, target, rng.uniform(300, 1200))
    # random in-plane distortion keeps P full rank but no longer a clean K[R|t]
    A = np.eye(3) + np.triu(rng.uniform(-0.1, 0.1, (3, 3)), 1)
    return CameraModel(cam_id, A @ cam.P)


@pytest.fixture
def rig():
    return ring_rig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
