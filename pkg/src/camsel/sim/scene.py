"""Synthetic multi-person scenes: a shared skeleton template carried along smooth random walks."""

from __future__ import annotations

import numpy as np

from .._kernels import random_walk
from ..geometry import Pose3D
from .config import ScenarioConfig

# Standing 14-joint skeleton (mm), origin on the floor below the pelvis,
# x forward, y left, z up. Joint order matches metrics.JOINT_NAMES.
TEMPLATE = np.array([
    [0.0, -100.0, 80.0],     # r_ankle
    [20.0, -100.0, 480.0],   # r_knee
    [0.0, -100.0, 900.0],    # r_hip
    [0.0, 100.0, 900.0],     # l_hip
    [20.0, 100.0, 480.0],    # l_knee
    [0.0, 100.0, 80.0],      # l_ankle
    [80.0, -260.0, 850.0],   # r_wrist
    [40.0, -220.0, 1150.0],  # r_elbow
    [0.0, -190.0, 1420.0],   # r_shoulder
    [0.0, 190.0, 1420.0],    # l_shoulder
    [40.0, 220.0, 1150.0],   # l_elbow
    [80.0, 260.0, 850.0],    # l_wrist
    [0.0, 0.0, 1480.0],      # neck
    [10.0, 0.0, 1720.0],     # head_top
])


def root_trajectories(cfg: ScenarioConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Floor positions (T, persons, 2) of every person.

    Heading rate is an AR(1) process with stationary std ``turn_rate``; speed a low-pass
    filtered target in [0, max_speed]; positions reflect at the arena walls.
    Per-slot displacement never exceeds ``max_speed * slot_duration``.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    T, P = cfg.slots, cfg.persons
    m = cfg.motion
    lo = np.array([cfg.arena[0], cfg.arena[2]], dtype=float)
    hi = np.array([cfg.arena[1], cfg.arena[3]], dtype=float)
    pos = rng.uniform(lo, hi, size=(P, 2))
    heading = rng.uniform(0, 2 * np.pi, size=P)
    speed = rng.uniform(0.3, 1.0, size=P) * m.max_speed
    omega = rng.normal(0.0, m.turn_rate, size=P)
    drive = rng.standard_normal((T - 1, P))
    target = rng.uniform(0.0, 1.0, size=(T - 1, P))
    out = np.empty((T, P, 2))
    random_walk(pos, heading, speed, omega, drive, target, float(cfg.slot_duration), float(m.max_speed),
                float(m.turn_rate), float(m.smoothness), lo, hi, out)
    return out


def generate_scene_sequence(cfg: ScenarioConfig) -> np.ndarray:
    """Ground-truth joints for every slot, shape (T, persons, J, 3); fully determined by the seed."""
    roots = root_trajectories(cfg)
    T, P, _ = roots.shape
    offset = np.zeros((T, P, 1, 3))
    offset[..., 0, :2] = roots
    return offset + TEMPLATE[None, None]


def scene_poses(scene: np.ndarray, slot: int) -> list[Pose3D]:
    return [Pose3D(scene[slot, k], k) for k in range(scene.shape[1])]
