"""Synthetic 2D observations whose noise grows with how much a person is overlapped."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..geometry import EPS_DEPTH, CameraModel, Pose2D, Pose3D
from ..occlusion import DEFAULT_EXPANSION, covered_fractions, projected_boxes, scene_iou_batch


@dataclass(frozen=True)
class PoseMessage:
    """What a selected camera sends to the edge for one captured frame."""

    camera_id: int
    timestamp: int
    poses: tuple[Pose2D, ...]
    # simulator identity label of each pose (used only for evaluation and ID's box tracking)
    person_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class ViewObservation:
    poses: list[Pose2D]
    person_ids: list[int]
    overlap: np.ndarray  # per observed person
    sigma: np.ndarray  # per observed person


def visible_boxes(uv: np.ndarray, q: np.ndarray, camera: CameraModel, expansion: float = DEFAULT_EXPANSION):
    """Expanded boxes (K, 4) and a visibility mask for projected persons uv (K, J, 2).

    A person is visible when all joints are in front of the camera and at
    least one joint lands inside the image.
    """
    ok = (q > EPS_DEPTH).all(axis=1)
    uv = np.where(ok[:, None, None], uv, 0.0)
    lo = uv.min(axis=1)
    hi = uv.max(axis=1)
    visible = ok & _inside(uv, camera.width, camera.height)
    grow = 0.5 * expansion * (hi - lo)
    boxes = np.concatenate([lo - grow, hi + grow], axis=1)
    return boxes, visible


def _inside(uv: np.ndarray, width, height) -> np.ndarray:
    u, v = uv[..., 0], uv[..., 1]
    return ((u >= 0) & (u <= width) & (v >= 0) & (v <= height)).any(axis=-1)


@dataclass(frozen=True)
class BatchObservation:
    """Observations of every camera over a block of slots.

    Arrays are indexed [slot, camera, person]: noisy pixels (..., J, 2),
    visibility, overlap fraction and noise scale. ``scene_iou`` [slot, camera]
    is the scene IoU of the true (noiseless) boxes.
    """

    uv: np.ndarray
    visible: np.ndarray
    overlap: np.ndarray
    sigma: np.ndarray
    scene_iou: np.ndarray

    def confidence(self) -> np.ndarray:
        return 1.0 / (1.0 + self.sigma)


def observe_batch(
    cameras: Sequence[CameraModel],
    joints: np.ndarray,
    noise: np.ndarray,
    sigma0: float,
    kappa: float,
    expansion: float = DEFAULT_EXPANSION,
) -> BatchObservation:
    """Observe persons ``joints`` (T, K, J, 3) in every camera; ``noise`` is (T, N, K, J, 2)."""
    Ps = np.stack([c.P for c in cameras])
    uv, boxes, front = projected_boxes(Ps, joints, expansion)
    size = np.array([[c.width, c.height] for c in cameras], dtype=float)[:, None, None, :]
    u, v = uv[..., 0], uv[..., 1]
    inside = ((u >= 0) & (u <= size[..., 0]) & (v >= 0) & (v <= size[..., 1])).any(axis=-1)
    visible = front & inside
    overlap = covered_fractions(boxes, visible)
    sigma = np.where(visible, sigma0 * (1.0 + kappa * overlap), 0.0)
    iou = scene_iou_batch(boxes, front)
    return BatchObservation(uv + sigma[..., None, None] * noise, visible, overlap, sigma, iou)


def observe_view(
    camera: CameraModel,
    joints: np.ndarray,
    noise: np.ndarray,
    sigma0: float,
    kappa: float,
    expansion: float = DEFAULT_EXPANSION,
) -> ViewObservation:
    """Observe persons ``joints`` (K, J, 3) with standard-normal draws ``noise`` (K, J, 2).

    Each visible person's pixel noise is sigma0 * (1 + kappa * o), o being the
    fraction of its box covered by other visible persons' boxes; every joint's
    confidence is 1 / (1 + sigma). Persons entirely outside the image are dropped.
    """
    joints = np.asarray(joints, dtype=float)
    if len(joints) == 0:
        return ViewObservation([], [], np.zeros(0), np.zeros(0))
    b = observe_batch([camera], joints[None], np.asarray(noise)[None, None], sigma0, kappa, expansion)
    idx = np.flatnonzero(b.visible[0, 0])
    conf = b.confidence()[0, 0]
    J = joints.shape[1]
    poses = [Pose2D(b.uv[0, 0, k], np.full(J, conf[k])) for k in idx]
    return ViewObservation(poses, [int(k) for k in idx], b.overlap[0, 0, idx], b.sigma[0, 0, idx])


def observe_2d(
    camera: CameraModel,
    gt_poses: Sequence[Pose3D],
    rng: np.random.Generator,
    sigma0: float = 2.0,
    kappa: float = 3.0,
    expansion: float = DEFAULT_EXPANSION,
) -> list[Pose2D]:
    if not gt_poses:
        return []
    joints = np.stack([p.joints for p in gt_poses])
    noise = rng.standard_normal(joints.shape[:2] + (2,))
    return observe_view(camera, joints, noise, sigma0, kappa, expansion).poses
