"""Person bounding boxes and the scene-level IoU occlusion score."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import NoValidJoints
from .geometry import EPS_DEPTH, Pose2D

DEFAULT_EXPANSION = 0.10


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"malformed box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max])

    def translated(self, dx: float, dy: float) -> BoundingBox:
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)


def box_from_points(points: np.ndarray, expansion: float = DEFAULT_EXPANSION) -> BoundingBox:
    """Min/max box of ``points`` (n, 2), each side grown by ``expansion`` about the centre."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    grow = 0.5 * expansion * (hi - lo)
    return BoundingBox(lo[0] - grow[0], lo[1] - grow[1], hi[0] + grow[0], hi[1] + grow[1])


def bbox_from_pose2d(pose: Pose2D, expansion: float = DEFAULT_EXPANSION) -> BoundingBox:
    valid = pose.valid
    if not valid.any():
        raise NoValidJoints("pose has no valid joints")
    return box_from_points(pose.joints[valid], expansion)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def pairwise_iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def scene_iou(boxes: Sequence[BoundingBox]) -> float:
    """Mean IoU over all unordered pairs of boxes; 0 when fewer than two boxes."""
    if len(boxes) < 2:
        return 0.0
    vals = [pairwise_iou(a, b) for a, b in combinations(boxes, 2)]
    return float(sum(vals) / len(vals))


def scene_iou_array(boxes: np.ndarray) -> float:
    """Vectorised ``scene_iou`` for an (K, 4) array of [x0, y0, x1, y1] rows."""
    K = len(boxes)
    if K < 2:
        return 0.0
    i, j = np.triu_indices(K, 1)
    a, b = boxes[i], boxes[j]
    w = np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0])
    h = np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1])
    inter = np.where((w > 0) & (h > 0), w * h, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a + area_b - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return float(np.clip(iou, 0.0, 1.0).mean())


def covered_fraction(box: np.ndarray, others: np.ndarray) -> float:
    """Fraction of ``box`` area covered by the union of ``others`` (exact, via coordinate compression)."""
    area = (box[2] - box[0]) * (box[3] - box[1])
    if area <= 0 or len(others) == 0:
        return 0.0
    clipped = np.column_stack([
        np.maximum(others[:, 0], box[0]),
        np.maximum(others[:, 1], box[1]),
        np.minimum(others[:, 2], box[2]),
        np.minimum(others[:, 3], box[3]),
    ])
    clipped = clipped[(clipped[:, 2] > clipped[:, 0]) & (clipped[:, 3] > clipped[:, 1])]
    if len(clipped) == 0:
        return 0.0
    if len(clipped) == 1:
        c = clipped[0]
        return float(min(1.0, (c[2] - c[0]) * (c[3] - c[1]) / area))
    xs = np.unique(clipped[:, [0, 2]])
    ys = np.unique(clipped[:, [1, 3]])
    xc = 0.5 * (xs[:-1] + xs[1:])
    yc = 0.5 * (ys[:-1] + ys[1:])
    inside = (
        (clipped[:, None, None, 0] <= xc[None, :, None])
        & (xc[None, :, None] < clipped[:, None, None, 2])
        & (clipped[:, None, None, 1] <= yc[None, None, :])
        & (yc[None, None, :] < clipped[:, None, None, 3])
    ).any(axis=0)
    cell = np.outer(np.diff(xs), np.diff(ys))
    return float(min(1.0, cell[inside].sum() / area))


def covered_fractions(boxes: np.ndarray, present: np.ndarray) -> np.ndarray:
    """Batched ``covered_fraction`` of every box by the other present boxes.

    ``boxes`` is (..., K, 4) and ``present`` (..., K) bool. The union area is
    taken by inclusion-exclusion over subsets of the other boxes, which is
    exact and cheap for the handful of persons in a view.
    """
    boxes = np.asarray(boxes, dtype=float)
    K = boxes.shape[-2]
    out = np.zeros(boxes.shape[:-1])
    if K < 2:
        return out
    area = (boxes[..., 2] - boxes[..., 0]) * (boxes[..., 3] - boxes[..., 1])
    for k in range(K):
        others = [m for m in range(K) if m != k]
        union = np.zeros(boxes.shape[:-2])
        for r in range(1, len(others) + 1):
            sign = 1.0 if r % 2 else -1.0
            for subset in combinations(others, r):
                idx = (k,) + subset
                sel = boxes[..., idx, :]
                w = sel[..., 2].min(axis=-1) - sel[..., 0].max(axis=-1)
                h = sel[..., 3].min(axis=-1) - sel[..., 1].max(axis=-1)
                on = present[..., list(subset)].all(axis=-1)
                union += sign * np.where(on & (w > 0) & (h > 0), w * h, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(area[..., k] > 0, union / area[..., k], 0.0)
        out[..., k] = np.where(present[..., k], np.clip(frac, 0.0, 1.0), 0.0)
    return out


def scene_iou_batch(boxes: np.ndarray, present: np.ndarray) -> np.ndarray:
    """Scene IoU over the present boxes for every leading index of (..., K, 4)."""
    boxes = np.asarray(boxes, dtype=float)
    K = boxes.shape[-2]
    if K < 2:
        return np.zeros(boxes.shape[:-2])
    i, j = np.triu_indices(K, 1)
    a, b = boxes[..., i, :], boxes[..., j, :]
    w = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    h = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.where((w > 0) & (h > 0), w * h, 0.0)
    union = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1]) + (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1]) - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.clip(np.where(union > 0, inter / union, 0.0), 0.0, 1.0)
    pair = present[..., i] & present[..., j]
    n = pair.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(n > 0, np.where(pair, iou, 0.0).sum(axis=-1) / n, 0.0)


def _project(Ps: np.ndarray, X: np.ndarray, expansion: float):
    X = np.asarray(X, dtype=float)
    lead, (K, J) = X.shape[:-3], X.shape[-3:-1]
    pts = np.swapaxes(X.reshape(lead + (1, K * J, 3)), -1, -2)  # (..., 1, 3, KJ)
    h = Ps[:, :, :3] @ pts + Ps[:, :, 3:]  # (..., N, 3, KJ)
    h = h.reshape(lead + (len(Ps), 3, K, J))
    q = h[..., 2, :, :]
    good = q > EPS_DEPTH
    safe = np.where(good, q, 1.0)
    u = h[..., 0, :, :] / safe
    v = h[..., 1, :, :] / safe
    lo_u, hi_u = u.min(axis=-1), u.max(axis=-1)
    lo_v, hi_v = v.min(axis=-1), v.max(axis=-1)
    gu = 0.5 * expansion * (hi_u - lo_u)
    gv = 0.5 * expansion * (hi_v - lo_v)
    boxes = np.stack([lo_u - gu, lo_v - gv, hi_u + gu, hi_v + gv], axis=-1)
    return u, v, boxes, good.all(axis=-1)


def projected_boxes(Ps: np.ndarray, X: np.ndarray, expansion: float = DEFAULT_EXPANSION):
    """Project persons X (..., K, J, 3) through cameras Ps (N, 3, 4).

    Returns pixel joints (..., N, K, J, 2), expanded boxes (..., N, K, 4) and a
    mask (..., N, K) of persons whose joints are all in front of the camera.
    Boxes of masked-out persons are meaningless.
    """
    u, v, boxes, front = _project(np.asarray(Ps, dtype=float), X, expansion)
    return np.stack([u, v], axis=-1), boxes, front


def projected_scene_iou(
    Ps: np.ndarray, X: np.ndarray, expansion: float = DEFAULT_EXPANSION, present: np.ndarray | None = None
) -> np.ndarray:
    """Scene IoU (..., N) of persons X (..., K, J, 3) in each camera, over persons in front of it.

    ``present`` (..., K) optionally restricts the persons taken into account.
    """
    _, _, boxes, front = _project(np.asarray(Ps, dtype=float), X, expansion)
    if present is not None:
        front = front & np.asarray(present, dtype=bool)[..., None, :]
    return scene_iou_batch(boxes, front)
