import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from camsel.errors import NoValidJoints
from camsel.geometry import Pose2D, project_points
from camsel.occlusion import (
    BoundingBox,
    bbox_from_pose2d,
    covered_fraction,
    covered_fractions,
    pairwise_iou,
    projected_scene_iou,
    scene_iou,
    scene_iou_array,
    scene_iou_batch,
)
from camsel.sim.scene import TEMPLATE
from conftest import ring_rig

coord = st.floats(-500, 500, allow_nan=False)
size = st.floats(0.5, 300, allow_nan=False)


@st.composite
def boxes(draw, min_size=0, max_size=7):
    n = draw(st.integers(min_size, max_size))
    out = []
    for _ in range(n):
        x, y, w, h = draw(coord), draw(coord), draw(size), draw(size)
        out.append(BoundingBox(x, y, x + w, y + h))
    return out


def raster_cover(box, others):
    """Covered fraction by counting unit cells; exact for integer-aligned boxes."""
    x0, y0, x1, y1 = (int(v) for v in box)
    grid = np.zeros((x1 - x0, y1 - y0), dtype=bool)
    for o in others:
        a, b = max(int(o[0]), x0), min(int(o[2]), x1)
        c, d = max(int(o[1]), y0), min(int(o[3]), y1)
        if a < b and c < d:
            grid[a - x0:b - x0, c - y0:d - y0] = True
    return grid.mean()


def test_bbox_expansion_arithmetic():
    joints = np.array([[0.0, 0.0], [100.0, 200.0], [50.0, 20.0]])
    box = bbox_from_pose2d(Pose2D(joints))
    assert box.as_array() == pytest.approx([-5.0, -10.0, 105.0, 210.0])
    tight = bbox_from_pose2d(Pose2D(joints), expansion=0.0)
    assert tight.as_array() == pytest.approx([0.0, 0.0, 100.0, 200.0])


def test_bbox_degenerate_and_invalid():
    point = bbox_from_pose2d(Pose2D(np.tile([3.0, 4.0], (5, 1))))
    assert point.as_array() == pytest.approx([3.0, 4.0, 3.0, 4.0]) and point.area == 0.0
    with pytest.raises(NoValidJoints):
        bbox_from_pose2d(Pose2D(np.zeros((3, 2)), np.zeros(3)))


def test_bbox_ignores_invalid_joints():
    joints = np.array([[0.0, 0.0], [10.0, 10.0], [1000.0, 1000.0]])
    box = bbox_from_pose2d(Pose2D(joints, [1.0, 1.0, 0.0]), expansion=0.0)
    assert box.as_array() == pytest.approx([0, 0, 10, 10])


def test_pairwise_iou_examples():
    unit = BoundingBox(0, 0, 1, 1)
    assert pairwise_iou(unit, unit) == 1.0
    assert pairwise_iou(unit, BoundingBox(2, 2, 3, 3)) == 0.0
    assert pairwise_iou(unit, BoundingBox(0.5, 0, 1.5, 1)) == pytest.approx(1 / 3)
    point = BoundingBox(1, 1, 1, 1)
    assert pairwise_iou(point, point) == 0.0


def test_scene_iou_examples():
    unit = BoundingBox(0, 0, 1, 1)
    assert scene_iou([]) == 0.0
    assert scene_iou([unit]) == 0.0
    assert scene_iou([unit] * 4) == 1.0
    trio = [unit, BoundingBox(0.5, 0, 1.5, 1), BoundingBox(5, 5, 6, 6)]
    assert scene_iou(trio) == pytest.approx(1 / 9)


def test_malformed_box():
    with pytest.raises(ValueError):
        BoundingBox(1, 0, 0, 1)


@settings(max_examples=200, deadline=None)
@given(boxes())
def test_scene_iou_in_unit_interval(bs):
    v = scene_iou(bs)
    assert 0.0 <= v <= 1.0


@settings(max_examples=200, deadline=None)
@given(boxes(), coord, coord)
def test_scene_iou_translation_invariant(bs, dx, dy):
    assert scene_iou([b.translated(dx, dy) for b in bs]) == pytest.approx(scene_iou(bs), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(boxes(), st.randoms(use_true_random=False))
def test_scene_iou_permutation_invariant(bs, rnd):
    shuffled = list(bs)
    rnd.shuffle(shuffled)
    assert scene_iou(shuffled) == pytest.approx(scene_iou(bs), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(boxes(min_size=2))
def test_adding_disjoint_box_lowers_positive_score(bs):
    before = scene_iou(bs)
    assume(before > 0)
    far = BoundingBox(10_000, 10_000, 10_001, 10_001)
    assert scene_iou(bs + [far]) < before


@settings(max_examples=200, deadline=None)
@given(boxes())
def test_vectorised_scene_iou_matches_objects(bs):
    arr = np.array([b.as_array() for b in bs]).reshape(-1, 4)
    assert scene_iou_array(arr) == pytest.approx(scene_iou(bs), abs=1e-12)
    present = np.ones(len(bs), dtype=bool)
    assert scene_iou_batch(arr, present) == pytest.approx(scene_iou(bs), abs=1e-12)


def test_scene_iou_batch_respects_presence(rng):
    arr = np.concatenate([rng.uniform(0, 50, (6, 2)), rng.uniform(60, 120, (6, 2))], axis=1)
    present = np.array([1, 0, 1, 1, 0, 1], dtype=bool)
    objs = [BoundingBox(*b) for b in arr[present]]
    assert scene_iou_batch(arr, present) == pytest.approx(scene_iou(objs), abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_covered_fraction_matches_raster(seed, K):
    rng = np.random.default_rng(seed)
    lo = rng.integers(0, 40, (K, 2))
    hi = lo + rng.integers(1, 30, (K, 2))
    arr = np.concatenate([lo, hi], axis=1).astype(float)
    present = rng.random(K) < 0.8
    fr = covered_fractions(arr, present)
    for k in range(K):
        others = arr[[m for m in range(K) if m != k and present[m]]]
        expected = raster_cover(arr[k], others) if present[k] else 0.0
        assert fr[k] == pytest.approx(expected, abs=1e-12)
        if present[k]:
            assert covered_fraction(arr[k], others) == pytest.approx(expected, abs=1e-12)


def test_projected_scene_iou_matches_pipeline(rng):
    cams = ring_rig(5)
    X = np.stack([TEMPLATE + [x, y, 0] for x, y in rng.uniform(-800, 800, (4, 2))])
    got = projected_scene_iou(np.stack([c.P for c in cams]), X)
    for n, cam in enumerate(cams):
        uv, _ = project_points(cam.P, X)
        expected = scene_iou([bbox_from_pose2d(Pose2D(p)) for p in uv])
        assert got[n] == pytest.approx(expected, abs=1e-12)
