"""Brute-force oracle suites behind the ``verify`` command."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import Pose2D, look_at_camera, project_points, triangulate_points
from .matching import ViewDetections, greedy_cross_view_match
from .occlusion import BoundingBox, pairwise_iou, scene_iou_array
from .scheduler import SchedulerConfig, SchedulerState, brute_force_select, select_cameras
from .sim.scene import TEMPLATE


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    checked: int
    detail: str


def random_rig(rng: np.random.Generator, n: int, radius=(3000.0, 6000.0)) -> list:
    """``n`` cameras on a ring around the origin, at random azimuths, heights and distances."""
    cams = []
    az = np.sort(rng.uniform(0, 2 * np.pi, n))
    for k, a in enumerate(az):
        r = rng.uniform(*radius)
        pos = (r * np.cos(a), r * np.sin(a), rng.uniform(1000.0, 3500.0))
        cams.append(look_at_camera(k, pos, (0.0, 0.0, 900.0), rng.uniform(400.0, 900.0), 1280, 720))
    return cams


def scheduler_suite(instances: int = 10_000, max_cameras: int = 8, seed: int = 0) -> SuiteResult:
    """Greedy C-smallest selection against exhaustive C-subset search."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(instances):
        N = int(rng.integers(1, max_cameras + 1))
        C = int(rng.integers(1, N + 1))
        cfg = SchedulerConfig(N, C, float(rng.choice([0.0, 1.0, 50.0, rng.uniform(0, 100)])), (1.0,))
        # coarse grids make ties common, which is where tie-breaking rules can differ
        iou = rng.integers(0, 5, N) / 4.0 if rng.random() < 0.3 else rng.random(N)
        q = rng.integers(0, 4, N).astype(float) if rng.random() < 0.3 else rng.uniform(0, 20, N)
        state = SchedulerState(q)
        if not np.array_equal(select_cameras(iou, state, cfg).s, brute_force_select(iou, state, cfg).s):
            bad += 1
    return SuiteResult("scheduler", bad == 0, instances, f"{bad} mismatches")


def triangulation_suite(configs: int = 1000, tol_mm: float = 1e-6, seed: int = 0) -> SuiteResult:
    """Noiseless multi-view points must be recovered to ``tol_mm``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(configs):
        cams = random_rig(rng, int(rng.integers(2, 7)))
        Ps = np.stack([c.P for c in cams])
        X = rng.uniform([-1500, -1500, 0], [1500, 1500, 1800], size=(1, 3))
        uv = np.stack([project_points(P, X)[0] for P in Ps])
        Y, valid = triangulate_points(Ps, uv, np.ones((len(cams), 1)))
        err = float(np.abs(Y - X).max()) if valid.all() else np.inf
        worst = max(worst, err)
    return SuiteResult("triangulation", bool(worst < tol_mm), configs, f"worst error {worst:.3g} mm")


def scene_iou_suite(cases: int = 2000, seed: int = 0) -> SuiteResult:
    """Vectorised scene IoU against the pairwise box-object definition."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        K = int(rng.integers(0, 7))
        lo = rng.uniform(0, 100, (K, 2))
        hi = lo + rng.uniform(0.5, 60, (K, 2))
        boxes = np.concatenate([lo, hi], axis=1)
        objs = [BoundingBox(*b) for b in boxes]
        pairs = [pairwise_iou(a, b) for a, b in combinations(objs, 2)]
        ref = sum(pairs) / len(pairs) if pairs else 0.0
        worst = max(worst, abs(scene_iou_array(boxes) - ref))
    return SuiteResult("scene_iou", bool(worst < 1e-12), cases, f"worst difference {worst:.3g}")


def matching_suite(scenes: int = 200, seed: int = 0) -> SuiteResult:
    """Noiseless, well-separated persons must be grouped exactly by identity."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(scenes):
        cams = random_rig(rng, int(rng.integers(2, 6)))
        P = int(rng.integers(1, 5))
        ang = rng.uniform(0, 2 * np.pi) + 2 * np.pi * np.arange(P) / P
        roots = 1200.0 * np.stack([np.cos(ang), np.sin(ang), np.zeros(P)], axis=1)
        people = roots[:, None] + TEMPLATE[None]
        views = []
        truth = []
        for cam in cams:
            order = rng.permutation(P)
            uv, _ = project_points(cam.P, people[order])
            views.append(ViewDetections(cam, [Pose2D(p) for p in uv]))
            truth.append(order)
        cands = greedy_cross_view_match(views, threshold=25.0)
        pure = all(len({int(truth[cid][idx]) for cid, idx in c.sources.items()}) == 1 for c in cands)
        bad += not (pure and len(cands) == P and all(len(c) == len(cams) for c in cands))
    return SuiteResult("matching", bad == 0, scenes, f"{bad} scenes grouped wrongly")


SUITES = {
    "scheduler": scheduler_suite,
    "triangulation": triangulation_suite,
    "scene_iou": scene_iou_suite,
    "matching": matching_suite,
}


def run_all(quick: bool = False) -> list[SuiteResult]:
    if quick:
        return [scheduler_suite(1000), triangulation_suite(100), scene_iou_suite(200), matching_suite(30)]
    return [fn() for fn in SUITES.values()]
