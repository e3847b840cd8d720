"""Cross-view association of 2D poses by iterative greedy epipolar matching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._kernels import greedy_associate
from .geometry import EPS_LINE, CameraModel, Pose2D, epipolar_distances, fundamental_matrix

DEFAULT_THRESHOLD = 25.0


@dataclass(frozen=True)
class ViewDetections:
    camera: CameraModel
    poses: tuple[Pose2D, ...]

    def __init__(self, camera: CameraModel, poses: Sequence[Pose2D]):
        object.__setattr__(self, "camera", camera)
        object.__setattr__(self, "poses", tuple(poses))


@dataclass
class PersonCandidate:
    """Poses believed to show one person, at most one per camera (keyed by camera id)."""

    members: dict[int, Pose2D] = field(default_factory=dict)
    cameras: dict[int, CameraModel] = field(default_factory=dict)
    # index of each member pose within its view's detection list
    sources: dict[int, int] = field(default_factory=dict)

    def add(self, camera: CameraModel, pose: Pose2D, index: int = -1) -> None:
        if camera.id in self.members:
            raise ValueError(f"candidate already has a pose from camera {camera.id}")
        self.members[camera.id] = pose
        self.cameras[camera.id] = camera
        self.sources[camera.id] = index

    def __len__(self) -> int:
        return len(self.members)


class FundamentalCache:
    """Memoises fundamental matrices per ordered camera pair."""

    def __init__(self):
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def get(self, a: CameraModel, b: CameraModel) -> np.ndarray:
        key = (a.id, b.id)
        F = self._cache.get(key)
        if F is None:
            F = fundamental_matrix(a, b)
            self._cache[key] = F
            self._cache[(b.id, a.id)] = F.T
        return F


def match_cost(
    candidate: PersonCandidate,
    pose: Pose2D,
    camera: CameraModel,
    cache: FundamentalCache | None = None,
) -> float:
    """Mean symmetric epipolar distance over (member view, shared valid joint) pairs.

    Returns ``math.inf`` when no valid joint pair exists.
    """
    if not candidate.members:
        raise ValueError("candidate has no members")
    cache = cache or FundamentalCache()
    total = 0.0
    count = 0
    for cam_id, member in candidate.members.items():
        other = candidate.cameras[cam_id]
        mask = member.valid & pose.valid
        if not mask.any():
            continue
        F = cache.get(other, camera)
        d = epipolar_distances(F, member.joints[mask], pose.joints[mask])
        d = d[np.isfinite(d)]
        total += float(d.sum())
        count += d.size
    if count == 0:
        return math.inf
    return total / count


def view_costs(
    candidates: Sequence[PersonCandidate], view: ViewDetections, cache: FundamentalCache
) -> np.ndarray:
    """Cost matrix (poses in ``view`` x candidates); same values as :func:`match_cost`."""
    n_pose, n_cand = len(view.poses), len(candidates)
    if n_pose == 0 or n_cand == 0:
        return np.full((n_pose, n_cand), math.inf)
    owner = []
    Fs = []
    xa = []
    va = []
    for k, cand in enumerate(candidates):
        for cam_id, member in cand.members.items():
            owner.append(k)
            Fs.append(cache.get(cand.cameras[cam_id], view.camera))
            xa.append(member.joints)
            va.append(member.valid)
    F = np.stack(Fs)
    xa = np.stack(xa)
    xa = np.concatenate([xa, np.ones(xa.shape[:-1] + (1,))], axis=-1)  # (m, J, 3)
    xb = np.stack([p.joints for p in view.poses])
    xb = np.concatenate([xb, np.ones(xb.shape[:-1] + (1,))], axis=-1)  # (i, J, 3)
    vb = np.stack([p.valid for p in view.poses])
    lb = np.einsum("mkl,mjl->mjk", F, xa)  # epipolar lines in this view
    la = np.einsum("mkl,ijk->imjl", F, xb)  # epipolar lines in member views
    num = np.abs(np.einsum("mjk,ijk->imj", lb, xb))
    nb = np.hypot(lb[..., 0], lb[..., 1])[None]
    na = np.hypot(la[..., 0], la[..., 1])
    ok = vb[:, None, :] & np.stack(va)[None] & (nb > EPS_LINE) & (na > EPS_LINE)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(ok, 0.5 * num * (1.0 / nb + 1.0 / na), 0.0)
    onehot = np.zeros((len(owner), n_cand))
    onehot[np.arange(len(owner)), owner] = 1.0
    sums = d.sum(axis=2) @ onehot
    counts = ok.sum(axis=2) @ onehot
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(counts > 0, sums / counts, math.inf)


def pair_tables(
    F: np.ndarray, xa: np.ndarray, va: np.ndarray, xb: np.ndarray, vb: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Summed symmetric epipolar distance and joint count for every pose pair of two views.

    ``F`` (..., 3, 3) maps view-a points to view-b lines; ``xa`` (..., I, J, 2) and
    ``xb`` (..., K, J, 2) are pixel joints with validity ``va``/``vb``. Returns
    (..., I, K) sums and counts over the joints valid in both poses with
    well-defined epipolar lines.
    """
    ha = np.concatenate([xa, np.ones(xa.shape[:-1] + (1,))], axis=-1)
    hb = np.concatenate([xb, np.ones(xb.shape[:-1] + (1,))], axis=-1)
    lb = np.einsum("...kl,...ijl->...ijk", F, ha)  # lines in view b, (..., I, J, 3)
    la = np.einsum("...kl,...mjk->...mjl", F, hb)  # lines in view a, (..., K, J, 3)
    num = np.abs(np.einsum("...ijc,...kjc->...ikj", lb, hb))
    nb = np.hypot(lb[..., 0], lb[..., 1])[..., :, None, :]
    na = np.hypot(la[..., 0], la[..., 1])[..., None, :, :]
    ok = va[..., :, None, :] & vb[..., None, :, :] & (nb > EPS_LINE) & (na > EPS_LINE)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(ok, 0.5 * num * (1.0 / nb + 1.0 / na), 0.0)
    return d.sum(axis=-1), ok.sum(axis=-1)


def greedy_cross_view_match(
    views: Sequence[ViewDetections],
    threshold: float = DEFAULT_THRESHOLD,
    cache: FundamentalCache | None = None,
) -> list[PersonCandidate]:
    """Group 2D poses across views into person candidates.

    The view with the most detections (lowest camera id on ties) seeds the
    candidate list; the other views follow in ascending camera id. Within a
    view, (pose, candidate) pairs are accepted greedily by ascending cost
    while the cost is below ``threshold``; leftover poses open new candidates.
    A candidate's cost is the mean symmetric epipolar distance over all
    (member, jointly valid joint) pairs, as in :func:`match_cost`.
    """
    views = [v for v in views if v.poses]
    if not views:
        return []
    cache = cache or FundamentalCache()
    V = len(views)
    K = max(len(v.poses) for v in views)
    J = views[0].poses[0].num_joints
    joints = np.zeros((V, K, J, 2))
    valid = np.zeros((V, K, J), dtype=bool)
    present = np.zeros((V, K), dtype=bool)
    for v, view in enumerate(views):
        for i, p in enumerate(view.poses):
            joints[v, i] = np.nan_to_num(p.joints)
            valid[v, i] = p.valid
            present[v, i] = True
    S = np.zeros((V, V, K, K))
    C = np.zeros((V, V, K, K))
    for a in range(V):
        for b in range(a + 1, V):
            F = cache.get(views[a].camera, views[b].camera)
            S[a, b], C[a, b] = pair_tables(F, joints[a], valid[a], joints[b], valid[b])
            S[b, a], C[b, a] = S[a, b].T, C[a, b].T
    keys = np.array([v.camera.id for v in views], dtype=np.int64)
    groups = greedy_associate(S, C, keys, present, float(threshold))
    out = []
    for g in groups:
        cand = PersonCandidate()
        for v in np.argsort(keys, kind="stable"):
            if g[v] >= 0:
                cand.add(views[v].camera, views[v].poses[g[v]], int(g[v]))
        out.append(cand)
    return out


def partition_cost(
    views: Sequence[ViewDetections], candidates: Sequence[PersonCandidate], cache: FundamentalCache | None = None
) -> float:
    """Sum over candidates of pairwise mean epipolar costs between their members."""
    cache = cache or FundamentalCache()
    total = 0.0
    for cand in candidates:
        ids = sorted(cand.members)
        for x, a in enumerate(ids):
            for b in ids[x + 1:]:
                single = PersonCandidate()
                single.add(cand.cameras[a], cand.members[a])
                total += match_cost(single, cand.members[b], cand.cameras[b], cache)
    return total
