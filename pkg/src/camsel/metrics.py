"""3D accuracy metrics: MPJPE, PCP and AP@K, plus evaluation pairing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NoComparableJoints
from .geometry import Pose3D

# 14-joint skeleton:
# 0 r_ankle, 1 r_knee, 2 r_hip, 3 l_hip, 4 l_knee, 5 l_ankle, 6 r_wrist,
# 7 r_elbow, 8 r_shoulder, 9 l_shoulder, 10 l_elbow, 11 l_wrist, 12 neck, 13 head_top
JOINT_NAMES = (
    "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "r_wrist",
    "r_elbow", "r_shoulder", "l_shoulder", "l_elbow", "l_wrist", "neck", "head_top",
)
DEFAULT_LIMBS = (
    (0, 1), (1, 2), (3, 4), (4, 5),  # legs
    (6, 7), (7, 8), (9, 10), (10, 11),  # arms
    (12, 13),  # head
    (2, 3), (2, 8), (3, 9),  # pelvis and torso sides
    (8, 12), (9, 12),  # shoulders to neck
)
ROOT_JOINTS = (2, 3)
PCP_ALPHA = 0.5


@dataclass(frozen=True)
class MatchedPosePair:
    estimate: Pose3D
    truth: Pose3D
    person_id: int | None = None

    def __post_init__(self):
        if self.estimate.num_joints != self.truth.num_joints:
            raise ValueError("estimate and ground truth must have the same joints")


def root_position(pose: Pose3D, root_joints: Sequence[int] = ROOT_JOINTS) -> np.ndarray:
    """Mean of the valid root joints (hips by default); falls back to all valid joints."""
    idx = [j for j in root_joints if pose.valid[j]]
    if not idx:
        idx = np.flatnonzero(pose.valid)
    if len(idx) == 0:
        return np.full(3, np.nan)
    return pose.joints[idx].mean(axis=0)


def pair_poses(
    estimates: Sequence[Pose3D], truths: Sequence[Pose3D], root_joints: Sequence[int] = ROOT_JOINTS
) -> list[MatchedPosePair]:
    """One-to-one assignment minimising total root distance (Hungarian)."""
    if not estimates or not truths:
        return []
    re = np.array([root_position(p, root_joints) for p in estimates])
    rt = np.array([root_position(p, root_joints) for p in truths])
    cost = np.linalg.norm(re[:, None, :] - rt[None, :, :], axis=-1)
    cost = np.where(np.isfinite(cost), cost, 1e12)
    rows, cols = linear_sum_assignment(cost)
    return [
        MatchedPosePair(estimates[r], truths[c], truths[c].person_id)
        for r, c in zip(rows, cols)
        if cost[r, c] < 1e12
    ]


def mpjpe(pair: MatchedPosePair) -> float:
    """Mean Euclidean joint error (mm) over joints valid in both poses."""
    mask = pair.estimate.valid & pair.truth.valid
    if not mask.any():
        raise NoComparableJoints("no joint is valid in both poses")
    d = pair.estimate.joints[mask] - pair.truth.joints[mask]
    return float(np.sqrt((d * d).sum(axis=1)).mean())


def pcp(pair: MatchedPosePair, limbs: Sequence[tuple[int, int]] = DEFAULT_LIMBS, alpha: float = PCP_ALPHA) -> float:
    """Percentage of limbs whose two estimated endpoints are within alpha * true limb length."""
    if not limbs:
        return 100.0
    est, gt = pair.estimate, pair.truth
    correct = 0
    for a, b in limbs:
        length = np.linalg.norm(gt.joints[a] - gt.joints[b])
        if not (est.valid[a] and est.valid[b]):
            continue
        ea = np.linalg.norm(est.joints[a] - gt.joints[a])
        eb = np.linalg.norm(est.joints[b] - gt.joints[b])
        if ea <= alpha * length and eb <= alpha * length:
            correct += 1
    return 100.0 * correct / len(limbs)


def _safe_mpjpe(est: Pose3D, gt: Pose3D) -> float:
    try:
        return mpjpe(MatchedPosePair(est, gt))
    except NoComparableJoints:
        return np.inf


def ap_k(estimates: Sequence[Pose3D], truths: Sequence[Pose3D], K: float) -> float:
    """Percent of ground-truth poses matched (greedy by MPJPE, one-to-one) with MPJPE < K."""
    if not truths:
        return 100.0
    if not estimates:
        return 0.0
    errs = np.array([[_safe_mpjpe(e, g) for g in truths] for e in estimates])
    hits = 0
    used_e: set[int] = set()
    used_g: set[int] = set()
    order = np.argsort(errs, axis=None, kind="stable")
    for flat in order:
        i, j = divmod(int(flat), len(truths))
        if i in used_e or j in used_g:
            continue
        used_e.add(i)
        used_g.add(j)
        if errs[i, j] < K:
            hits += 1
    return 100.0 * hits / len(truths)


def mpjpe_matrix(est: np.ndarray, est_valid: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """MPJPE between every estimate (E, J, 3) and every truth (P, J, 3); inf if no valid joint."""
    d = np.linalg.norm(est[:, None] - gt[None], axis=-1)  # (E, P, J)
    mask = np.broadcast_to(est_valid[:, None, :], d.shape)
    cnt = mask.sum(axis=-1)
    tot = np.where(mask, d, 0.0).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(cnt > 0, tot / cnt, np.inf)


def greedy_hits(errs: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """Greedy one-to-one matching by error; number of truths matched below each threshold."""
    hits = np.zeros(len(thresholds), dtype=int)
    if errs.size == 0:
        return hits
    E, P = errs.shape
    used_e = np.zeros(E, bool)
    used_g = np.zeros(P, bool)
    th = np.asarray(thresholds, dtype=float)
    for flat in np.argsort(errs, axis=None, kind="stable"):
        i, j = divmod(int(flat), P)
        if used_e[i] or used_g[j]:
            continue
        used_e[i] = used_g[j] = True
        hits += errs[i, j] < th
    return hits


def pcp_batch(est: np.ndarray, est_valid: np.ndarray, gt: np.ndarray,
              limbs: Sequence[tuple[int, int]] = DEFAULT_LIMBS, alpha: float = PCP_ALPHA) -> np.ndarray:
    """PCP (percent) for paired poses est[i] vs gt[i]."""
    if len(est) == 0:
        return np.zeros(0)
    a = np.array([l[0] for l in limbs])
    b = np.array([l[1] for l in limbs])
    length = np.linalg.norm(gt[:, a] - gt[:, b], axis=-1)
    err = np.linalg.norm(est - gt, axis=-1)
    ok = est_valid[:, a] & est_valid[:, b] & (err[:, a] <= alpha * length) & (err[:, b] <= alpha * length)
    return 100.0 * ok.sum(axis=1) / len(limbs)


def greedy_hits_batch(errs: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """``greedy_hits`` for a stack of error matrices (B, E, P); returns (B, len(thresholds))."""
    errs = np.asarray(errs, dtype=float)
    B, E, P = errs.shape
    th = np.asarray(thresholds, dtype=float)
    hits = np.zeros((B, len(th)), dtype=int)
    avail = np.ones(errs.shape, dtype=bool)
    rows = np.arange(B)
    for _ in range(min(E, P)):
        m = np.where(avail, errs, np.inf).reshape(B, E * P)
        idx = m.argmin(axis=1)
        val = m[rows, idx]
        live = np.isfinite(val)
        if not live.any():
            break
        hits += live[:, None] & (val[:, None] < th)
        i, j = np.divmod(idx[live], P)
        avail[rows[live], i, :] = False
        avail[rows[live], :, j] = False
    return hits
