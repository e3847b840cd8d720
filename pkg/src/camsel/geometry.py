"""Camera models, projection, epipolar geometry and weighted DLT triangulation.

World coordinates are millimetres, image coordinates pixels. Projection
matrices map homogeneous world points to homogeneous pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._kernels import dlt_null
from .errors import (
    DegenerateLine,
    DegenerateProjection,
    IdenticalCenters,
    InsufficientViews,
    NumericalDegeneracy,
)

EPS_DEPTH = 1e-6
EPS_HOMOG = 1e-9
EPS_SVD = 1e-12
EPS_CENTER = 1e-9
EPS_LINE = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class CameraModel:
    """A calibrated pinhole camera."""

    id: int
    P: np.ndarray
    width: int = 640
    height: int = 480

    def __post_init__(self):
        P = _frozen(self.P)
        if P.shape != (3, 4):
            raise ValueError(f"camera {self.id}: projection matrix must be 3x4, got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ValueError(f"camera {self.id}: projection matrix has non-finite entries")
        if np.linalg.matrix_rank(P) != 3:
            raise ValueError(f"camera {self.id}: projection matrix must have rank 3")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"camera {self.id}: image size must be positive")
        object.__setattr__(self, "P", P)

    @property
    def center(self) -> np.ndarray:
        """Homogeneous camera centre (unit 4-vector, right null vector of P)."""
        return camera_center(self.P)

    def __repr__(self) -> str:
        return f"CameraModel(id={self.id}, {self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class Pose3D:
    """J joints in world millimetres. ``valid`` marks joints that were reconstructed."""

    joints: np.ndarray
    person_id: int | None = None
    valid: np.ndarray | None = None

    def __post_init__(self):
        joints = _frozen(self.joints)
        if joints.ndim != 2 or joints.shape[1] != 3:
            raise ValueError(f"Pose3D joints must have shape (J, 3), got {joints.shape}")
        if self.valid is None:
            valid = _frozen(np.isfinite(joints).all(axis=1), dtype=bool)
        else:
            valid = _frozen(self.valid, dtype=bool)
            if valid.shape != (joints.shape[0],):
                raise ValueError("validity mask must have one entry per joint")
        if not np.all(np.isfinite(joints[valid])):
            raise ValueError("valid joints must have finite coordinates")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "valid", valid)

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]

    def translated(self, offset) -> Pose3D:
        return Pose3D(self.joints + np.asarray(offset, dtype=float), self.person_id, self.valid)


@dataclass(frozen=True, eq=False)
class Pose2D:
    """J joints in pixels with per-joint confidence in [0, 1]; zero confidence means missing."""

    joints: np.ndarray
    confidence: np.ndarray | None = None

    def __post_init__(self):
        joints = _frozen(self.joints)
        if joints.ndim != 2 or joints.shape[1] != 2:
            raise ValueError(f"Pose2D joints must have shape (J, 2), got {joints.shape}")
        if self.confidence is None:
            conf = np.ones(joints.shape[0])
        else:
            conf = np.array(self.confidence, dtype=float)
        if conf.shape != (joints.shape[0],):
            raise ValueError("confidence must have one entry per joint")
        if np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidences must lie in [0, 1]")
        conf = np.where(np.isfinite(joints).all(axis=1), conf, 0.0)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "confidence", _frozen(conf))

    @classmethod
    def trusted(cls, joints: np.ndarray, confidence: np.ndarray) -> Pose2D:
        """Skip validation; for simulator hot loops whose inputs are finite and well-shaped."""
        pose = object.__new__(cls)
        joints = joints.view()
        confidence = confidence.view()
        joints.flags.writeable = False
        confidence.flags.writeable = False
        object.__setattr__(pose, "joints", joints)
        object.__setattr__(pose, "confidence", confidence)
        return pose

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return self.confidence > 0


def camera_center(P: np.ndarray) -> np.ndarray:
    """Unit homogeneous centre; -M^-1 p4 for finite cameras, else the SVD null vector."""
    P = np.asarray(P, dtype=float)
    M = P[:, :3]
    if np.linalg.cond(M) < 1e12:
        c = np.append(-np.linalg.solve(M, P[:, 3]), 1.0)
    else:
        c = np.linalg.svd(P)[2][-1]
    return c / np.linalg.norm(c)


def look_at_camera(
    cam_id: int,
    position,
    target,
    focal: float = 500.0,
    width: int = 640,
    height: int = 480,
    up=(0.0, 0.0, 1.0),
) -> CameraModel:
    """Build K[R|t] for a camera at ``position`` aimed at ``target`` (z-up world)."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=float))
    if np.linalg.norm(right) < 1e-9:
        raise ValueError("camera forward direction is parallel to the up vector")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    K = np.array([[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]])
    Rt = np.hstack([R, (-R @ position)[:, None]])
    return CameraModel(cam_id, K @ Rt, width, height)


def project_points(P: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched projection without degeneracy checks.

    Returns pixel coordinates of shape ``X.shape[:-1] + (2,)`` and the
    homogeneous scale ``q`` for each point.
    """
    X = np.asarray(X, dtype=float)
    h = X @ P[:, :3].T + P[:, 3]
    q = h[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = h[..., :2] / q[..., None]
    return uv, q


def project(camera: CameraModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float).reshape(3)
    uv, q = project_points(camera.P, X)
    if not abs(q) > EPS_DEPTH:
        raise DegenerateProjection(
            f"point {X.tolist()} lies on the principal plane of camera {camera.id} (q={q:.3g})"
        )
    return uv


def project_pose(camera: CameraModel, pose: Pose3D) -> Pose2D:
    """Joint-wise projection; confidences are 1 for every joint."""
    uv, q = project_points(camera.P, pose.joints)
    bad = np.flatnonzero(~(np.abs(q) > EPS_DEPTH))
    if bad.size:
        j = int(bad[0])
        raise DegenerateProjection(f"joint {j} is not projectable into camera {camera.id}", joint=j)
    return Pose2D(uv, np.ones(pose.num_joints))


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _centers_coincide(ca: np.ndarray, cb: np.ndarray) -> bool:
    if abs(ca[3]) > EPS_HOMOG and abs(cb[3]) > EPS_HOMOG:
        xa, xb = ca[:3] / ca[3], cb[:3] / cb[3]
        # relative: centres at metre scale carry ~1e-12 relative rounding
        scale = max(1.0, np.linalg.norm(xa), np.linalg.norm(xb))
        return bool(np.linalg.norm(xa - xb) <= EPS_CENTER * scale)
    # at least one centre at infinity: compare directions
    s = np.linalg.svd(np.stack([ca, cb], axis=1), compute_uv=False)
    return bool(s[-1] <= EPS_CENTER)


def fundamental_matrix(a: CameraModel, b: CameraModel) -> np.ndarray:
    """F with x_b^T F x_a = 0, built as [e_b]_x P_b P_a^+."""
    ca = camera_center(a.P)
    cb = camera_center(b.P)
    if _centers_coincide(ca, cb):
        raise IdenticalCenters(f"cameras {a.id} and {b.id} share a centre")
    e_b = b.P @ ca
    F = _skew(e_b) @ b.P @ np.linalg.pinv(a.P)
    return F / np.linalg.norm(F)


def _homog(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def epipolar_distances(F: np.ndarray, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Vectorised symmetric epipolar distance; NaN where a line is degenerate."""
    ha = _homog(xa)
    hb = _homog(xb)
    lb = ha @ F.T  # lines in view b
    la = hb @ F  # lines in view a
    nb = np.hypot(lb[..., 0], lb[..., 1])
    na = np.hypot(la[..., 0], la[..., 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        db = np.abs(np.sum(lb * hb, axis=-1)) / nb
        da = np.abs(np.sum(la * ha, axis=-1)) / na
    d = 0.5 * (da + db)
    return np.where((nb > EPS_LINE) & (na > EPS_LINE), d, np.nan)


def epipolar_distance(a: CameraModel, b: CameraModel, x_a, x_b) -> float:
    """Mean of the two point-to-epipolar-line distances, in pixels."""
    F = fundamental_matrix(a, b)
    ha = _homog(np.asarray(x_a, dtype=float).reshape(2))
    hb = _homog(np.asarray(x_b, dtype=float).reshape(2))
    lb = F @ ha
    la = F.T @ hb
    nb = np.hypot(lb[0], lb[1])
    na = np.hypot(la[0], la[1])
    if nb <= EPS_LINE or na <= EPS_LINE:
        raise DegenerateLine(f"epipolar line between cameras {a.id} and {b.id} is undefined")
    return float(0.5 * abs(lb @ hb) / nb + 0.5 * abs(la @ ha) / na)


def weighted_design(Ps: np.ndarray, uv: np.ndarray, conf: np.ndarray) -> np.ndarray:
    """Stack the confidence-weighted DLT rows.

    Ps: (H, 3, 4), or (H, n, 3, 4) for per-point cameras; uv: (H, n, 2);
    conf: (H, n). Returns (n, 2H, 4). Each row u*p3 - p1 (resp. v*p3 - p2)
    is scaled by conf / ||row||.
    """
    Ps = np.asarray(Ps, dtype=float)
    if Ps.ndim == 3:
        Ps = Ps[:, None]
    uv = np.asarray(uv, dtype=float)
    conf = np.asarray(conf, dtype=float)
    r1 = uv[..., 0:1] * Ps[..., 2, :] - Ps[..., 0, :]  # (H, n, 4)
    r2 = uv[..., 1:2] * Ps[..., 2, :] - Ps[..., 1, :]
    rows = np.stack([r1, r2], axis=1)  # (H, 2, n, 4)
    norms = np.linalg.norm(rows, axis=-1)
    ok = (norms > 0) & np.isfinite(norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(ok, conf[:, None, :] / norms, 0.0)
    rows = np.where(ok[..., None], rows, 0.0) * w[..., None]
    H, _, n, _ = rows.shape
    return rows.transpose(2, 0, 1, 3).reshape(n, 2 * H, 4)


def normalizing_transform(Ps: np.ndarray) -> np.ndarray:
    """Similarity T (4, 4) taking a unit-scale frame centred on the cameras to world coordinates.

    Solving the DLT for T^-1 X keeps the homogeneous unknown well scaled;
    in raw millimetres its fourth coordinate is tiny and the algebraic
    minimiser can slide far along the rays.
    """
    C = np.array([camera_center(P) for P in np.asarray(Ps, dtype=float)])
    finite = np.abs(C[:, 3]) > EPS_CENTER
    T = np.eye(4)
    if finite.any():
        centres = C[finite, :3] / C[finite, 3:]
        c = centres.mean(axis=0)
        scale = np.linalg.norm(centres - c, axis=1).mean()
        T[:3, 3] = c
        if scale > EPS_CENTER:
            T[:3, :3] *= scale
    return T


def _dlt(Ps, uv, conf):
    Ps = np.asarray(Ps, dtype=float)
    conf = np.where(np.isfinite(np.asarray(uv, dtype=float)).all(axis=-1), conf, 0.0)
    uv = np.nan_to_num(np.asarray(uv, dtype=float))
    T = normalizing_transform(Ps)
    Yh, s_min, s_next, n_views = dlt_null(Ps @ T, uv, conf)
    return Yh, s_min, s_next, n_views, T


def triangulate_points(
    Ps: np.ndarray, uv: np.ndarray, conf: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched weighted DLT over n points seen by H cameras.

    ``Ps`` is (H, 3, 4), ``uv`` (H, n, 2) and ``conf`` (H, n). Returns
    (X, valid): X is (n, 3) with NaN rows where the point could not be
    reconstructed (fewer than two weighted views, ambiguous rays or a
    vanishing fourth coordinate).
    """
    Yh, s_min, s_next, n_views, T = _dlt(Ps, uv, conf)
    valid = (n_views >= 2) & (np.abs(Yh[:, 3]) > EPS_HOMOG) & (s_next - s_min > EPS_SVD)
    with np.errstate(divide="ignore", invalid="ignore"):
        X = Yh[:, :3] / Yh[:, 3:4] @ T[:3, :3].T + T[:3, 3]
    X[~valid] = np.nan
    return X, valid


def triangulate_joint(
    cams: Sequence[CameraModel], obs: Sequence, conf: Sequence[float]
) -> np.ndarray:
    """Triangulate one joint from >= 2 views with confidence weights."""
    if not (len(cams) == len(obs) == len(conf)):
        raise ValueError("cams, obs and conf must have equal length")
    conf = np.asarray(conf, dtype=float)
    if len(cams) < 2 or np.count_nonzero(conf > 0) < 2:
        raise InsufficientViews(f"need at least two weighted views, got {np.count_nonzero(conf > 0)}")
    Ps = np.stack([c.P for c in cams])
    uv = np.asarray(obs, dtype=float).reshape(len(cams), 1, 2)
    Yh, s_min, s_next, _, T = _dlt(Ps, uv, conf[:, None])
    if s_next[0] - s_min[0] <= EPS_SVD:
        raise NumericalDegeneracy("ray configuration is ambiguous (repeated smallest singular value)")
    if abs(Yh[0, 3]) <= EPS_HOMOG:
        raise NumericalDegeneracy("triangulated point lies at infinity")
    return Yh[0, :3] / Yh[0, 3] @ T[:3, :3].T + T[:3, 3]


def triangulate_pose(
    cams: Sequence[CameraModel], poses2d: Sequence[Pose2D], person_id: int | None = None
) -> Pose3D:
    """Joint-wise triangulation; joints that fail are flagged in ``valid``."""
    if len(cams) != len(poses2d):
        raise ValueError("one 2D pose per camera is required")
    if len(cams) < 2:
        raise InsufficientViews("a pose needs at least two views")
    Ps = np.stack([c.P for c in cams])
    uv = np.stack([p.joints for p in poses2d])
    conf = np.stack([p.confidence for p in poses2d])
    X, valid = triangulate_points(Ps, uv, conf)
    return Pose3D(X, person_id, valid)


def reprojection_error(cams: Iterable[CameraModel], X, obs) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.array([np.linalg.norm(project(c, X) - np.asarray(o, dtype=float)) for c, o in zip(cams, obs)])


def load_calibration(path: str | Path) -> list[CameraModel]:
    """Read a calibration file.

    One camera per non-comment line: ``id p00 p01 ... p23 width height``
    (12 row-major projection entries). ``#`` starts a comment.
    """
    cams = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 15:
            raise ValueError(f"{path}:{lineno}: expected 15 fields (id, 12 matrix entries, width, height), got {len(parts)}")
        try:
            cam_id = int(parts[0])
            P = np.array([float(v) for v in parts[1:13]]).reshape(3, 4)
            width, height = int(parts[13]), int(parts[14])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        cams.append(CameraModel(cam_id, P, width, height))
    ids = [c.id for c in cams]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate camera ids")
    return cams


def format_calibration(cams: Iterable[CameraModel]) -> str:
    lines = ["# id p00 p01 p02 p03 p10 p11 p12 p13 p20 p21 p22 p23 width height"]
    for c in cams:
        entries = " ".join(repr(float(v)) for v in c.P.ravel())
        lines.append(f"{c.id} {entries} {c.width} {c.height}")
    return "\n".join(lines) + "\n"
