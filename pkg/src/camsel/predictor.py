"""Future 3D pose prediction and predicted per-camera occlusion.

Two predictors share one interface:

* ``motion-vector``: per-joint constant velocity from the last two slots.
* ``autoregressive``: a linear one-step map from the stacked last ``M`` poses
  to the next pose, fitted by ridge regression and rolled out ``tau`` times
  on its own outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import HistoryTooShort, SingularNormalEquations
from .geometry import CameraModel, Pose3D
from .occlusion import DEFAULT_EXPANSION, projected_scene_iou

MOTION_VECTOR = "motion-vector"
AUTOREGRESSIVE = "autoregressive"
KINDS = (MOTION_VECTOR, AUTOREGRESSIVE)
FORMAT_HEADER = "# camsel predictor v1"


@dataclass(frozen=True)
class PoseHistory:
    """Per-person pose tracks over consecutive slots, oldest first.

    ``tracks`` has shape (persons, slots, J, 3).
    """

    tracks: np.ndarray
    person_ids: tuple[int, ...] = ()
    slot_duration: float = 1.0 / 30.0

    def __post_init__(self):
        tracks = np.array(self.tracks, dtype=float)
        if tracks.ndim != 4 or tracks.shape[-1] != 3:
            raise ValueError(f"tracks must have shape (persons, slots, J, 3), got {tracks.shape}")
        if not np.all(np.isfinite(tracks)):
            raise ValueError("history coordinates must be finite")
        tracks.flags.writeable = False
        object.__setattr__(self, "tracks", tracks)
        ids = tuple(self.person_ids) if len(self.person_ids) else tuple(range(tracks.shape[0]))
        if len(ids) != tracks.shape[0]:
            raise ValueError("one person id per track is required")
        object.__setattr__(self, "person_ids", ids)

    @classmethod
    def from_poses(cls, per_person: Sequence[Sequence[Pose3D]], person_ids=(), slot_duration=1.0 / 30.0):
        tracks = np.array([[p.joints for p in seq] for seq in per_person], dtype=float)
        return cls(tracks, tuple(person_ids), slot_duration)

    @property
    def num_persons(self) -> int:
        return self.tracks.shape[0]

    @property
    def length(self) -> int:
        return self.tracks.shape[1]

    @property
    def num_joints(self) -> int:
        return self.tracks.shape[2]


@dataclass(frozen=True, eq=False)
class PredictorModel:
    kind: str
    M: int
    J: int
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}; expected one of {KINDS}")
        if self.M < 1 or self.J < 1:
            raise ValueError("M and J must be positive")
        params = np.array(self.params, dtype=float).ravel()
        if params.size != self.expected_size():
            raise ValueError(
                f"{self.kind} predictor with M={self.M}, J={self.J} needs {self.expected_size()} parameters, got {params.size}"
            )
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    def expected_size(self) -> int:
        if self.kind == MOTION_VECTOR:
            return 0
        return (3 * self.J) * (3 * self.J * self.M)

    @property
    def weights(self) -> np.ndarray:
        """One-step map of shape (3J, 3JM); input is the stacked history, oldest first."""
        return self.params.reshape(3 * self.J, 3 * self.J * self.M)

    @property
    def min_history(self) -> int:
        return 2 if self.kind == MOTION_VECTOR else self.M

    @classmethod
    def motion_vector(cls, J: int, M: int = 2) -> PredictorModel:
        return cls(MOTION_VECTOR, M, J)


def rollout(weights: np.ndarray, tracks: np.ndarray, tau: int) -> np.ndarray:
    """Apply the one-step map ``tau`` times, feeding each output back.

    tracks: (P, M, J, 3) -> (P, tau, J, 3) predictions for slots t+1..t+tau.
    """
    P, M, J, _ = tracks.shape
    window = tracks.reshape(P, M * J * 3)
    out = np.empty((P, tau, J * 3))
    for step in range(tau):
        nxt = (window[:, None, :] @ weights.T)[:, 0]  # row by row, so batch size cannot change rounding
        out[:, step] = nxt
        window = np.concatenate([window[:, J * 3:], nxt], axis=1)
    return out.reshape(P, tau, J, 3)


def predict_array(model: PredictorModel, tracks: np.ndarray, tau: int) -> np.ndarray:
    """Array form of :func:`predict`: (P, L, J, 3) history -> (P, J, 3) at t+tau."""
    if tau < 1:
        raise ValueError("tau must be a positive integer")
    if tracks.shape[1] < model.min_history:
        raise HistoryTooShort(
            f"{model.kind} predictor needs {model.min_history} slots of history, got {tracks.shape[1]}"
        )
    if tracks.shape[2] != model.J:
        raise ValueError(f"history has {tracks.shape[2]} joints, model expects {model.J}")
    if model.kind == MOTION_VECTOR:
        last = tracks[:, -1]
        return last + tau * (last - tracks[:, -2])
    return rollout(model.weights, tracks[:, -model.M:], tau)[:, -1]


def predict(model: PredictorModel, history: PoseHistory, tau: int) -> list[Pose3D]:
    """Predict every tracked person's pose ``tau`` slots after the last history slot."""
    X = predict_array(model, history.tracks, tau)
    return [Pose3D(X[i], pid) for i, pid in enumerate(history.person_ids)]


def predict_tracks(model: PredictorModel, tracks: Sequence[np.ndarray], tau: int) -> np.ndarray:
    """Predict variable-length tracks; those shorter than the model needs are held static."""
    if not tracks:
        return np.empty((0, model.J, 3))
    out = np.empty((len(tracks), model.J, 3))
    ready = [i for i, tr in enumerate(tracks) if len(tr) >= model.min_history]
    for i, tr in enumerate(tracks):
        if i not in ready:
            out[i] = tr[-1]
    if ready:
        need = model.min_history
        stacked = np.stack([np.asarray(tracks[i])[-need:] for i in ready])
        out[ready] = predict_array(model, stacked, tau)
    return out


def make_training_pairs(sequences: Iterable[np.ndarray], M: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding one-step (history, next) pairs from (slots, J, 3) sequences."""
    xs, ys = [], []
    for seq in sequences:
        seq = np.asarray(seq, dtype=float)
        T, J, _ = seq.shape
        if T <= M:
            continue
        flat = seq.reshape(T, J * 3)
        idx = np.arange(M)[None, :] + np.arange(T - M)[:, None]
        xs.append(flat[idx].reshape(T - M, M * J * 3))
        ys.append(flat[M:])
    if not xs:
        raise ValueError("no sequence is longer than the history length")
    return np.concatenate(xs), np.concatenate(ys)


def ridge_fit(X: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    """Solve min ||X W^T - Y||^2 + lam ||W||^2 via the SVD of X; returns W."""
    if lam < 0:
        raise ValueError("ridge penalty must be nonnegative")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    d = X.shape[1]
    if lam == 0:
        tol = s.max(initial=0.0) * max(X.shape) * np.finfo(float).eps
        if len(s) < d or s.min(initial=0.0) <= tol:
            raise SingularNormalEquations("design matrix is rank deficient; use a positive ridge penalty")
        filt = 1.0 / s
    else:
        filt = s / (s * s + lam)
    return ((Vt.T * filt) @ (U.T @ Y)).T


def train_autoregressive(
    dataset: Sequence[np.ndarray] | Sequence[PoseHistory],
    tau: int,
    lam: float = 1e-4,
    M: int = 5,
    input_noise: float = 0.0,
    seed: int = 0,
) -> tuple[PredictorModel, float]:
    """Fit the autoregressive predictor.

    ``dataset`` holds sequences of at least ``M + tau`` slots, either as
    arrays of shape (slots, J, 3) or as :class:`PoseHistory` objects whose
    tracks are split per person. Every sliding one-step pair inside the
    sequences is used. With ``input_noise`` > 0 the histories (not the
    targets) get Gaussian noise of that std (mm), which teaches the map to
    smooth noisy tracked estimates. Returns the model and the mean tau-step
    rollout loss on the clean sequences (summed squared error over the tau
    predicted poses, per window).
    """
    seqs = _as_sequences(dataset)
    if not seqs:
        raise ValueError("training dataset is empty")
    J = seqs[0].shape[1]
    if any(s.shape[1:] != (J, 3) for s in seqs):
        raise ValueError("all training sequences must share the joint count")
    if any(len(s) < M + tau for s in seqs):
        raise ValueError(f"every training sequence needs at least M + tau = {M + tau} slots")
    if input_noise < 0:
        raise ValueError("input noise must be nonnegative")
    X, Y = make_training_pairs(seqs, M)
    if input_noise > 0:
        X = X + input_noise * np.random.default_rng(seed).standard_normal(X.shape)
    W = ridge_fit(X, Y, lam)
    model = PredictorModel(AUTOREGRESSIVE, M, J, W.ravel())
    return model, rollout_loss(model, seqs, tau)


def _as_sequences(dataset) -> list[np.ndarray]:
    seqs = []
    for item in dataset:
        if isinstance(item, PoseHistory):
            seqs.extend(np.asarray(tr) for tr in item.tracks)
        else:
            seqs.append(np.asarray(item, dtype=float))
    return seqs


def rollout_loss(model: PredictorModel, sequences: Sequence[np.ndarray], tau: int) -> float:
    """Mean over windows of sum_{l=1..tau} ||X_hat^{t+l} - X^{t+l}||^2."""
    total = 0.0
    count = 0
    M = model.min_history
    for seq in sequences:
        T = len(seq)
        n = T - M - tau + 1
        if n <= 0:
            continue
        idx = np.arange(M)[None, :] + np.arange(n)[:, None]
        hist = seq[idx]  # (n, M, J, 3)
        if model.kind == MOTION_VECTOR:
            steps = np.arange(1, tau + 1)[None, :, None, None]
            pred = hist[:, -1:] + steps * (hist[:, -1:] - hist[:, -2:-1])
        else:
            pred = rollout(model.weights, hist, tau)
        fut = seq[np.arange(tau)[None, :] + (np.arange(n) + M)[:, None]]
        total += float(((pred - fut) ** 2).sum())
        count += n
    if count == 0:
        raise ValueError("no sequence is long enough to score a rollout")
    return total / count


def save_model(model: PredictorModel, path: str | Path) -> None:
    lines = [FORMAT_HEADER, f"kind {model.kind}", f"M {model.M}", f"J {model.J}", f"params {model.params.size}"]
    lines.extend(repr(float(v)) for v in model.params)
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> PredictorModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ValueError(f"{path}: not a predictor file (missing header {FORMAT_HEADER!r})")
    meta = {}
    for line in lines[1:5]:
        key, _, value = line.partition(" ")
        meta[key] = value.strip()
    for key in ("kind", "M", "J", "params"):
        if key not in meta:
            raise ValueError(f"{path}: missing field {key!r}")
    values = np.array([float(v) for v in lines[5:] if v.strip()])
    if values.size != int(meta["params"]):
        raise ValueError(f"{path}: expected {meta['params']} parameters, found {values.size}")
    return PredictorModel(meta["kind"], int(meta["M"]), int(meta["J"]), values)


def iou_per_camera(
    poses: np.ndarray, cameras: Sequence[CameraModel], expansion: float = DEFAULT_EXPANSION
) -> np.ndarray:
    """Scene IoU in every camera for poses (..., K, J, 3); persons not fully in front of a camera are left out."""
    return projected_scene_iou(np.stack([c.P for c in cameras]), poses, expansion)


def predicted_occlusions(
    model: PredictorModel,
    history: PoseHistory,
    cameras: Sequence[CameraModel],
    tau: int,
    expansion: float = DEFAULT_EXPANSION,
) -> np.ndarray:
    """Predict poses at t+tau, project them and score each camera's scene IoU."""
    X = predict_array(model, history.tracks, tau)
    return iou_per_camera(X, cameras, expansion)
