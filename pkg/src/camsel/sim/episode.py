"""Time-slotted episode loop for every camera-selection policy.

Several seeds of one (policy, scenario) pair can run in lockstep: each
episode keeps its own random streams and state, and only the array work of
a block of slots is shared, so a seed's trace does not depend on its batch.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .. import metrics
from .._kernels import associate_slot
from ..geometry import CameraModel, triangulate_points
from ..matching import FundamentalCache
from ..occlusion import DEFAULT_EXPANSION, projected_scene_iou, scene_iou_array
from ..predictor import PredictorModel, iou_per_camera, predict_array, train_autoregressive
from ..scheduler import select_batch, update_batch
from .config import POLICIES, ScenarioConfig, scheduler_config
from .energy import slot_energy
from .observe import observe_batch
from .scene import TEMPLATE, generate_scene_sequence, root_trajectories

NOISE_CHUNK = 512
TRAINING_SEED_BASE = 1_000_003


@dataclass
class EpisodeTrace:
    """Per-slot record of one episode. Arrays are indexed [slot] or [slot, camera]."""

    policy: str
    seed: int
    slot_duration: float
    camera_ids: tuple[int, ...]
    persons: int
    warmup: int
    selection: np.ndarray
    predicted_iou: np.ndarray
    true_iou: np.ndarray
    energy_j: np.ndarray
    cumulative_j: np.ndarray
    queue: np.ndarray
    mpjpe_mm: np.ndarray
    pcp: np.ndarray
    ap_thresholds: tuple[float, ...]
    ap_hits: np.ndarray
    persons_matched: np.ndarray
    estimation_failed: np.ndarray
    reporting: np.ndarray
    ground_truth: np.ndarray | None = None  # kept only with details
    estimates: list = field(default_factory=list)
    candidates: list = field(default_factory=list)

    @property
    def slots(self) -> int:
        return self.selection.shape[0]

    def selection_frequency(self) -> np.ndarray:
        return self.selection.mean(axis=0)

    def selected_true_iou(self) -> np.ndarray:
        """Mean true IoU over the cameras selected in each slot (NaN when none)."""
        s = self.selection.astype(bool)
        cnt = s.sum(axis=1)
        tot = np.where(s, self.true_iou, 0.0).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(cnt > 0, tot / cnt, np.nan)

    def evaluation_window(self) -> slice:
        return slice(self.warmup, self.slots)

    def summary(self) -> dict:
        """Accuracy, failure and occlusion figures over the slots after warm-up."""
        w = self.evaluation_window()
        mp = self.mpjpe_mm[w]
        pc = self.pcp[w]
        sel = self.selected_true_iou()[w]
        truths = self.persons * (self.slots - self.warmup)
        ap = 100.0 * self.ap_hits[w].sum(axis=0) / max(truths, 1)
        out = {
            "mpjpe_mm": float(np.nanmean(mp)) if np.isfinite(mp).any() else float("nan"),
            "pcp": float(np.nanmean(pc)) if np.isfinite(pc).any() else float("nan"),
            "failure_rate": float(self.estimation_failed[w].mean()),
            "selected_iou": float(np.nanmean(sel)) if np.isfinite(sel).any() else float("nan"),
        }
        for k, v in zip(self.ap_thresholds, ap):
            out[f"ap_{k:g}"] = float(v)
        return out


def true_iou_series(scene: np.ndarray, cameras: list[CameraModel], expansion: float = DEFAULT_EXPANSION) -> np.ndarray:
    """Scene IoU of the ground-truth persons in every (slot, camera)."""
    out = np.zeros((len(scene), len(cameras)))
    for a in range(0, len(scene), NOISE_CHUNK):
        out[a:a + NOISE_CHUNK] = iou_per_camera(scene[a:a + NOISE_CHUNK], cameras, expansion)
    return out


def queue_series(selection: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    """Deficit queue after each slot: q <- max(q - E, 0) + s, starting from zero."""
    q = np.zeros(selection.shape[1])
    out = np.empty(selection.shape, dtype=float)
    for t, s in enumerate(selection):
        q = np.maximum(q - budgets, 0.0) + s
        out[t] = q
    return out


def training_sequences(cfg: ScenarioConfig, scenes: int | None = None, slots: int | None = None) -> list[np.ndarray]:
    """Per-person ground-truth sequences from scenes with seeds disjoint from evaluation seeds."""
    p = cfg.policy
    scenes = p.train_scenes if scenes is None else scenes
    slots = p.train_slots if slots is None else slots
    seqs = []
    for k in range(scenes):
        tcfg = cfg.with_updates(seed=TRAINING_SEED_BASE + k, slots=slots)
        scene = generate_scene_sequence(tcfg)
        seqs.extend(scene[:, i] for i in range(scene.shape[1]))
    return seqs


_PREDICTORS: dict[tuple, PredictorModel] = {}


def default_predictor(cfg: ScenarioConfig) -> PredictorModel:
    """Autoregressive predictor trained on this scenario family (cached per process)."""
    p = cfg.policy
    key = (cfg.motion, cfg.arena, cfg.slot_duration, cfg.tau, cfg.history, p.ridge_lambda,
           p.train_scenes, p.train_slots, p.train_noise, cfg.persons)
    if key not in _PREDICTORS:
        seqs = training_sequences(cfg)
        _PREDICTORS[key], _ = train_autoregressive(
            seqs, cfg.tau, p.ridge_lambda, cfg.history, input_noise=p.train_noise, seed=TRAINING_SEED_BASE
        )
    return _PREDICTORS[key]


class IndependentCamera:
    """A camera that decides alone, from its own past 2D boxes, whether to run 2D estimation."""

    def __init__(self, camera: CameraModel, theta: float, expansion: float = DEFAULT_EXPANSION):
        self.camera = camera
        self.theta = theta
        self.expansion = expansion
        self.history: deque = deque(maxlen=2)

    def record(self, slot: int, person_ids, uv: np.ndarray) -> None:
        """Store the boxes of the persons (labels ``person_ids``, pixels (K, J, 2)) seen at ``slot``."""
        lo, hi = uv.min(axis=1), uv.max(axis=1)
        g = 0.5 * self.expansion * (hi - lo)
        boxes = np.concatenate([lo - g, hi + g], axis=1)
        self.history.append((slot, dict(zip(np.asarray(person_ids).tolist(), boxes))))

    def predicted_iou(self, target: int) -> float:
        """Constant-velocity extrapolation of each tracked box to ``target``."""
        if not self.history:
            return 0.0
        t2, b2 = self.history[-1]
        prev = self.history[0] if len(self.history) == 2 else None
        out = []
        for pid, box in b2.items():
            if prev is not None and pid in prev[1] and t2 > prev[0]:
                v = (box - prev[1][pid]) / (t2 - prev[0])
                box = box + v * (target - t2)
            x0, x1 = sorted((box[0], box[2]))
            y0, y1 = sorted((box[1], box[3]))
            out.append([x0, y0, x1, y1])
        return scene_iou_array(np.array(out)) if len(out) >= 2 else 0.0

    def decide(self, target: int) -> tuple[bool, float]:
        iou = self.predicted_iou(target)
        return iou < self.theta, iou


class _ObservationStream:
    """One episode's observations of every camera, drawn chunk by chunk.

    Noise is drawn for all cameras, selected or not, so the random stream
    does not depend on the policy and policies are compared on common noise.
    """

    def __init__(self, cfg: ScenarioConfig, cams: list[CameraModel], cache: FundamentalCache):
        self.cfg = cfg
        self.cams = cams
        self.cache = cache
        self.roots = root_trajectories(cfg)
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        self.keys = np.array([c.id for c in cams], dtype=np.int64)
        N = len(cams)
        self.Fs = np.zeros((N, N, 3, 3))
        for x in range(N):
            for y in range(N):
                if x != y:
                    self.Fs[x, y] = cache.get(cams[x], cams[y])
        self.start = -1

    def load(self, t: int) -> None:
        """Make the chunk containing slot ``t`` current (chunks are visited in order)."""
        a = (t // NOISE_CHUNK) * NOISE_CHUNK
        if a == self.start:
            return
        roots = self.roots[a:a + NOISE_CHUNK]
        L, P = roots.shape[:2]
        offset = np.zeros((L, P, 1, 3))
        offset[..., 0, :2] = roots
        self.scene = offset + TEMPLATE[None, None]  # same arithmetic as generate_scene_sequence
        J, N = TEMPLATE.shape[0], len(self.cams)
        noise = self.rng.standard_normal((L, N, P, J, 2))
        self.obs = observe_batch(self.cams, self.scene, noise, self.cfg.noise.sigma0, self.cfg.noise.kappa)
        self.conf = self.obs.confidence()
        self.rank = np.cumsum(self.obs.visible, axis=-1) - 1  # detection index of each visible person
        self.start = a

    def associate(self, t: int, selected: np.ndarray, threshold: float):
        """Greedy association among the cameras selected at slot ``t``.

        Returns the number of reporting cameras (those with a detection) and a
        table of candidates seen by at least two of them: member count, then
        the person label per camera (-1 when absent).
        """
        k = t - self.start
        return associate_slot(self.obs.uv[k], self.obs.visible[k], self.Fs, self.keys, selected, threshold)


def run_episode(
    policy: str,
    cfg: ScenarioConfig,
    predictor: PredictorModel | None = None,
    keep_details: bool = True,
) -> EpisodeTrace:
    """Simulate one episode of ``cfg.slots`` slots under ``policy``.

    Prediction-driven policies (E3POSE, E3POSE_MV, ID) use every camera for
    the first ``history + tau`` slots; afterwards the selection for slot
    t + tau is fixed at slot t. Slots are processed in blocks of at most tau,
    whose selections are all known when the block starts.
    """
    return run_episodes(policy, cfg, [cfg.seed], predictor, keep_details)[0]


def run_episodes(
    policy: str,
    cfg: ScenarioConfig,
    seeds: Sequence[int],
    predictor: PredictorModel | None = None,
    keep_details: bool = True,
) -> list[EpisodeTrace]:
    """One episode per seed under ``policy``, identical to separate :func:`run_episode` calls."""
    policy = policy.upper()
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    seeds = [int(s) for s in seeds]
    if not seeds:
        return []
    cfgs = [cfg if s == cfg.seed else cfg.with_updates(seed=s) for s in seeds]
    batch = _Batch(policy, cfgs, cfg.cameras(), predictor, keep_details)
    batch.simulate()
    return batch.traces()


class _Batch:
    """Lockstep state of episodes that differ only in their seed."""

    def __init__(self, policy, cfgs, cams, predictor, keep_details):
        cfg = cfgs[0]
        self.policy, self.cfg, self.cfgs, self.cams = policy, cfg, cfgs, cams
        self.keep = keep_details
        B, N, T, P, J = len(cfgs), len(cams), cfg.slots, cfg.persons, TEMPLATE.shape[0]
        self.B, self.N, self.T, self.P, self.J = B, N, T, P, J
        self.M, self.tau = cfg.history, cfg.tau
        self.Ps = np.stack([c.P for c in cams])
        if policy == "E3POSE":
            self.model = predictor if predictor is not None else default_predictor(cfg)
        elif policy == "E3POSE_MV":
            self.model = PredictorModel.motion_vector(J)
        else:
            self.model = None
        self.sched = scheduler_config(cfg) if self.model is not None else None
        self.q = np.zeros((B, N))
        self.predictive = policy in ("E3POSE", "E3POSE_MV", "ID")
        self.warmup = min(self.M + self.tau, T) if self.predictive else 0
        cache = FundamentalCache()
        self.streams = [_ObservationStream(c, cams, cache) for c in cfgs]
        self.rs_rngs = [np.random.default_rng(np.random.SeedSequence([c.seed, 3])) for c in cfgs]
        self.id_cams = [[IndependentCamera(c, cfg.policy.theta_id) for c in cams] for _ in cfgs] if policy == "ID" else None

        self.selection = np.zeros((B, T, N), dtype=np.int8)
        self.decided = np.zeros((B, T), dtype=bool)
        self.predicted = np.full((B, T, N), np.nan)
        self.true_iou = np.zeros((B, T, N))
        self.mpjpe = np.full((B, T), np.nan)
        self.pcp = np.full((B, T), np.nan)
        self.ap_hits = np.zeros((B, T, len(cfg.ap_thresholds)), dtype=int)
        self.matched = np.zeros((B, T), dtype=int)
        self.failed = np.zeros((B, T), dtype=bool)
        self.reporting = np.zeros((B, T), dtype=int)
        self.estimates_log = [[] for _ in cfgs]
        self.candidates_log = [[] for _ in cfgs]
        self.gt = np.zeros((B, T, P, J, 3)) if keep_details else None
        # tracked estimate per person: the latest value plus a ring of recent slots
        self.L = self.model.min_history if self.model is not None else 1
        self.last = np.full((B, P, J, 3), np.nan)
        self.ring = np.full((B, self.L, P, J, 3), np.nan)
        self.first_seen = np.full((B, P), -1)
        self.root_idx = list(metrics.ROOT_JOINTS)

    def fix(self, t: int, s: np.ndarray, rows=slice(None)) -> None:
        """Fix the selection of slot ``t``; queues advance in slot order."""
        self.selection[rows, t] = s
        self.decided[rows, t] = True
        if self.sched is not None:
            self.q[rows] = update_batch(self.q[rows], self.selection[rows, t], self.sched)

    def simulate(self) -> None:
        T = self.T
        for t in range(self.warmup):
            self.fix(t, np.ones(self.N, dtype=np.int8))
        b = 0
        while b < T:
            for st in self.streams:
                st.load(b)
            start = self.streams[0].start
            e = min(b + self.tau, start + NOISE_CHUNK, T)
            self.open_slots(b, e)
            X, valid, spans = self.data_plane(b, e, start)
            due, windows = self.evaluate(b, e, start, X, valid, spans)
            self.control(b, e, start, due, windows)
            b = e

    def open_slots(self, b: int, e: int) -> None:
        """Slots with no selection fixed in advance: SA and RS."""
        N, C = self.N, self.cfg.policy.C
        for t in range(b, e):
            for r in np.flatnonzero(~self.decided[:, t]):
                s = np.ones(N, dtype=np.int8)
                if self.policy == "RS":
                    s[:] = 0
                    s[self.rs_rngs[r].choice(N, size=C, replace=False)] = 1
                self.fix(t, s, r)

    def data_plane(self, b, e, start):
        """Association per (episode, slot), then one triangulation for the whole block."""
        J, N = self.J, self.N
        threshold = float(self.cfg.policy.theta_match)
        spans = []  # (episode, slot, first candidate, end candidate, candidate table)
        tables = []
        n_cand = 0
        for r, st in enumerate(self.streams):
            for t in range(b, e):
                self.reporting[r, t], tab = st.associate(t, self.selection[r, t].astype(bool), threshold)
                spans.append((r, t, n_cand, n_cand + len(tab), tab))
                if len(tab):
                    tables.append((r, t - start, tab))
                n_cand += len(tab)
        if not n_cand:
            return np.zeros((0, J, 3)), np.zeros((0, J), dtype=bool), spans
        uv = np.zeros((N, n_cand, J, 2))
        conf = np.zeros((N, n_cand, J))
        c0 = 0
        for r, k, tab in tables:
            st = self.streams[r]
            lab = tab[:, 1:].T  # (N, candidates)
            c_i, n_i = np.nonzero(lab.T >= 0)
            l_i = lab[n_i, c_i]
            uv[n_i, c0 + c_i] = st.obs.uv[k, n_i, l_i]
            conf[n_i, c0 + c_i] = st.conf[k, n_i, l_i][:, None]
            c0 += len(tab)
        X, valid = triangulate_points(self.Ps, uv.reshape(N, -1, 2), conf.reshape(N, -1))
        return np.nan_to_num(X.reshape(n_cand, J, 3)), valid.reshape(n_cand, J), spans

    def evaluate(self, b, e, start, X, valid, spans):
        """Metrics and tracked estimates for every (episode, slot) of the block.

        Returns the slots that make a decision and, for predictor policies,
        the tracked window and first-seen slots as they stood at each of them.
        """
        B, P, J, W = self.B, self.P, self.J, e - b
        keep = valid.any(axis=1)
        owner = np.zeros(len(X), dtype=int)
        for r, t, c0, c1, _ in spans:
            owner[c0:c1] = r * W + (t - b)
        order = np.flatnonzero(keep)
        counts = np.bincount(owner[order], minlength=B * W)
        E = max(int(counts.max()), 1)
        pos = np.arange(len(order)) - (np.cumsum(counts) - counts)[owner[order]]
        est_b = np.zeros((B * W, E, J, 3))
        val_b = np.zeros((B * W, E, J), dtype=bool)
        est_b[owner[order], pos] = X[order]
        val_b[owner[order], pos] = valid[order]
        gt = np.stack([st.scene[b - start:e - start] for st in self.streams])
        if self.gt is not None:
            self.gt[:, b:e] = gt
        gt = gt.reshape(B * W, P, J, 3)
        for r, st in enumerate(self.streams):
            self.true_iou[r, b:e] = st.obs.scene_iou[b - start:e - start]
        self.failed[:, b:e] = (counts == 0).reshape(B, W)
        errs = _error_matrices(est_b, val_b, gt)
        self.ap_hits[:, b:e] = metrics.greedy_hits_batch(errs, self.cfg.ap_thresholds).reshape(B, W, -1)
        root_gt = gt[:, :, self.root_idx].mean(axis=2)
        rcost = np.linalg.norm(_roots(est_b, val_b, self.root_idx)[:, :, None] - root_gt[:, None], axis=-1)

        pairs = []  # (block row, estimate, person)
        for x in np.flatnonzero(counts):
            rows, cols = linear_sum_assignment(rcost[x, :counts[x]])
            good = np.isfinite(errs[x, rows, cols])
            pairs.extend(zip([x] * int(good.sum()), rows[good].tolist(), cols[good].tolist()))
        px, pe, pp = np.array(pairs, dtype=int).reshape(-1, 3).T
        n_pairs = np.bincount(px, minlength=B * W)
        self.matched[:, b:e] = n_pairs.reshape(B, W)
        if len(px):
            scores = metrics.pcp_batch(est_b[px, pe], val_b[px, pe], gt[px, pp], alpha=self.cfg.pcp_alpha)
            with np.errstate(divide="ignore", invalid="ignore"):
                mp = np.bincount(px, errs[px, pe, pp], minlength=B * W) / n_pairs
                pc = np.bincount(px, scores, minlength=B * W) / n_pairs
            self.mpjpe[:, b:e] = np.where(n_pairs > 0, mp, np.nan).reshape(B, W)
            self.pcp[:, b:e] = np.where(n_pairs > 0, pc, np.nan).reshape(B, W)

        if self.keep:
            for r, t, c0, c1, cands in spans:
                x = r * W + (t - b)
                n = counts[x]
                self.estimates_log[r].append(np.where(val_b[x, :n, :, None], est_b[x, :n], np.nan))
                rank = self.streams[r].rank[t - start]
                self.candidates_log[r].append(tuple(
                    tuple(sorted((self.cams[v].id, int(rank[v, lab])) for v, lab in enumerate(row[1:]) if lab >= 0))
                    for row, kk in zip(cands, keep[c0:c1]) if kk
                ))

        # paired persons take the new joints (held where invalid), the rest keep their last value
        due, windows = [], {}
        pr, pw = np.divmod(px, W)
        for w in range(W):
            t = b + w
            m = pw == w
            r_, e_, p_ = pr[m], pe[m], pp[m]
            x_ = px[m]
            cur = np.where(val_b[x_, e_][..., None], est_b[x_, e_], self.last[r_, p_])
            ok = np.isfinite(cur).all(axis=(1, 2))
            r_, p_ = r_[ok], p_[ok]
            self.last[r_, p_] = cur[ok]
            fresh = self.first_seen[r_, p_] < 0
            self.first_seen[r_[fresh], p_[fresh]] = t
            self.ring[:, t % self.L] = self.last
            if self.predictive and t >= self.M and t + self.tau < self.T:
                due.append(t)
                if self.model is not None:
                    idx = [(t - self.L + 1 + i) % self.L for i in range(self.L)]
                    windows[t] = (self.ring[:, idx], self.first_seen.copy())
        return due, windows

    def control(self, b, e, start, due, windows) -> None:
        """At slot t fix every episode's selection for slot t + tau."""
        tau, N = self.tau, self.N
        if self.policy == "ID":
            for r, st in enumerate(self.streams):
                for t in range(b, e):
                    k = t - start
                    for n in np.flatnonzero(self.selection[r, t]):
                        labels = np.flatnonzero(st.obs.visible[k, n])
                        self.id_cams[r][n].record(t, labels, st.obs.uv[k, n, labels])
                    if t in due:
                        s = np.zeros(N, dtype=np.int8)
                        for n, cam in enumerate(self.id_cams[r]):
                            active, self.predicted[r, t + tau, n] = cam.decide(t + tau)
                            s[n] = active
                        self.fix(t + tau, s, r)
            return
        if not windows:
            return
        hist = np.stack([windows[t][0] for t in due], axis=1)  # (B, D, L, P, J, 3)
        first = np.stack([windows[t][1] for t in due], axis=1)  # (B, D, P)
        ious = self._predicted_ious(hist, first, np.array(due))
        for d, t in enumerate(due):
            self.predicted[:, t + tau] = ious[:, d]
            self.fix(t + tau, select_batch(ious[:, d], self.q, self.sched))

    def _predicted_ious(self, hist, first, slots) -> np.ndarray:
        """Per-camera scene IoU predicted at t + tau over the persons tracked by each t.

        Tracks shorter than the model needs are held at their last value.
        """
        B, D, L, P, J, _ = hist.shape
        tracked = (first >= 0) & (first <= slots[None, :, None])
        length = np.where(tracked, slots[None, :, None] - first + 1, 0)
        tracks = hist.transpose(0, 1, 3, 2, 4, 5).reshape(B * D * P, L, J, 3)
        ready = (length >= self.model.min_history).reshape(-1)
        Xp = tracks[:, -1].copy()
        if ready.any():
            Xp[ready] = predict_array(self.model, tracks[ready], self.tau)
        Xp = np.nan_to_num(Xp).reshape(B, D, P, J, 3)
        return projected_scene_iou(self.Ps, Xp, present=tracked)

    def traces(self) -> list[EpisodeTrace]:
        out = []
        for r, c in enumerate(self.cfgs):
            sel = self.selection[r]
            energy = slot_energy(sel, c.energy, c.slot_duration)
            out.append(EpisodeTrace(
                policy=self.policy,
                seed=c.seed,
                slot_duration=c.slot_duration,
                camera_ids=tuple(cam.id for cam in self.cams),
                persons=self.P,
                warmup=self.warmup,
                selection=sel,
                predicted_iou=self.predicted[r],
                true_iou=self.true_iou[r],
                energy_j=energy,
                cumulative_j=np.cumsum(energy, axis=0),
                queue=queue_series(sel, c.budgets()),
                mpjpe_mm=self.mpjpe[r],
                pcp=self.pcp[r],
                ap_thresholds=tuple(c.ap_thresholds),
                ap_hits=self.ap_hits[r],
                persons_matched=self.matched[r],
                estimation_failed=self.failed[r],
                reporting=self.reporting[r],
                ground_truth=self.gt[r] if self.gt is not None else None,
                estimates=self.estimates_log[r],
                candidates=self.candidates_log[r],
            ))
        return out


def _error_matrices(est: np.ndarray, valid: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """MPJPE of every (estimate, truth) pair per slot: (B, E, J, 3) x (B, P, J, 3) -> (B, E, P)."""
    d = np.linalg.norm(est[:, :, None] - gt[:, None], axis=-1)
    mask = valid[:, :, None, :]
    cnt = mask.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(cnt > 0, np.where(mask, d, 0.0).sum(axis=-1) / cnt, np.inf)


def _roots(est: np.ndarray, valid: np.ndarray, root_idx) -> np.ndarray:
    """Mean of the valid root joints of each pose, or of all valid joints when no root is valid."""
    w = np.zeros(valid.shape)
    w[..., root_idx] = valid[..., root_idx]
    none = ~w.any(axis=-1)
    w[none] = valid[none]
    with np.errstate(divide="ignore", invalid="ignore"):
        return (w[..., None] * est).sum(axis=-2) / w.sum(axis=-1)[..., None]
