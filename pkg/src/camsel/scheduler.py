"""Drift-plus-penalty camera selection with per-camera energy-deficit queues.

Each slot the scheduler picks the ``C`` cameras with the smallest
``V * iou_n + q_n``; the deficit queue of camera ``n`` then evolves as
``q_n <- max(q_n - E_n, 0) + s_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DimensionMismatch, TooManyCameras

BRUTE_FORCE_MAX_CAMERAS = 12


@dataclass(frozen=True)
class SchedulerConfig:
    N: int
    C: int
    V: float = 50.0
    E: tuple[float, ...] = ()

    def __post_init__(self):
        E = tuple(float(e) for e in self.E) if len(self.E) else (1.0,) * self.N
        if len(E) == 1 and self.N > 1:
            E = E * self.N
        object.__setattr__(self, "E", E)
        if not 1 <= self.C <= self.N:
            raise ValueError(f"need 1 <= C <= N, got C={self.C}, N={self.N}")
        if len(E) != self.N:
            raise DimensionMismatch(f"{len(E)} energy budgets for {self.N} cameras")
        if self.V < 0:
            raise ValueError("V must be nonnegative")
        floor = self.C / self.N
        for n, e in enumerate(E):
            if not (0 < e <= 1):
                raise ValueError(f"E[{n}]={e} must lie in (0, 1]")
            if e < floor - 1e-12:
                raise ValueError(f"E[{n}]={e} is below C/N={floor:.3f}; the budget is infeasible")


@dataclass
class SchedulerState:
    q: np.ndarray
    slot: int = 0

    @classmethod
    def initial(cls, n_cameras: int) -> SchedulerState:
        return cls(np.zeros(n_cameras), 0)


@dataclass(frozen=True)
class SelectionDecision:
    s: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.array(self.s, dtype=np.int8)
        s.flags.writeable = False
        object.__setattr__(self, "s", s)

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.s))

    @classmethod
    def from_indices(cls, n: int, indices) -> SelectionDecision:
        s = np.zeros(n, dtype=np.int8)
        s[list(indices)] = 1
        return cls(s)


def _check(iou, state: SchedulerState, cfg: SchedulerConfig) -> np.ndarray:
    iou = np.asarray(iou, dtype=float)
    if iou.shape != (cfg.N,) or np.shape(state.q) != (cfg.N,):
        raise DimensionMismatch(
            f"expected {cfg.N} IoU values and queues, got {iou.shape} and {np.shape(state.q)}"
        )
    if np.any(~np.isfinite(iou)) or np.any(iou < 0) or np.any(iou > 1):
        raise ValueError("IoU values must lie in [0, 1]")
    return iou


def scores(iou, state: SchedulerState, cfg: SchedulerConfig) -> np.ndarray:
    return cfg.V * np.asarray(iou, dtype=float) + np.asarray(state.q, dtype=float)


def select_cameras(iou, state: SchedulerState, cfg: SchedulerConfig) -> SelectionDecision:
    """Pick the C smallest scores; equal scores go to the lower camera id."""
    iou = _check(iou, state, cfg)
    order = np.lexsort((np.arange(cfg.N), scores(iou, state, cfg)))
    return SelectionDecision.from_indices(cfg.N, order[: cfg.C])


def brute_force_select(iou, state: SchedulerState, cfg: SchedulerConfig) -> SelectionDecision:
    """Exhaustive search over all C-subsets (test oracle)."""
    if cfg.N > BRUTE_FORCE_MAX_CAMERAS:
        raise TooManyCameras(f"brute force is limited to {BRUTE_FORCE_MAX_CAMERAS} cameras")
    iou = _check(iou, state, cfg)
    sc = scores(iou, state, cfg).tolist()
    best = None
    best_val = math.inf
    # combinations() yields subsets in lexicographic order, so the first
    # minimiser is the one preferring lower camera ids
    for subset in combinations(range(cfg.N), cfg.C):
        val = math.fsum(sc[i] for i in subset)
        if val < best_val:
            best, best_val = subset, val
    return SelectionDecision.from_indices(cfg.N, best)


def update_queues(state: SchedulerState, decision: SelectionDecision, cfg: SchedulerConfig) -> SchedulerState:
    if decision.s.shape != (cfg.N,):
        raise DimensionMismatch(f"decision has {decision.s.shape[0]} entries, expected {cfg.N}")
    q = np.maximum(np.asarray(state.q, dtype=float) - np.asarray(cfg.E), 0.0) + decision.s
    return SchedulerState(q, state.slot + 1)


def select_batch(iou: np.ndarray, q: np.ndarray, cfg: SchedulerConfig) -> np.ndarray:
    """:func:`select_cameras` for independent rows of IoU (B, N) and queues (B, N)."""
    sc = cfg.V * np.asarray(iou, dtype=float) + q
    order = np.argsort(sc, axis=1, kind="stable")[:, : cfg.C]
    s = np.zeros(sc.shape, dtype=np.int8)
    np.put_along_axis(s, order, 1, axis=1)
    return s


def update_batch(q: np.ndarray, s: np.ndarray, cfg: SchedulerConfig) -> np.ndarray:
    return np.maximum(q - np.asarray(cfg.E), 0.0) + s


class Scheduler:
    """Stateful wrapper owning the queues of one control loop."""

    def __init__(self, cfg: SchedulerConfig):
        self.cfg = cfg
        self.state = SchedulerState.initial(cfg.N)

    def decide(self, iou) -> SelectionDecision:
        return select_cameras(iou, self.state, self.cfg)

    def commit(self, decision: SelectionDecision) -> None:
        self.state = update_queues(self.state, decision, self.cfg)

    def step(self, iou) -> SelectionDecision:
        decision = self.decide(iou)
        self.commit(decision)
        return decision
