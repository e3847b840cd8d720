"""Scenario configuration: dataclasses, validation and JSON file I/O."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ConfigError
from ..geometry import CameraModel, load_calibration, look_at_camera

POLICIES = ("E3POSE", "SA", "RS", "ID", "E3POSE_MV")


@dataclass(frozen=True)
class EnergyModel:
    """Per-device power draw in the two operating modes (watts)."""

    pim_w: float = 10.0
    psm_w: float = 5.0
    # optional per-camera overrides, keyed by camera index: [pim_w, psm_w]
    overrides: dict[int, tuple[float, float]] = field(default_factory=dict)
    # reporting-only breakdown of the PIM/PSM gap, e.g. {"processing": 0.7, "wireless": 0.2, "base": 0.1}
    breakdown: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for n, (pim, psm) in {-1: (self.pim_w, self.psm_w), **self.overrides}.items():
            where = "energy" if n < 0 else f"energy.overrides.{n}"
            if not (0 < psm < pim):
                raise ConfigError(f"{where}: need 0 < psm_w < pim_w, got psm={psm}, pim={pim}", where)

    def powers(self, n_cameras: int) -> tuple[np.ndarray, np.ndarray]:
        pim = np.full(n_cameras, float(self.pim_w))
        psm = np.full(n_cameras, float(self.psm_w))
        for n, (a, b) in self.overrides.items():
            if 0 <= int(n) < n_cameras:
                pim[int(n)], psm[int(n)] = a, b
        return pim, psm


@dataclass(frozen=True)
class RigConfig:
    """A ring of cameras around the arena, all aimed at a common target."""

    count: int = 5
    radius: float = 4500.0
    heights: tuple[float, ...] = (1200.0, 3200.0, 1800.0, 2600.0, 1500.0)
    azimuth_offset_deg: float = 18.0
    target: tuple[float, float, float] = (0.0, 0.0, 900.0)
    focal: float = 500.0
    width: int = 640
    height: int = 480


@dataclass(frozen=True)
class MotionConfig:
    max_speed: float = 1400.0  # mm/s
    turn_rate: float = 2.5  # rad/s, std of the heading-rate drive
    smoothness: float = 0.9  # low-pass coefficient in [0, 1)


@dataclass(frozen=True)
class NoiseConfig:
    sigma0: float = 2.0  # base pixel noise
    kappa: float = 3.0  # occlusion gain


@dataclass(frozen=True)
class PolicyConfig:
    C: int = 3
    V: float = 50.0
    E: tuple[float, ...] = (0.8,)
    theta_id: float = 0.15
    theta_match: float = 25.0
    ridge_lambda: float = 1e-4
    train_scenes: int = 12
    train_slots: int = 400
    train_noise: float = 25.0  # mm, std of the noise added to training histories


@dataclass(frozen=True)
class ScenarioConfig:
    persons: int = 3
    joints: int = 14
    slots: int = 600
    slot_duration: float = 1.0 / 30.0
    arena: tuple[float, float, float, float] = (-1500.0, 1500.0, -1500.0, 1500.0)
    tau: int = 5
    history: int = 5
    seed: int = 0
    rig: RigConfig = field(default_factory=RigConfig)
    calibration: str | None = None
    motion: MotionConfig = field(default_factory=MotionConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    energy: EnergyModel = field(default_factory=EnergyModel)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    ap_thresholds: tuple[float, ...] = (25.0, 50.0, 100.0, 150.0)
    pcp_alpha: float = 0.5

    def __post_init__(self):
        validate(self)

    @property
    def n_cameras(self) -> int:
        return len(self.cameras())

    def cameras(self) -> list[CameraModel]:
        return build_cameras(self)

    def budgets(self) -> np.ndarray:
        E = self.policy.E
        n = self.n_cameras
        if len(E) == 1:
            return np.full(n, float(E[0]))
        return np.asarray(E, dtype=float)

    def with_updates(self, **changes: Any) -> ScenarioConfig:
        """Copy with top-level or dotted nested fields replaced, e.g. ``{"policy.C": 2}``."""
        data = to_dict(self)
        for key, value in changes.items():
            node = data
            parts = key.replace("__", ".").split(".")
            for p in parts[:-1]:
                if p not in node or not isinstance(node[p], dict):
                    raise ConfigError(f"unknown config field {key!r}", key)
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config field {key!r}", key)
            node[parts[-1]] = value
        return from_dict(data)


_camera_cache: dict[tuple, list[CameraModel]] = {}


def build_cameras(cfg: ScenarioConfig) -> list[CameraModel]:
    key = (cfg.calibration, cfg.rig)
    if key in _camera_cache:
        return _camera_cache[key]
    if cfg.calibration:
        cams = load_calibration(cfg.calibration)
    else:
        r = cfg.rig
        heights = list(r.heights) or [2000.0]
        cams = []
        for n in range(r.count):
            az = np.deg2rad(r.azimuth_offset_deg + 360.0 * n / r.count)
            pos = (r.radius * np.cos(az), r.radius * np.sin(az), heights[n % len(heights)])
            cams.append(look_at_camera(n, pos, r.target, r.focal, r.width, r.height))
    _camera_cache[key] = cams
    return cams


def validate(cfg: ScenarioConfig) -> None:
    def need(cond, name, msg):
        if not cond:
            raise ConfigError(f"{name}: {msg}", name)

    need(cfg.persons >= 1, "persons", "must be at least 1")
    need(cfg.joints == 14, "joints", "the built-in skeleton template has 14 joints")
    need(cfg.slot_duration > 0, "slot_duration", "must be positive")
    need(cfg.tau >= 1, "tau", "must be a positive integer")
    need(cfg.history >= 2, "history", "must be at least 2")
    need(cfg.slots > cfg.history + cfg.tau, "slots", "must exceed history + tau")
    need(len(cfg.arena) == 4 and cfg.arena[0] < cfg.arena[1] and cfg.arena[2] < cfg.arena[3],
         "arena", "expected [x_min, x_max, y_min, y_max] with min < max")
    need(cfg.motion.max_speed >= 0, "motion.max_speed", "must be nonnegative")
    need(cfg.motion.turn_rate >= 0, "motion.turn_rate", "must be nonnegative")
    need(0 <= cfg.motion.smoothness < 1, "motion.smoothness", "must lie in [0, 1)")
    need(cfg.noise.sigma0 >= 0, "noise.sigma0", "must be nonnegative")
    need(cfg.noise.kappa >= 0, "noise.kappa", "must be nonnegative")
    need(cfg.rig.count >= 2 or cfg.calibration, "rig.count", "need at least two cameras")
    try:
        n = cfg.n_cameras
    except (ValueError, OSError) as exc:
        raise ConfigError(f"calibration: {exc}", "calibration") from None
    p = cfg.policy
    need(1 <= p.C <= n, "policy.C", f"must lie in [1, {n}]")
    need(len(p.E) in (1, n), "policy.E", f"give one budget or {n} budgets")
    for e in p.E:
        need(0 < e <= 1, "policy.E", "budgets must lie in (0, 1]")
        need(e >= p.C / n - 1e-12, "policy.E", f"budget {e} is below C/N = {p.C / n:.3f}")
    need(p.V >= 0, "policy.V", "must be nonnegative")
    need(p.theta_match > 0, "policy.theta_match", "must be positive")
    need(p.ridge_lambda >= 0, "policy.ridge_lambda", "must be nonnegative")
    need(p.train_scenes >= 1, "policy.train_scenes", "must be at least 1")
    need(p.train_slots > cfg.history + cfg.tau, "policy.train_slots", "must exceed history + tau")
    need(p.train_noise >= 0, "policy.train_noise", "must be nonnegative")
    need(all(k > 0 for k in cfg.ap_thresholds), "ap_thresholds", "must be positive")


_NESTED = {
    "rig": RigConfig,
    "motion": MotionConfig,
    "noise": NoiseConfig,
    "energy": EnergyModel,
    "policy": PolicyConfig,
}


def to_dict(cfg: ScenarioConfig) -> dict:
    data = asdict(cfg)
    data["energy"]["overrides"] = {str(k): list(v) for k, v in cfg.energy.overrides.items()}
    return json.loads(json.dumps(data))


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object", prefix or None)
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config field {prefix + key!r}", prefix + key)
    kwargs = {}
    for name, value in data.items():
        full = prefix + name
        if cls is ScenarioConfig and name in _NESTED:
            kwargs[name] = _build(_NESTED[name], value, full + ".")
            continue
        if cls is EnergyModel and name == "overrides":
            try:
                value = {int(k): (float(v[0]), float(v[1])) for k, v in value.items()}
            except (TypeError, ValueError, IndexError, AttributeError):
                raise ConfigError(f"{full}: expected {{camera: [pim_w, psm_w]}}", full) from None
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}", prefix or None) from None


REQUIRED_FIELDS = ("persons", "slots", "tau", "history", "seed")


def from_dict(data: dict, require: tuple[str, ...] = ()) -> ScenarioConfig:
    for name in require:
        if name not in data:
            raise ConfigError(f"missing config field {name!r}", name)
    return _build(ScenarioConfig, copy.deepcopy(data), "")


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a JSON scenario file. Top-level scenario fields listed in REQUIRED_FIELDS must be present."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict) and data.get("calibration"):
        calib = Path(data["calibration"])
        if not calib.is_absolute():
            data["calibration"] = str((Path(path).parent / calib).resolve())
    return from_dict(data, require=REQUIRED_FIELDS)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2) + "\n")


def scheduler_config(cfg: ScenarioConfig):
    from ..scheduler import SchedulerConfig

    return SchedulerConfig(cfg.n_cameras, cfg.policy.C, cfg.policy.V, tuple(cfg.budgets()))
