"""Per-slot energy accounting and trace-level power summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EnergyModel


def slot_energy(selection: np.ndarray, model: EnergyModel, slot_duration: float) -> np.ndarray:
    """Joules drawn per (slot, camera): PIM power when selected, PSM power otherwise."""
    selection = np.asarray(selection)
    pim, psm = model.powers(selection.shape[-1])
    return np.where(selection.astype(bool), pim, psm) * slot_duration


@dataclass(frozen=True)
class EnergySummary:
    mean_power_w: np.ndarray  # per camera
    total_energy_j: np.ndarray  # per camera
    power_std_w: float  # across cameras
    fleet_mean_power_w: float


def energy_summary(trace) -> EnergySummary:
    energy = np.asarray(trace.energy_j, dtype=float)
    T = energy.shape[0]
    total = energy.sum(axis=0)
    mean_power = total / (T * trace.slot_duration)
    return EnergySummary(mean_power, total, float(mean_power.std()), float(mean_power.mean()))


def expected_fleet_power(C: int, N: int, model: EnergyModel) -> float:
    """Fleet mean power of any policy selecting exactly C of N homogeneous cameras."""
    return (C * model.pim_w + (N - C) * model.psm_w) / N


def saving_vs_all(C: int, N: int, psm_ratio: float) -> float:
    """Fractional fleet power saving against selecting all cameras."""
    return (N - C) / N * (1.0 - psm_ratio)
