"""Synthetic multi-camera scenes, observations and episode simulation."""

from .config import POLICIES, ScenarioConfig, load_config, save_config
from .energy import EnergySummary, energy_summary, slot_energy
from .episode import EpisodeTrace, default_predictor, run_episode, run_episodes
from .scene import generate_scene_sequence

__all__ = [
    "POLICIES", "ScenarioConfig", "load_config", "save_config",
    "EnergySummary", "energy_summary", "slot_energy",
    "EpisodeTrace", "default_predictor", "run_episode", "run_episodes", "generate_scene_sequence",
]
