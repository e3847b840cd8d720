"""Occlusion-aware camera selection for multi-view 3D pose estimation."""

from . import errors, geometry, matching, metrics, occlusion, predictor, scheduler

__version__ = "0.1.0"

__all__ = ["errors", "geometry", "matching", "metrics", "occlusion", "predictor", "scheduler", "__version__"]
