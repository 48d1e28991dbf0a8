"""Rotor self-noise simulation and learned self-localization for multi-rotor aircraft."""

from .core import Pose2, SampleClock, Vec2, wrap_angle
from .environment import Environment, image_sources, viable_region
from .phasemod import ConstraintConfig, PhaseParams, penalty_total, preset

__version__ = "0.1.0"

__all__ = ["Pose2", "SampleClock", "Vec2", "wrap_angle", "Environment", "image_sources",
           "viable_region", "ConstraintConfig", "PhaseParams", "penalty_total", "preset"]
