"""Planar tag-map localisation with a split covariance intersection filter."""

from .geometry import Pose2, wrap_angle
from .localizer import METHODS, FilterConfig, Localizer, run_localizer
from .map_builder import TagMap

__all__ = ["METHODS", "FilterConfig", "Localizer", "Pose2", "TagMap", "run_localizer", "wrap_angle"]
__version__ = "0.1.0"
