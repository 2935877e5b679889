"""Orthogonal stereo imaging sonar: fusion, online class height models and 3D inference.

The pipeline fuses returns seen by both sonars of an orthogonal pair into 3D
points, learns per-class height distributions from them, and uses those to
lift returns seen only by the horizontal sonar into 3D. A ray-casting
simulator with analytic primitives provides images and ground truth.
"""

from ._accel import USE_NUMBA, backend_name
from .config import ConfigError, PipelineConfig, load_config
from .geometry import (
    CartesianPoint,
    FusedPoint,
    PlanarPose,
    SphericalMeasurement,
    cartesian_to_spherical,
    spherical_to_cartesian,
    transform_to_map,
)
from .scene import Box, Cylinder, Mission, Scene, Wall, load_mission, load_scene

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA",
    "backend_name",
    "ConfigError",
    "PipelineConfig",
    "load_config",
    "CartesianPoint",
    "FusedPoint",
    "PlanarPose",
    "SphericalMeasurement",
    "cartesian_to_spherical",
    "spherical_to_cartesian",
    "transform_to_map",
    "Box",
    "Cylinder",
    "Mission",
    "Scene",
    "Wall",
    "load_mission",
    "load_scene",
]
