"""Sonar measurement geometry: spherical/Cartesian conversion and planar poses.

Robot frame convention: x forward, y to port (left), z up. Bearing is
measured from x toward y, elevation from the horizontal plane toward +z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap angle(s) to [-pi, pi). Works on scalars and arrays."""
    wrapped = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class SphericalMeasurement:
    """A sonar return in the sensor's spherical frame.

    ``bearing`` is unset (None) for returns from the vertical sonar and
    ``elevation`` is unset for returns from the horizontal sonar.
    """

    range: float
    bearing: Optional[float] = 0.0
    elevation: Optional[float] = 0.0
    intensity: float = 0.0

    def __post_init__(self):
        if not self.range >= 0.0:
            raise ValueError(f"range must be >= 0, got {self.range}")
        for name in ("bearing", "elevation"):
            v = getattr(self, name)
            if v is not None and not (-math.pi <= v <= math.pi):
                raise ValueError(f"{name} {v} outside [-pi, pi]")
        if not self.intensity >= 0.0:
            raise ValueError(f"intensity must be >= 0, got {self.intensity}")


@dataclass(frozen=True)
class CartesianPoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite point {(self.x, self.y, self.z)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_array(cls, a) -> "CartesianPoint":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class PlanarPose:
    """Planar robot pose at a fixed depth; roll and pitch are zero.

    ``depth`` is the z coordinate of the robot in the map frame (negative
    below the surface).
    """

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    depth: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 robot-to-map transform."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array(
            [
                [c, -s, 0.0, self.x],
                [s, c, 0.0, self.y],
                [0.0, 0.0, 1.0, self.depth],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )

    def apply(self, xyz) -> np.ndarray:
        """Map an (N, 3) array of robot-frame points into the map frame."""
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out = np.empty_like(xyz)
        out[:, 0] = c * xyz[:, 0] - s * xyz[:, 1] + self.x
        out[:, 1] = s * xyz[:, 0] + c * xyz[:, 1] + self.y
        out[:, 2] = xyz[:, 2] + self.depth
        return out

    def inverse_apply(self, xyz) -> np.ndarray:
        """Express map-frame points in this pose's robot frame."""
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx = xyz[:, 0] - self.x
        dy = xyz[:, 1] - self.y
        out = np.empty_like(xyz)
        out[:, 0] = c * dx + s * dy
        out[:, 1] = -s * dx + c * dy
        out[:, 2] = xyz[:, 2] - self.depth
        return out


@dataclass(frozen=True)
class FusedPoint:
    """A return fully defined in 3D by associating both sonar images."""

    range: float
    bearing: float
    elevation: float
    confidence: float
    # index of the contributing horizontal feature within its frame
    h_index: int = field(default=-1, compare=False)

    def __post_init__(self):
        if not self.range >= 0.0:
            raise ValueError(f"range must be >= 0, got {self.range}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    def to_cartesian(self) -> CartesianPoint:
        return spherical_to_cartesian(
            SphericalMeasurement(self.range, self.bearing, self.elevation)
        )


def spherical_xyz(r, bearing, elevation) -> np.ndarray:
    """Vectorized spherical to Cartesian conversion, returns (N, 3)."""
    r = np.asarray(r, dtype=float)
    bearing = np.asarray(bearing, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack(
        [r * ce * np.cos(bearing), r * ce * np.sin(bearing), r * np.sin(elevation)],
        axis=-1,
    )


def xyz_spherical(xyz):
    """Vectorized inverse of :func:`spherical_xyz`; returns (r, bearing, elevation)."""
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    horiz = np.hypot(x, y)
    return np.sqrt(x * x + y * y + z * z), np.arctan2(y, x), np.arctan2(z, horiz)


def spherical_to_cartesian(m: SphericalMeasurement) -> CartesianPoint:
    if m.bearing is None or m.elevation is None:
        raise ValueError("both bearing and elevation are required for a 3D point")
    ce = math.cos(m.elevation)
    return CartesianPoint(
        m.range * ce * math.cos(m.bearing),
        m.range * ce * math.sin(m.bearing),
        m.range * math.sin(m.elevation),
    )


def cartesian_to_spherical(p: CartesianPoint) -> SphericalMeasurement:
    r = math.sqrt(p.x * p.x + p.y * p.y + p.z * p.z)
    if r == 0.0:
        raise ValueError("the origin has no spherical direction")
    bearing = wrap_angle(math.atan2(p.y, p.x))
    elevation = math.atan2(p.z, math.hypot(p.x, p.y))
    return SphericalMeasurement(r, bearing, elevation)


def transform_to_map(pose: PlanarPose, p: CartesianPoint) -> CartesianPoint:
    return CartesianPoint.from_array(pose.apply(p.as_array())[0])
