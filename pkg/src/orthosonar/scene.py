"""Analytic scenes (pilings, walls) and keyframe missions.

Scenes double as the ground truth for the absolute-error metric, so the
distance functions here are exact rather than sampled.

Scene file (YAML)::

    water_depth: 10.0
    primitives:
      - kind: cylinder
        label: cylindrical_piling
        center: [12.0, 3.0, -5.0]   # centre of the solid, z up
        radius: 0.3
        height: 10.0
      - kind: box
        label: rectangular_piling
        center: [20.0, -4.0, -5.0]
        extents: [0.8, 0.8, 10.0]   # full side lengths
        yaw_deg: 15.0
      - kind: wall
        label: wall
        start: [0.0, 15.0]
        end: [60.0, 15.0]
        z_range: [-10.0, 0.0]

Mission file (YAML)::

    keyframe_spacing: 4.0
    depth: -3.0
    poses:
      - {x: 0.0, y: 0.0, yaw_deg: 0.0}
      - {x: 4.0, y: 0.0, yaw_deg: 0.0}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import yaml

from .geometry import CartesianPoint, PlanarPose


class SceneError(ValueError):
    """Malformed scene or mission description."""


@dataclass(frozen=True)
class Cylinder:
    center: Tuple[float, float, float]
    radius: float
    height: float
    label: str = "cylindrical_piling"

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise SceneError(f"cylinder dimensions must be positive: {self}")

    @property
    def z_range(self):
        return self.center[2] - self.height / 2, self.center[2] + self.height / 2


@dataclass(frozen=True)
class Box:
    center: Tuple[float, float, float]
    extents: Tuple[float, float, float]
    yaw: float = 0.0
    label: str = "rectangular_piling"

    def __post_init__(self):
        if min(self.extents) <= 0:
            raise SceneError(f"box extents must be positive: {self}")


@dataclass(frozen=True)
class Wall:
    """Vertical rectangular plane segment between two (x, y) endpoints."""

    start: Tuple[float, float]
    end: Tuple[float, float]
    z_range: Tuple[float, float]
    label: str = "wall"

    def __post_init__(self):
        if math.dist(self.start, self.end) <= 0 or self.z_range[1] <= self.z_range[0]:
            raise SceneError(f"wall dimensions must be positive: {self}")


Primitive = Union[Cylinder, Box, Wall]


@dataclass
class Scene:
    primitives: List[Primitive] = field(default_factory=list)
    water_depth: float = 10.0

    def __post_init__(self):
        self._packed = None

    @property
    def labels(self) -> List[str]:
        return [p.label for p in self.primitives]

    def packed(self):
        """Primitive parameters as float arrays for the ray-casting kernels.

        Returns ``(cylinders, boxes, walls, owner)`` where ``cylinders`` rows are
        ``(cx, cy, zlo, zhi, r)``, ``boxes`` rows ``(cx, cy, cz, hx, hy, hz, yaw)``,
        ``walls`` rows ``(x1, y1, x2, y2, zlo, zhi)`` and ``owner`` maps the
        concatenated row order back to indices in ``primitives``.
        """
        if self._packed is not None:
            return self._packed
        cyl, box, wall = [], [], []
        cyl_i, box_i, wall_i = [], [], []
        for i, p in enumerate(self.primitives):
            if isinstance(p, Cylinder):
                zlo, zhi = p.z_range
                cyl.append((p.center[0], p.center[1], zlo, zhi, p.radius))
                cyl_i.append(i)
            elif isinstance(p, Box):
                box.append((*p.center, *(e / 2 for e in p.extents), p.yaw))
                box_i.append(i)
            elif isinstance(p, Wall):
                wall.append((*p.start, *p.end, *p.z_range))
                wall_i.append(i)
            else:
                raise SceneError(f"unknown primitive {p!r}")
        self._packed = (
            np.array(cyl, dtype=float).reshape(-1, 5),
            np.array(box, dtype=float).reshape(-1, 7),
            np.array(wall, dtype=float).reshape(-1, 6),
            np.array(cyl_i + box_i + wall_i, dtype=np.int64),
        )
        return self._packed


@dataclass
class Mission:
    poses: List[PlanarPose]
    keyframe_spacing: float

    def __len__(self):
        return len(self.poses)


# ---------------------------------------------------------------------------
# exact distances to primitive surfaces


def _cylinder_distance(pts, c: Cylinder):
    rho = np.hypot(pts[:, 0] - c.center[0], pts[:, 1] - c.center[1])
    zlo, zhi = c.z_range
    dr = rho - c.radius
    dz = np.maximum(zlo - pts[:, 2], pts[:, 2] - zhi)
    inside = (dr <= 0) & (dz <= 0)
    outside = np.hypot(np.maximum(dr, 0), np.maximum(dz, 0))
    return np.where(inside, np.minimum(-dr, -dz), outside)


def _box_distance(pts, b: Box):
    cy, sy = math.cos(b.yaw), math.sin(b.yaw)
    d = pts - np.asarray(b.center)
    local = np.stack([cy * d[:, 0] + sy * d[:, 1], -sy * d[:, 0] + cy * d[:, 1], d[:, 2]], axis=1)
    q = np.abs(local) - np.asarray(b.extents) / 2
    outside = np.linalg.norm(np.maximum(q, 0), axis=1)
    inside = -np.max(q, axis=1)
    return np.where(np.all(q <= 0, axis=1), inside, outside)


def _wall_distance(pts, w: Wall):
    a = np.asarray(w.start, dtype=float)
    seg = np.asarray(w.end, dtype=float) - a
    length = float(np.linalg.norm(seg))
    u = seg / length
    rel = pts[:, :2] - a
    s = rel @ u
    n = rel[:, 0] * -u[1] + rel[:, 1] * u[0]
    ds = np.maximum(np.maximum(-s, s - length), 0)
    dz = np.maximum(np.maximum(w.z_range[0] - pts[:, 2], pts[:, 2] - w.z_range[1]), 0)
    return np.sqrt(n * n + ds * ds + dz * dz)


def _primitive_distance(pts, p):
    if isinstance(p, Cylinder):
        return _cylinder_distance(pts, p)
    if isinstance(p, Box):
        return _box_distance(pts, p)
    return _wall_distance(pts, p)


def distances_to_scene(points, scene: Scene, return_owner: bool = False):
    """Minimum distance from each of the (N, 3) ``points`` to any primitive surface."""
    if not scene.primitives:
        raise SceneError("distance to an empty scene is undefined")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    per = np.stack([_primitive_distance(pts, p) for p in scene.primitives], axis=1)
    best = per.min(axis=1)
    if return_owner:
        return best, per.argmin(axis=1)
    return best


def distance_to_scene(p: CartesianPoint, scene: Scene) -> float:
    return float(distances_to_scene(p.as_array(), scene)[0])


# ---------------------------------------------------------------------------
# missions


def mission_from_path(
    waypoints: Sequence[Tuple[float, float]], spacing: float, depth: float
) -> Mission:
    """Sample keyframes every ``spacing`` metres of travel along a polyline.

    Heading follows the direction of travel of the segment each keyframe
    lies on.
    """
    if spacing <= 0:
        raise SceneError("keyframe spacing must be positive")
    wp = np.asarray(waypoints, dtype=float)
    if len(wp) < 2:
        raise SceneError("a path needs at least two waypoints")
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    keep = seg_len > 0
    wp_start, seg, seg_len = wp[:-1][keep], seg[keep], seg_len[keep]
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    n = int(math.floor(cum[-1] / spacing + 1e-9)) + 1
    poses = []
    for k in range(n):
        s = k * spacing
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        f = (s - cum[i]) / seg_len[i]
        x, y = wp_start[i] + f * seg[i]
        yaw = math.atan2(seg[i][1], seg[i][0])
        poses.append(PlanarPose(float(x), float(y), yaw, depth))
    return Mission(poses, spacing)


# ---------------------------------------------------------------------------
# file io


def _vec(rec, key, n, where):
    try:
        v = tuple(float(x) for x in rec[key])
    except KeyError:
        raise SceneError(f"{where}: missing field '{key}'") from None
    except (TypeError, ValueError):
        raise SceneError(f"{where}: field '{key}' must be a list of numbers") from None
    if len(v) != n:
        raise SceneError(f"{where}: field '{key}' needs {n} values, got {len(v)}")
    return v


def _num(rec, key, where, default=None):
    if key not in rec:
        if default is None:
            raise SceneError(f"{where}: missing field '{key}'")
        return default
    try:
        return float(rec[key])
    except (TypeError, ValueError):
        raise SceneError(f"{where}: field '{key}' must be a number") from None


def scene_from_dict(data: dict, source: str = "<scene>") -> Scene:
    if not isinstance(data, dict) or "primitives" not in data:
        raise SceneError(f"{source}: expected a mapping with a 'primitives' list")
    prims: List[Primitive] = []
    for i, rec in enumerate(data["primitives"] or []):
        where = f"{source}: primitives[{i}]"
        kind = rec.get("kind")
        label = str(rec.get("label", ""))
        try:
            if kind == "cylinder":
                prims.append(
                    Cylinder(
                        _vec(rec, "center", 3, where),
                        _num(rec, "radius", where),
                        _num(rec, "height", where),
                        label or "cylindrical_piling",
                    )
                )
            elif kind == "box":
                prims.append(
                    Box(
                        _vec(rec, "center", 3, where),
                        _vec(rec, "extents", 3, where),
                        math.radians(_num(rec, "yaw_deg", where, 0.0)),
                        label or "rectangular_piling",
                    )
                )
            elif kind == "wall":
                prims.append(
                    Wall(
                        _vec(rec, "start", 2, where),
                        _vec(rec, "end", 2, where),
                        _vec(rec, "z_range", 2, where),
                        label or "wall",
                    )
                )
            else:
                raise SceneError(f"{where}: unknown kind {kind!r}")
        except SceneError as e:
            if str(e).startswith(source):
                raise
            raise SceneError(f"{where}: {e}") from None
    return Scene(prims, _num(data, "water_depth", source, 10.0))


def scene_to_dict(scene: Scene) -> dict:
    out = []
    for p in scene.primitives:
        if isinstance(p, Cylinder):
            out.append(dict(kind="cylinder", label=p.label, center=list(p.center),
                            radius=p.radius, height=p.height))
        elif isinstance(p, Box):
            out.append(dict(kind="box", label=p.label, center=list(p.center),
                            extents=list(p.extents), yaw_deg=math.degrees(p.yaw)))
        else:
            out.append(dict(kind="wall", label=p.label, start=list(p.start),
                            end=list(p.end), z_range=list(p.z_range)))
    return {"water_depth": scene.water_depth, "primitives": out}


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise SceneError(f"{path}: {e}") from None
    return scene_from_dict(data, str(path))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))


def mission_from_dict(data: dict, source: str = "<mission>", spacing_override=None) -> Mission:
    """Build a mission from explicit ``poses`` or from ``waypoints``.

    Waypoint missions are sampled every ``keyframe_spacing`` metres (or
    ``spacing_override`` when given); explicit pose lists are used as-is.
    """
    if not isinstance(data, dict) or not ("poses" in data or "waypoints" in data):
        raise SceneError(f"{source}: expected a mapping with a 'poses' or 'waypoints' list")
    depth = _num(data, "depth", source, 0.0)
    spacing = _num(data, "keyframe_spacing", source)
    if "waypoints" in data:
        try:
            wps = [tuple(float(c) for c in w) for w in data["waypoints"]]
        except (TypeError, ValueError):
            raise SceneError(f"{source}: waypoints must be [x, y] pairs") from None
        if any(len(w) != 2 for w in wps):
            raise SceneError(f"{source}: waypoints must be [x, y] pairs")
        return mission_from_path(wps, spacing_override or spacing, depth)
    poses = []
    for i, rec in enumerate(data["poses"] or []):
        where = f"{source}: poses[{i}]"
        poses.append(
            PlanarPose(
                _num(rec, "x", where),
                _num(rec, "y", where),
                math.radians(_num(rec, "yaw_deg", where, 0.0)),
                _num(rec, "depth", where, depth),
            )
        )
    if not poses:
        raise SceneError(f"{source}: mission has no poses")
    return Mission(poses, spacing)


def mission_to_dict(mission: Mission) -> dict:
    depth = mission.poses[0].depth if mission.poses else 0.0
    return {
        "keyframe_spacing": mission.keyframe_spacing,
        "depth": depth,
        "poses": [
            {"x": round(p.x, 6), "y": round(p.y, 6), "yaw_deg": round(math.degrees(p.yaw), 6)}
            for p in mission.poses
        ],
    }


def load_mission(path, spacing_override=None) -> Mission:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise SceneError(f"{path}: {e}") from None
    return mission_from_dict(data, str(path), spacing_override)


def save_mission(mission: Mission, path) -> None:
    Path(path).write_text(yaml.safe_dump(mission_to_dict(mission), sort_keys=False))
