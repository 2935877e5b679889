"""Global point map, coverage (voxel count) and absolute-error metrics, exports."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .geometry import PlanarPose
from .scene import Scene, distances_to_scene

FUSED = "fused"
INFERRED = "inferred"
SOURCES = (FUSED, INFERRED)


class GlobalMap:
    """Append-only cloud in the map frame; each point carries a source tag and frame index."""

    def __init__(self):
        self._pts = []
        self._src = []
        self._frame = []
        self._cache = None

    def __len__(self):
        return int(sum(len(p) for p in self._pts))

    def accumulate(self, pose: PlanarPose, points, tag: str, frame: int = -1) -> "GlobalMap":
        """Map robot-frame ``points`` through ``pose`` and append them."""
        if tag not in SOURCES:
            raise ValueError(f"tag must be one of {SOURCES}, got {tag!r}")
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return self
        world = pose.apply(pts)
        if not np.all(np.isfinite(world)):
            raise ValueError("map points must be finite")
        self._pts.append(world)
        self._src.append(np.full(len(world), SOURCES.index(tag), dtype=np.int8))
        self._frame.append(np.full(len(world), frame, dtype=np.int64))
        self._cache = None
        return self

    def _arrays(self):
        if self._cache is None:
            if self._pts:
                self._cache = (np.vstack(self._pts), np.concatenate(self._src), np.concatenate(self._frame))
            else:
                self._cache = (np.zeros((0, 3)), np.zeros(0, np.int8), np.zeros(0, np.int64))
        return self._cache

    @property
    def points(self) -> np.ndarray:
        return self._arrays()[0]

    @property
    def source_codes(self) -> np.ndarray:
        return self._arrays()[1]

    @property
    def frames(self) -> np.ndarray:
        return self._arrays()[2]

    def select(self, tag: Optional[str] = None) -> np.ndarray:
        if tag is None:
            return self.points
        return self.points[self.source_codes == SOURCES.index(tag)]

    def count(self, tag: str) -> int:
        return int(np.sum(self.source_codes == SOURCES.index(tag)))


def accumulate(gmap: GlobalMap, pose: PlanarPose, points, tag: str, frame: int = -1) -> GlobalMap:
    return gmap.accumulate(pose, points, tag, frame)


def voxel_keys(points, cell_size: float) -> np.ndarray:
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.floor(pts / cell_size).astype(np.int64)


def voxel_count(points, cell_size: float = 0.1) -> int:
    """Number of distinct occupied cells; accepts a GlobalMap or an (N, 3) array."""
    if isinstance(points, GlobalMap):
        points = points.points
    keys = voxel_keys(points, cell_size)
    if len(keys) == 0:
        return 0
    return int(len(np.unique(keys, axis=0)))


@dataclass(frozen=True)
class ErrorSummary:
    count: int
    median: float
    q1: float
    q3: float
    mean: float
    max: float
    outlier_fraction: float

    def to_dict(self) -> Dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summarize_errors(errors) -> ErrorSummary:
    """Box-plot statistics; outliers lie beyond 1.5 IQR from the quartiles."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        nan = float("nan")
        return ErrorSummary(0, nan, nan, nan, nan, nan, 0.0)
    q1, med, q3 = np.percentile(e, [25, 50, 75])
    iqr = q3 - q1
    out = (e < q1 - 1.5 * iqr) | (e > q3 + 1.5 * iqr)
    return ErrorSummary(int(e.size), float(med), float(q1), float(q3), float(e.mean()),
                        float(e.max()), float(out.mean()))


def absolute_error(points, scene: Scene) -> np.ndarray:
    """Distance from every map point to the nearest scene surface."""
    if isinstance(points, GlobalMap):
        points = points.points
    return distances_to_scene(points, scene)


# ---------------------------------------------------------------------------
# export


def write_ply(gmap: GlobalMap, path) -> None:
    """ASCII PLY with x y z, a ``source`` code (0 fused, 1 inferred) and frame index."""
    pts, src, frame = gmap.points, gmap.source_codes, gmap.frames
    lines = [
        "ply",
        "format ascii 1.0",
        "comment source 0=fused 1=inferred",
        f"element vertex {len(pts)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar source",
        "property int frame",
        "end_header",
    ]
    lines += [f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {s} {f}" for p, s, f in zip(pts, src, frame)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path):
    """Read back a cloud written by :func:`write_ply`; returns (points, source, frame)."""
    text = Path(path).read_text().splitlines()
    end = text.index("end_header")
    rows = [l.split() for l in text[end + 1:] if l.strip()]
    if not rows:
        return np.zeros((0, 3)), np.zeros(0, np.int8), np.zeros(0, np.int64)
    arr = np.array(rows, dtype=float)
    return arr[:, :3], arr[:, 3].astype(np.int8), arr[:, 4].astype(np.int64)


def write_csv(gmap: GlobalMap, path) -> None:
    pts, src, frame = gmap.points, gmap.source_codes, gmap.frames
    lines = ["x,y,z,source,frame"]
    lines += [f"{p[0]:.6f},{p[1]:.6f},{p[2]:.6f},{SOURCES[s]},{f}" for p, s, f in zip(pts, src, frame)]
    Path(path).write_text("\n".join(lines) + "\n")
