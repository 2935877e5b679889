"""Feature extraction (SOCA-CFAR) and density clustering of sonar features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _accel
from ._accel import njit
from .geometry import SphericalMeasurement
from .sonar_sim import PolarImage


class CFARConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ImageFeature:
    range_bin: int
    angle_bin: int
    measurement: SphericalMeasurement
    orientation: str = "horizontal"

    @property
    def range(self) -> float:
        return self.measurement.range

    @property
    def angle(self) -> float:
        """Resolved angle: bearing for horizontal features, elevation for vertical."""
        m = self.measurement
        return m.bearing if self.orientation == "horizontal" else m.elevation


@dataclass(frozen=True)
class FeatureCluster:
    features: tuple
    orientation: str = "horizontal"

    def __post_init__(self):
        if not self.features:
            raise ValueError("a cluster needs at least one feature")
        object.__setattr__(self, "features", tuple(self.features))

    def __len__(self):
        return len(self.features)

    def ranges(self) -> np.ndarray:
        return np.array([f.range for f in self.features])

    def angles(self) -> np.ndarray:
        return np.array([f.angle for f in self.features])

    def bins(self) -> np.ndarray:
        return np.array([(f.range_bin, f.angle_bin) for f in self.features], dtype=np.int64)

    def planar_points(self) -> np.ndarray:
        """Features projected to the sonar plane with the unknown angle set to zero."""
        return project_planar(self.ranges(), self.angles())


def project_planar(ranges, angles) -> np.ndarray:
    ranges = np.asarray(ranges, dtype=float)
    angles = np.asarray(angles, dtype=float)
    return np.stack([ranges * np.cos(angles), ranges * np.sin(angles)], axis=-1).reshape(-1, 2)


# ---------------------------------------------------------------------------
# SOCA-CFAR


@njit
def _soca_noise_loop(img, train, guard):
    nr, na = img.shape
    # prefix sums along range (rows) and angle (columns); strip sums are O(1)
    col = np.zeros((nr + 1, na))
    row = np.zeros((nr, na + 1))
    for i in range(nr):
        for j in range(na):
            col[i + 1, j] = col[i, j] + img[i, j]
            row[i, j + 1] = row[i, j] + img[i, j]
    noise = np.empty((nr, na))
    for i in range(nr):
        for j in range(na):
            best = np.inf
            # leading / lagging along range, left / right along angle
            for side in range(4):
                if side < 2:
                    n, pos = nr, i
                else:
                    n, pos = na, j
                if side % 2 == 0:
                    lo, hi = pos - guard - train, pos - guard
                else:
                    lo, hi = pos + guard + 1, pos + guard + train + 1
                lo = min(max(lo, 0), n)
                hi = min(max(hi, 0), n)
                if hi <= lo:
                    continue
                if side < 2:
                    m = (col[hi, j] - col[lo, j]) / (hi - lo)
                else:
                    m = (row[i, hi] - row[i, lo]) / (hi - lo)
                if m < best:
                    best = m
            noise[i, j] = best
    return noise


def _one_sided_means(img, train, guard, axis):
    """Means of the leading and lagging training strips along ``axis``."""
    a = np.moveaxis(img, axis, 0)
    n = a.shape[0]
    csum = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)], axis=0)
    idx = np.arange(n)
    out = []
    for lo, hi in ((idx - guard - train, idx - guard - 1), (idx + guard + 1, idx + guard + train)):
        lo_c = np.clip(lo, 0, n)
        hi_c = np.clip(hi + 1, 0, n)
        count = np.maximum(hi_c - lo_c, 0)
        s = csum[np.maximum(hi_c, lo_c)] - csum[lo_c]
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = s / count.reshape((-1,) + (1,) * (a.ndim - 1))
        mean[count == 0] = np.inf
        out.append(np.moveaxis(mean, 0, axis))
    return out


def _soca_noise_numpy(img, train, guard):
    lead, lag = _one_sided_means(img, train, guard, 0)
    left, right = _one_sided_means(img, train, guard, 1)
    return np.minimum(np.minimum(lead, lag), np.minimum(left, right))


def soca_noise(intensities, train_cells: int, guard_cells: int, use_numba=None) -> np.ndarray:
    """Smallest-of the four one-sided training averages at every pixel."""
    img = np.ascontiguousarray(intensities, dtype=float)
    if train_cells < 1 or guard_cells < 1:
        raise CFARConfigError("train_cells and guard_cells must be >= 1")
    span = 2 * (train_cells + guard_cells) + 1
    if img.ndim != 2 or min(img.shape) < span:
        raise CFARConfigError(
            f"CFAR window ({span} cells) does not fit image of shape {img.shape}"
        )
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        return _soca_noise_loop(img, train_cells, guard_cells)
    return _soca_noise_numpy(img, train_cells, guard_cells)


def soca_cfar_mask(intensities, train_cells=10, guard_cells=2, threshold_factor=15.8,
                   use_numba=None) -> np.ndarray:
    if threshold_factor <= 0:
        raise CFARConfigError("threshold_factor must be positive")
    img = np.asarray(intensities, dtype=float)
    noise = soca_noise(img, train_cells, guard_cells, use_numba=use_numba)
    return img > threshold_factor * noise


def features_from_mask(img: PolarImage, mask: np.ndarray) -> List[ImageFeature]:
    cfg = img.config
    rows, cols = np.nonzero(mask)
    ranges = cfg.range_centers()
    angles = cfg.angle_centers()
    horizontal = cfg.orientation == "horizontal"
    feats = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        a = float(angles[c])
        m = SphericalMeasurement(
            float(ranges[r]),
            a if horizontal else None,
            None if horizontal else a,
            float(img.intensities[r, c]),
        )
        feats.append(ImageFeature(r, c, m, cfg.orientation))
    return feats


def soca_cfar(img: PolarImage, train_cells: int = 10, guard_cells: int = 2,
              threshold_factor: float = 15.8) -> List[ImageFeature]:
    """Detect pixels brighter than ``threshold_factor`` times their SOCA noise level.

    Features come back in row-major (range, angle) order.
    """
    mask = soca_cfar_mask(img.intensities, train_cells, guard_cells, threshold_factor)
    return features_from_mask(img, mask)


# ---------------------------------------------------------------------------
# DBSCAN


def dbscan_labels(points, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering of (N, 2) points; noise gets label -1.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Core points within ``eps`` of each other share a cluster.
    Border points join the cluster of their nearest core neighbour (ties go
    to the lexicographically smallest core coordinate), which keeps labels
    independent of input order. Clusters are numbered by their
    lexicographically smallest member.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    if eps <= 0:
        raise ValueError("eps must be positive")
    tree = cKDTree(pts)
    neigh = tree.query_ball_point(pts, eps)
    core = np.array([len(nb) >= min_pts for nb in neigh])

    comp = np.full(n, -1, dtype=np.int64)
    ncomp = 0
    for i in np.nonzero(core)[0]:
        if comp[i] >= 0:
            continue
        comp[i] = ncomp
        stack = [i]
        while stack:
            j = stack.pop()
            for k in neigh[j]:
                if core[k] and comp[k] < 0:
                    comp[k] = ncomp
                    stack.append(k)
        ncomp += 1

    for i in np.nonzero(~core)[0]:
        cands = [k for k in neigh[i] if core[k]]
        if not cands:
            continue
        cands = np.array(cands)
        d = np.hypot(*(pts[cands] - pts[i]).T)
        order = np.lexsort((pts[cands, 1], pts[cands, 0], d))
        comp[i] = comp[cands[order[0]]]

    # canonical numbering by smallest member coordinate
    clustered = np.nonzero(comp >= 0)[0]
    if len(clustered) == 0:
        return labels
    first = {}
    for i in clustered[np.lexsort((pts[clustered, 1], pts[clustered, 0]))]:
        first.setdefault(int(comp[i]), len(first))
    labels[clustered] = [first[int(c)] for c in comp[clustered]]
    return labels


def feature_points(features: Sequence[ImageFeature]) -> np.ndarray:
    return project_planar([f.range for f in features], [f.angle for f in features])


def cluster_features(features: Sequence[ImageFeature], eps: float = 0.5,
                     min_pts: int = 4) -> List[FeatureCluster]:
    """Group features with DBSCAN in the metric sonar plane; noise is dropped."""
    if not features:
        return []
    labels = dbscan_labels(feature_points(features), eps, min_pts)
    orientation = features[0].orientation
    clusters = []
    for c in range(labels.max() + 1):
        members = [features[i] for i in np.nonzero(labels == c)[0]]
        members.sort(key=lambda f: (f.range_bin, f.angle_bin))
        clusters.append(FeatureCluster(tuple(members), orientation))
    return clusters


def filter_clusters(clusters: Sequence[FeatureCluster], n: int) -> List[FeatureCluster]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return [c for c in clusters if len(c) >= n]
