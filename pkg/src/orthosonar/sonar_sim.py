"""Synthetic orthogonal imaging-sonar renderer.

Both sonars sit at the robot origin. The horizontal sonar resolves bearing
and integrates over elevation; the vertical sonar resolves elevation and
integrates over bearing. Each angular bin fires ``rays_per_bin`` rays across
the unresolved aperture and deposits the first hit of each ray into its
range bin, weighted by the cosine of the incidence angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from . import _accel
from ._accel import njit
from .geometry import PlanarPose
from .scene import Scene

_EPS_T = 1e-9
_BIN_EPS = 1e-9


@dataclass(frozen=True)
class SonarConfig:
    """Imaging sonar geometry plus the renderer's intensity model.

    ``angular_aperture`` spans the resolved axis (bearing for the horizontal
    sonar, elevation for the vertical one); ``vertical_beamwidth`` spans the
    unresolved axis.
    """

    max_range: float = 30.0
    range_resolution: float = 0.05
    angular_aperture: float = math.radians(130.0)
    angular_bin_count: int = 260
    vertical_beamwidth: float = math.radians(20.0)
    orientation: str = "horizontal"
    rays_per_bin: int = 32
    gain: float = 1.0
    noise_floor: float = 1e-3
    speckle_scale: float = 0.5
    grazing_floor: float = 0.1

    def __post_init__(self):
        if self.orientation not in ("horizontal", "vertical"):
            raise ValueError(f"orientation must be horizontal or vertical, got {self.orientation!r}")
        ratio = self.max_range / self.range_resolution
        if self.range_resolution <= 0 or ratio < 1 or abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("max_range / range_resolution must be a positive integer")
        if self.angular_bin_count < 2:
            raise ValueError("angular_bin_count must be >= 2")
        if self.rays_per_bin < 1:
            raise ValueError("rays_per_bin must be >= 1")
        if not (0 < self.angular_aperture < 2 * math.pi and 0 < self.vertical_beamwidth < math.pi):
            raise ValueError("apertures must be positive angles")
        if self.noise_floor < 0 or self.speckle_scale < 0 or self.gain < 0:
            raise ValueError("intensity model parameters must be non-negative")

    @property
    def range_bins(self) -> int:
        return int(round(self.max_range / self.range_resolution))

    @property
    def angle_resolution(self) -> float:
        return self.angular_aperture / self.angular_bin_count

    def range_centers(self) -> np.ndarray:
        return (np.arange(self.range_bins) + 0.5) * self.range_resolution

    def angle_centers(self) -> np.ndarray:
        return -self.angular_aperture / 2 + (np.arange(self.angular_bin_count) + 0.5) * self.angle_resolution

    def sweep_angles(self) -> np.ndarray:
        """Ray angles across the unresolved aperture."""
        k = self.rays_per_bin
        return -self.vertical_beamwidth / 2 + (np.arange(k) + 0.5) * self.vertical_beamwidth / k

    def range_bin(self, r):
        return np.floor(np.asarray(r) / self.range_resolution + _BIN_EPS).astype(np.int64)

    def angle_bin(self, a):
        return np.floor((np.asarray(a) + self.angular_aperture / 2) / self.angle_resolution + _BIN_EPS).astype(np.int64)


def default_horizontal_config(**kw) -> SonarConfig:
    return replace(SonarConfig(), **kw)


def default_vertical_config(**kw) -> SonarConfig:
    base = SonarConfig(
        angular_aperture=math.radians(20.0),
        angular_bin_count=40,
        vertical_beamwidth=math.radians(20.0),
        orientation="vertical",
    )
    return replace(base, **kw)


@dataclass
class PolarImage:
    """Range x angle intensity grid; rows are range bins."""

    config: SonarConfig
    intensities: np.ndarray

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities, dtype=float)
        shape = (self.config.range_bins, self.config.angular_bin_count)
        if self.intensities.shape != shape:
            raise ValueError(f"image shape {self.intensities.shape} does not match config {shape}")
        if not np.all(np.isfinite(self.intensities)) or np.any(self.intensities < 0):
            raise ValueError("intensities must be finite and non-negative")

    @property
    def orientation(self) -> str:
        return self.config.orientation

    def normalized(self) -> np.ndarray:
        """Per-image min-max normalization to [0, 1] (all zeros if constant)."""
        lo, hi = self.intensities.min(), self.intensities.max()
        if hi <= lo:
            return np.zeros_like(self.intensities)
        return (self.intensities - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# ray casting kernels


@njit
def _cast_rays_loop(origin, dirs, cyl, box, wall):
    n = dirs.shape[0]
    t_hit = np.full(n, np.inf)
    cos_hit = np.zeros(n)
    who = np.full(n, -1, dtype=np.int64)
    nc, nb = cyl.shape[0], box.shape[0]
    ox, oy, oz = origin[0], origin[1], origin[2]
    for i in range(n):
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        best = np.inf
        bcos = 0.0
        bwho = -1
        for k in range(nc):
            px = ox - cyl[k, 0]
            py = oy - cyl[k, 1]
            zlo, zhi, r = cyl[k, 2], cyl[k, 3], cyl[k, 4]
            a = dx * dx + dy * dy
            if a > 0.0:
                b = px * dx + py * dy
                c = px * px + py * py - r * r
                disc = b * b - a * c
                if disc >= 0.0:
                    t = (-b - math.sqrt(disc)) / a
                    if t > _EPS_T and t < best:
                        z = oz + t * dz
                        if zlo <= z <= zhi:
                            best = t
                            bcos = abs(dx * (px + t * dx) + dy * (py + t * dy)) / r
                            bwho = k
            if dz != 0.0:
                for cap in range(2):
                    zc = zhi if cap == 0 else zlo
                    if (cap == 0 and oz > zhi and dz < 0.0) or (cap == 1 and oz < zlo and dz > 0.0):
                        t = (zc - oz) / dz
                        if t > _EPS_T and t < best:
                            hx = px + t * dx
                            hy = py + t * dy
                            if hx * hx + hy * hy <= r * r:
                                best = t
                                bcos = abs(dz)
                                bwho = k
        for k in range(nb):
            cyaw = math.cos(box[k, 6])
            syaw = math.sin(box[k, 6])
            rx = ox - box[k, 0]
            ry = oy - box[k, 1]
            lp0 = cyaw * rx + syaw * ry
            lp1 = -syaw * rx + cyaw * ry
            lp2 = oz - box[k, 2]
            ld0 = cyaw * dx + syaw * dy
            ld1 = -syaw * dx + cyaw * dy
            ld2 = dz
            tnear = -np.inf
            tfar = np.inf
            axis = -1
            sgn = 0.0
            miss = False
            for ax in range(3):
                p = lp0 if ax == 0 else (lp1 if ax == 1 else lp2)
                d = ld0 if ax == 0 else (ld1 if ax == 1 else ld2)
                h = box[k, 3 + ax]
                if abs(d) < 1e-15:
                    if abs(p) > h:
                        miss = True
                        break
                    continue
                t1 = (-h - p) / d
                t2 = (h - p) / d
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > tnear:
                    tnear = t1
                    axis = ax
                    sgn = -1.0 if d > 0 else 1.0
                if t2 < tfar:
                    tfar = t2
            if miss or axis < 0 or tnear > tfar or tnear <= _EPS_T or tnear >= best:
                continue
            d = ld0 if axis == 0 else (ld1 if axis == 1 else ld2)
            best = tnear
            bcos = abs(d)
            bwho = nc + k
        for k in range(wall.shape[0]):
            ax_, ay_ = wall[k, 0], wall[k, 1]
            ux = wall[k, 2] - ax_
            uy = wall[k, 3] - ay_
            length = math.sqrt(ux * ux + uy * uy)
            ux /= length
            uy /= length
            nx, ny = -uy, ux
            denom = dx * nx + dy * ny
            if abs(denom) < 1e-15:
                continue
            t = ((ax_ - ox) * nx + (ay_ - oy) * ny) / denom
            if t <= _EPS_T or t >= best:
                continue
            hx = ox + t * dx - ax_
            hy = oy + t * dy - ay_
            s = hx * ux + hy * uy
            z = oz + t * dz
            if 0.0 <= s <= length and wall[k, 4] <= z <= wall[k, 5]:
                best = t
                bcos = abs(denom)
                bwho = nc + nb + k
        t_hit[i] = best
        cos_hit[i] = bcos
        who[i] = bwho
    return t_hit, cos_hit, who


def _cast_rays_numpy(origin, dirs, cyl, box, wall):
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    bcos = np.zeros(n)
    bwho = np.full(n, -1, dtype=np.int64)
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    ox, oy, oz = origin

    def take(t, cos, k):
        better = np.isfinite(t) & (t > _EPS_T) & (t < best)
        best[better] = t[better]
        bcos[better] = cos[better]
        bwho[better] = k

    nc, nb = len(cyl), len(box)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(nc):
            cx, cy, zlo, zhi, r = cyl[k]
            px, py = ox - cx, oy - cy
            a = dx * dx + dy * dy
            b = px * dx + py * dy
            c = px * px + py * py - r * r
            disc = b * b - a * c
            t = np.where((a > 0) & (disc >= 0), (-b - np.sqrt(np.maximum(disc, 0))) / a, np.inf)
            z = oz + t * dz
            t = np.where((z >= zlo) & (z <= zhi), t, np.inf)
            cos = np.abs(dx * (px + t * dx) + dy * (py + t * dy)) / r
            take(t, cos, k)
            for zc, ok in ((zhi, (oz > zhi) & (dz < 0)), (zlo, (oz < zlo) & (dz > 0))):
                t = np.where(ok, (zc - oz) / dz, np.inf)
                hx, hy = px + t * dx, py + t * dy
                t = np.where(hx * hx + hy * hy <= r * r, t, np.inf)
                take(t, np.abs(dz), k)
        for k in range(nb):
            cx, cy, cz, hx, hy, hz, yaw = box[k]
            cyaw, syaw = math.cos(yaw), math.sin(yaw)
            rx, ry = ox - cx, oy - cy
            lp = np.array([cyaw * rx + syaw * ry, -syaw * rx + cyaw * ry, oz - cz])
            ld = np.stack([cyaw * dx + syaw * dy, -syaw * dx + cyaw * dy, dz])
            half = np.array([hx, hy, hz])
            small = np.abs(ld) < 1e-15
            t1 = (-half[:, None] - lp[:, None]) / ld
            t2 = (half[:, None] - lp[:, None]) / ld
            lo = np.where(small, -np.inf, np.minimum(t1, t2))
            hi = np.where(small, np.inf, np.maximum(t1, t2))
            miss = np.any(small & (np.abs(lp)[:, None] > half[:, None]), axis=0)
            # first maximal axis wins ties, matching the loop kernel's strict '>'
            axis = np.argmax(lo, axis=0)
            tnear = lo[axis, np.arange(n)]
            tfar = hi.min(axis=0)
            t = np.where(~miss & (tnear <= tfar), tnear, np.inf)
            cos = np.abs(ld[axis, np.arange(n)])
            take(t, cos, nc + k)
        for k in range(len(wall)):
            x1, y1, x2, y2, zlo, zhi = wall[k]
            ux, uy = x2 - x1, y2 - y1
            length = math.hypot(ux, uy)
            ux, uy = ux / length, uy / length
            nx, ny = -uy, ux
            denom = dx * nx + dy * ny
            t = np.where(np.abs(denom) < 1e-15, np.inf, ((x1 - ox) * nx + (y1 - oy) * ny) / denom)
            s = (ox + t * dx - x1) * ux + (oy + t * dy - y1) * uy
            z = oz + t * dz
            ok = (s >= 0) & (s <= length) & (z >= zlo) & (z <= zhi)
            take(np.where(ok, t, np.inf), np.abs(denom), nc + nb + k)
    return best, bcos, bwho


def cast_rays(origin, dirs, scene: Scene, use_numba=None):
    """First-hit distance, |cos incidence| and primitive index for each ray.

    Misses report ``inf`` distance and primitive index -1.
    """
    cyl, box, wall, owner = scene.packed()
    origin = np.ascontiguousarray(origin, dtype=float)
    dirs = np.ascontiguousarray(dirs, dtype=float).reshape(-1, 3)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    kernel = _cast_rays_loop if use_numba else _cast_rays_numpy
    t, cos, who = kernel(origin, dirs, cyl, box, wall)
    prim = np.where(who >= 0, owner[np.maximum(who, 0)] if len(owner) else -1, -1)
    return t, cos, prim


# ---------------------------------------------------------------------------
# rendering


def _ray_directions(pose: PlanarPose, cfg: SonarConfig) -> np.ndarray:
    """Map-frame unit directions, shape (angular_bins * rays_per_bin, 3)."""
    resolved = cfg.angle_centers()
    sweep = cfg.sweep_angles()
    if cfg.orientation == "horizontal":
        bearing, elevation = np.meshgrid(resolved, sweep, indexing="ij")
    else:
        elevation, bearing = np.meshgrid(resolved, sweep, indexing="ij")
    bearing = bearing.ravel() + pose.yaw
    elevation = elevation.ravel()
    ce = np.cos(elevation)
    return np.stack([ce * np.cos(bearing), ce * np.sin(bearing), np.sin(elevation)], axis=1)


def render_clean(scene: Scene, pose: PlanarPose, cfg: SonarConfig, use_numba=None):
    """Noise-free return image and per-pixel owning primitive (-1 for none).

    The owner of a pixel is the primitive that contributed the most energy.
    """
    nr, na = cfg.range_bins, cfg.angular_bin_count
    signal = np.zeros((nr, na))
    owner = np.full((nr, na), -1, dtype=np.int64)
    if not scene.primitives:
        return signal, owner
    origin = np.array([pose.x, pose.y, pose.depth])
    dirs = _ray_directions(pose, cfg)
    t, cos, prim = cast_rays(origin, dirs, scene, use_numba=use_numba)
    col = np.repeat(np.arange(na), cfg.rays_per_bin)
    hit = np.isfinite(t) & (t < cfg.max_range)
    rb = cfg.range_bin(t[hit])
    ok = rb < nr
    rb, col, prim = rb[ok], col[hit][ok], prim[hit][ok]
    w = cfg.gain * np.maximum(cos[hit][ok], cfg.grazing_floor) / cfg.rays_per_bin
    np.add.at(signal, (rb, col), w)
    # per-pixel dominant primitive
    n_prim = len(scene.primitives)
    energy = np.zeros((nr * na, n_prim))
    np.add.at(energy, (rb * na + col, prim), w)
    has = energy.max(axis=1) > 0
    owner.ravel()[has] = energy[has].argmax(axis=1)
    return signal, owner


def speckle(shape, cfg: SonarConfig, rng: np.random.Generator) -> np.ndarray:
    """Unit-mean multiplicative gamma speckle with std ``speckle_scale``."""
    s2 = cfg.speckle_scale ** 2
    if s2 == 0:
        return np.ones(shape)
    return rng.gamma(1.0 / s2, s2, size=shape)


def render_image(scene: Scene, pose: PlanarPose, cfg: SonarConfig, rng: np.random.Generator,
                 use_numba=None) -> PolarImage:
    signal, _ = render_clean(scene, pose, cfg, use_numba=use_numba)
    noisy = (signal + cfg.noise_floor) * speckle(signal.shape, cfg, rng)
    return PolarImage(cfg, noisy)


def render_pair(scene: Scene, pose: PlanarPose, h_cfg: SonarConfig, v_cfg: SonarConfig,
                noise_seed: int) -> Tuple[PolarImage, PolarImage]:
    """Render the concurrent horizontal and vertical images for one keyframe."""
    if h_cfg.orientation != "horizontal" or v_cfg.orientation != "vertical":
        raise ValueError("render_pair expects a horizontal and a vertical config, in that order")
    rng = np.random.default_rng(noise_seed)
    h = render_image(scene, pose, h_cfg, rng)
    v = render_image(scene, pose, v_cfg, rng)
    return h, v
