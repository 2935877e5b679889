"""Per-class online height models and 2D-to-3D prediction.

Each object class keeps a reference frame (anchored at the first sighting's
minimum range and median bearing) and a grid of height histograms indexed
by range and bearing offsets in that frame. Fused 3D returns update the
histogram of the cell they fall in by Bayes' rule with a Gaussian
measurement likelihood. Returns seen only in the horizontal image are then
lifted to 3D by reading off the most probable height below and above the
sonar.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .classification import UNKNOWN
from .detection import FeatureCluster, project_planar
from .geometry import CartesianPoint, FusedPoint, spherical_xyz
from .registration import Transform2D, icp_2d, icp_2d_multistart

log = logging.getLogger(__name__)

MODEL_SCHEMA = "orthosonar.class_model"
MODEL_VERSION = 1


class PreconditionError(ValueError):
    """A call violated the documented contract (wrong class, untrained model)."""


class RegistrationError(RuntimeError):
    """ICP failed to register a sighting to its class reference frame."""


@dataclass(frozen=True)
class ObjectDetection:
    """A clustered object from the horizontal image with its class label."""

    cluster: FeatureCluster
    label: str
    confidence: float = 1.0


@dataclass(frozen=True)
class GridSpec:
    """Discretization of the (range offset, bearing offset, height) space."""

    r_min: float = -1.0
    r_max: float = 3.0
    r_step: float = 0.1
    theta_min: float = math.radians(-10.0)
    theta_max: float = math.radians(10.0)
    theta_step: float = math.radians(1.0)
    z_min: float = -5.0
    z_max: float = 5.0
    z_step: float = 0.05

    def __post_init__(self):
        for lo, hi, step, name in (
            (self.r_min, self.r_max, self.r_step, "r"),
            (self.theta_min, self.theta_max, self.theta_step, "theta"),
            (self.z_min, self.z_max, self.z_step, "z"),
        ):
            if step <= 0 or hi <= lo:
                raise ValueError(f"invalid {name} grid [{lo}, {hi}] step {step}")

    @property
    def n_r(self) -> int:
        return int(round((self.r_max - self.r_min) / self.r_step))

    @property
    def n_theta(self) -> int:
        return int(round((self.theta_max - self.theta_min) / self.theta_step))

    @property
    def n_z(self) -> int:
        return int(round((self.z_max - self.z_min) / self.z_step))

    def z_centers(self) -> np.ndarray:
        return self.z_min + (np.arange(self.n_z) + 0.5) * self.z_step

    def cell_indices(self, r, theta):
        """Cell indices for offsets; (-1, -1) where outside the grid."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        i = np.floor((r - self.r_min) / self.r_step + 1e-9).astype(np.int64)
        j = np.floor((theta - self.theta_min) / self.theta_step + 1e-9).astype(np.int64)
        ok = (i >= 0) & (i < self.n_r) & (j >= 0) & (j < self.n_theta)
        return np.where(ok, i, -1), np.where(ok, j, -1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class HeightDistribution:
    """Discrete P(z) over a uniform height grid, stored as log-probabilities."""

    def __init__(self, z_centers: np.ndarray, log_probs: Optional[np.ndarray] = None):
        self.z_centers = np.asarray(z_centers, dtype=float)
        if log_probs is None:
            log_probs = np.full(self.z_centers.size, -math.log(self.z_centers.size))
        self.log_probs = np.asarray(log_probs, dtype=float)

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def update(self, z: float, sigma: float, floor: float = 0.0) -> None:
        """Multiply by the measurement likelihood and renormalize."""
        self.log_probs = self.log_probs + log_likelihood(self.z_centers, z, sigma, floor)
        self.log_probs -= logsumexp(self.log_probs)

    def mode(self) -> float:
        return float(self.z_centers[np.argmax(self.log_probs)])


def log_likelihood(z_centers: np.ndarray, z: float, sigma: float, floor: float = 0.0) -> np.ndarray:
    """log of a peak-one Gaussian in z plus a constant outlier floor.

    The Gaussian is scaled to 1 at its peak rather than to unit area, so
    ``floor`` is a fraction of the peak likelihood and means the same thing
    for any ``sigma``. With ``floor = 0`` the scale cancels on
    renormalization and the update is the plain Gaussian product.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    q = -0.5 * ((z_centers - z) / sigma) ** 2
    if floor <= 0:
        return q
    return np.logaddexp(q, math.log(floor))


@dataclass
class ReferenceFrame:
    origin_range: float = float("nan")
    origin_bearing: float = float("nan")
    reference_cloud: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def initialized(self) -> bool:
        return len(self.reference_cloud) > 0

    def offsets(self, ref_pts) -> Tuple[np.ndarray, np.ndarray]:
        """Range and bearing offsets of reference-frame points.

        The frame's x axis points along the first sighting's line of sight,
        with the virtual sensor ``origin_range`` behind the origin.
        """
        q = np.asarray(ref_pts, dtype=float).reshape(-1, 2)
        u = q[:, 0] + self.origin_range
        return np.hypot(u, q[:, 1]) - self.origin_range, np.arctan2(q[:, 1], u)


def anchor_transform(ranges, bearings) -> Tuple[Transform2D, float, float]:
    """Transform putting a sighting's (min range, median bearing) anchor at the origin.

    The rotation aligns the anchor's line of sight with +x, so objects seen
    at different bearings share an orientation in the reference frame.
    """
    r0 = float(np.min(ranges))
    b0 = float(np.median(bearings))
    rot = Transform2D(-b0, (0.0, 0.0))
    anchor = np.array([r0 * math.cos(b0), r0 * math.sin(b0)])
    t = -rot.matrix() @ anchor
    return Transform2D(-b0, (t[0], t[1])), r0, b0


class ClassModel:
    """Online height model for one object class."""

    def __init__(self, class_id: str, grid: GridSpec = GridSpec(), likelihood_floor: float = 1e-3,
                 max_reference_points: int = 5000, seed: int = 0):
        self.class_id = class_id
        self.grid = grid
        self.likelihood_floor = likelihood_floor
        self.max_reference_points = max_reference_points
        self.reference = ReferenceFrame()
        self.cells: Dict[Tuple[int, int], np.ndarray] = {}
        self.update_count = 0
        self.dropped_count = 0
        self._rng = np.random.default_rng(seed)
        self._z = grid.z_centers()

    def distribution(self, i: int, j: int) -> HeightDistribution:
        lp = self.cells.get((int(i), int(j)))
        return HeightDistribution(self._z, None if lp is None else lp.copy())

    def apply_update(self, i: int, j: int, z: float, sigma: float) -> None:
        key = (int(i), int(j))
        d = self.distribution(*key)
        d.update(z, sigma, self.likelihood_floor)
        self.cells[key] = d.log_probs
        self.update_count += 1

    def grow_reference(self, ref_pts: np.ndarray) -> None:
        cloud = np.vstack([self.reference.reference_cloud, ref_pts])
        if len(cloud) > self.max_reference_points:
            keep = np.sort(self._rng.choice(len(cloud), self.max_reference_points, replace=False))
            cloud = cloud[keep]
        self.reference.reference_cloud = cloud

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "version": MODEL_VERSION,
            "class_id": self.class_id,
            "grid": self.grid.to_dict(),
            "likelihood_floor": self.likelihood_floor,
            "max_reference_points": self.max_reference_points,
            "update_count": self.update_count,
            "dropped_count": self.dropped_count,
            "reference": {
                "origin_range": self.reference.origin_range,
                "origin_bearing": self.reference.origin_bearing,
                "cloud": self.reference.reference_cloud.tolist(),
            },
            "cells": [
                {"r": i, "theta": j, "log_probs": lp.tolist()}
                for (i, j), lp in sorted(self.cells.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"not a class model file (schema={d.get('schema')!r})")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported class model version {d.get('version')!r}")
        m = cls(d["class_id"], GridSpec(**d["grid"]), d["likelihood_floor"], d["max_reference_points"])
        m.update_count = int(d["update_count"])
        m.dropped_count = int(d["dropped_count"])
        ref = d["reference"]
        m.reference = ReferenceFrame(
            float(ref["origin_range"]), float(ref["origin_bearing"]),
            np.array(ref["cloud"], dtype=float).reshape(-1, 2),
        )
        for c in d["cells"]:
            lp = np.array(c["log_probs"], dtype=float)
            if lp.size != m.grid.n_z:
                raise ValueError("cell distribution length does not match the z grid")
            m.cells[(int(c["r"]), int(c["theta"]))] = lp
        return m

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ClassModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_label(det: ObjectDetection, model: ClassModel) -> None:
    if det.label == UNKNOWN or det.label != model.class_id:
        raise PreconditionError(
            f"detection labelled {det.label!r} cannot be used with the {model.class_id!r} model"
        )


def register_object(det: ObjectDetection, model: ClassModel, grow_reference: bool,
                    max_iters: int = 50, tol: float = 1e-4,
                    max_residual: float = float("inf")) -> Transform2D:
    """Transform taking the sighting's planar points into the class reference frame.

    The first sighting defines the frame. Later sightings are aligned by
    their anchors and refined with ICP against the reference cloud. Raises
    :class:`RegistrationError` when ICP does not converge or leaves a mean
    residual above ``max_residual``.
    """
    _check_label(det, model)
    cl = det.cluster
    ranges, bearings = cl.ranges(), cl.angles()
    pts = project_planar(ranges, bearings)
    anchor, r0, b0 = anchor_transform(ranges, bearings)
    local = anchor.apply(pts)
    if not model.reference.initialized:
        if not grow_reference:
            raise PreconditionError("the class reference frame has not been established yet")
        model.reference.origin_range = r0
        model.reference.origin_bearing = b0
        model.grow_reference(local)
        return Transform2D(anchor.rotation, anchor.translation, 0.0, True, 0, (0.0,))
    if len(local) < 3 or len(model.reference.reference_cloud) < 3:
        raise RegistrationError("too few points to register")
    fit = icp_2d_multistart(local, model.reference.reference_cloud, Transform2D(), max_iters, tol)
    if not fit.converged or fit.mean_residual > max_residual:
        raise RegistrationError(
            f"ICP failed for {model.class_id}: converged={fit.converged} residual={fit.mean_residual:.3f}"
        )
    full = fit.compose(anchor)
    full = Transform2D(full.rotation, full.translation, fit.mean_residual, True, fit.iterations, fit.history)
    if grow_reference:
        model.grow_reference(full.apply(pts))
    return full


def fused_observations(fused: Sequence[FusedPoint]):
    """Planar image positions (unknown angle zeroed) and heights of fused points."""
    r = np.array([f.range for f in fused], dtype=float)
    b = np.array([f.bearing for f in fused], dtype=float)
    e = np.array([f.elevation for f in fused], dtype=float)
    return project_planar(r, b), r * np.sin(e)


def update_class_model(model: ClassModel, fused: Sequence[FusedPoint], transform: Transform2D,
                       sigma: float = 0.1) -> ClassModel:
    """Bayes-update the cells hit by ``fused`` points; returns the same model.

    The cell is chosen from where the return appears in the horizontal image
    (range and bearing, elevation ignored), because that is all that is known
    when the model is queried later. Points outside the grid are counted in
    ``model.dropped_count``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not fused:
        return model
    planar, z = fused_observations(fused)
    r_off, t_off = model.reference.offsets(transform.apply(planar))
    ii, jj = model.grid.cell_indices(r_off, t_off)
    for i, j, zk in zip(ii.tolist(), jj.tolist(), z.tolist()):
        if i < 0:
            model.dropped_count += 1
            continue
        model.apply_update(i, j, zk, sigma)
    return model


def default_confidence_threshold(grid: GridSpec) -> float:
    """Five times the probability of a bin under the uniform prior."""
    return 5.0 / grid.n_z


def map_estimate_cell(model: ClassModel, i: int, j: int, confidence_threshold: Optional[float] = None) -> List[float]:
    if confidence_threshold is None:
        confidence_threshold = default_confidence_threshold(model.grid)
    lp = model.cells.get((int(i), int(j)))
    if lp is None:
        return []
    p = np.exp(lp)
    z = model._z
    out = []
    for branch in (z <= 0, z > 0):
        idx = np.nonzero(branch)[0]
        if idx.size == 0:
            continue
        k = idx[np.argmax(p[idx])]
        # strict, with a relative margin so exp/log rounding cannot turn a tie into a pass
        if p[k] > confidence_threshold * (1 + 1e-9):
            out.append(float(z[k]))
    return out


def map_estimate(model: ClassModel, r: float, theta: float,
                 confidence_threshold: Optional[float] = None) -> List[float]:
    """Most probable height at or below zero and above zero for a cell.

    ``r`` and ``theta`` are range and bearing offsets in the class reference
    frame. Heights are returned (negative branch first) only where their bin
    probability exceeds ``confidence_threshold``.
    """
    i, j = model.grid.cell_indices(r, theta)
    if int(i) < 0:
        raise ValueError(f"offset ({r}, {theta}) lies outside the model grid")
    return map_estimate_cell(model, int(i), int(j), confidence_threshold)


def predict_heights_array(det: ObjectDetection, model: ClassModel, skip: Sequence[int] = (),
                          confidence_threshold: Optional[float] = None, max_iters: int = 50,
                          tol: float = 1e-4, max_residual: float = float("inf"),
                          max_elevation: Optional[float] = None):
    """Array form of :func:`predict_heights`.

    Returns ``(points, feature_index)``: robot-frame (N, 3) points and the
    index of the cluster feature each one came from. Features listed in
    ``skip`` (already fused) are not predicted. With ``max_elevation`` set,
    heights implying an elevation angle beyond it are discarded: the return
    could not have come from there if the sensor's vertical beam ends at
    that angle.
    """
    _check_label(det, model)
    if model.update_count < 1:
        raise PreconditionError(f"the {model.class_id!r} model has not been updated yet")
    transform = register_object(det, model, False, max_iters, tol, max_residual)
    cl = det.cluster
    ranges, bearings = cl.ranges(), cl.angles()
    r_off, t_off = model.reference.offsets(transform.apply(project_planar(ranges, bearings)))
    ii, jj = model.grid.cell_indices(r_off, t_off)
    skip = set(int(k) for k in skip)
    R, B, Z, idx = [], [], [], []
    for k, (i, j) in enumerate(zip(ii.tolist(), jj.tolist())):
        if k in skip or i < 0:
            continue
        for z in map_estimate_cell(model, i, j, confidence_threshold):
            if abs(z) > ranges[k]:
                continue
            if max_elevation is not None and abs(z) > ranges[k] * math.sin(max_elevation):
                continue
            R.append(ranges[k])
            B.append(bearings[k])
            Z.append(z)
            idx.append(k)
    if not R:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    R = np.asarray(R)
    elev = np.arcsin(np.asarray(Z) / R)
    return spherical_xyz(R, np.asarray(B), elev), np.asarray(idx, dtype=np.int64)


def predict_heights(det: ObjectDetection, model: ClassModel, skip: Sequence[int] = (),
                    confidence_threshold: Optional[float] = None, **icp) -> List[CartesianPoint]:
    """Lift a detection's 2D features to up to two 3D points each.

    Registers the detection without growing the reference cloud, looks up
    the MAP heights of each feature's cell and solves for the elevation that
    reproduces the measured range. Features whose height exceeds their range
    have no real solution and are skipped.
    """
    pts, _ = predict_heights_array(det, model, skip, confidence_threshold, **icp)
    return [CartesianPoint.from_array(p) for p in pts]
