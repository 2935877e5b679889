"""Object labelling from 40x40 sonar patches with vote-based rejection.

The labeller is a nearest-centroid model over hand-built patch descriptors.
Confidence comes from ``m`` predictions on randomly perturbed descriptors
(a stand-in for Monte-Carlo dropout): the modal label's vote fraction.
Objects whose confidence falls below the acceptance threshold are labelled
``UNKNOWN``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .detection import FeatureCluster
from .sonar_sim import PolarImage

PATCH_SIZE = 40
UNKNOWN = "unknown"
MODEL_SCHEMA = "orthosonar.classifier"
MODEL_VERSION = 2


class ClassifierTrainingError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectPatch:
    pixels: np.ndarray
    aspect_preserved: bool = True
    # rows x cols occupied by resampled content; the rest is zero padding
    content_shape: Tuple[int, int] = (PATCH_SIZE, PATCH_SIZE)
    # metric size of the cluster in the sonar plane, which letterboxing discards:
    # along-range extent, cross-range extent and their standard deviations (m)
    footprint: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.shape != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {px.shape}")
        if px.size and (px.min() < 0 or px.max() > 1):
            raise ValueError("patch values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class Classification:
    label: str
    confidence: float
    prediction_count: int
    votes: dict = field(default_factory=dict, compare=False)

    @property
    def is_unknown(self) -> bool:
        return self.label == UNKNOWN


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) matrix averaging source cells by fractional overlap."""
    scale = n_out / n_in
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i / scale, (i + 1) / scale
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / w.sum(axis=1, keepdims=True)


def resample_letterbox(box: np.ndarray, size: int = PATCH_SIZE):
    """Resize ``box`` so its longer side is ``size``, centred on a zero canvas."""
    h, w = box.shape
    scale = size / max(h, w)
    oh = max(1, min(size, int(round(h * scale))))
    ow = max(1, min(size, int(round(w * scale))))
    content = _area_weights(h, oh) @ box @ _area_weights(w, ow).T
    canvas = np.zeros((size, size))
    r0, c0 = (size - oh) // 2, (size - ow) // 2
    canvas[r0:r0 + oh, c0:c0 + ow] = content
    return canvas, (oh, ow)


def extract_patch(img: PolarImage, cluster: FeatureCluster) -> ObjectPatch:
    """Crop the cluster's pixel bounding box, min-max normalize, letterbox to 40x40."""
    bins = cluster.bins()
    r0, c0 = bins.min(axis=0)
    r1, c1 = bins.max(axis=0)
    nr, na = img.intensities.shape
    if r0 < 0 or c0 < 0 or r1 >= nr or c1 >= na:
        raise ValueError("cluster features lie outside the image")
    box = img.intensities[r0:r1 + 1, c0:c1 + 1]
    lo, hi = box.min(), box.max()
    box = (box - lo) / (hi - lo) if hi > lo else np.zeros_like(box)
    pixels, content = resample_letterbox(box)
    return ObjectPatch(np.clip(pixels, 0.0, 1.0), True, content, cluster_footprint(cluster))


def cluster_footprint(cluster: FeatureCluster) -> Tuple[float, float, float, float]:
    """Extent and spread of the cluster along and across the line of sight (m)."""
    pts = cluster.planar_points()
    c = pts.mean(axis=0)
    norm = float(np.hypot(*c))
    u = c / norm if norm > 0 else np.array([1.0, 0.0])
    along = pts @ u
    across = pts @ np.array([-u[1], u[0]])
    return (float(np.ptp(along)), float(np.ptp(across)), float(along.std()), float(across.std()))


# ---------------------------------------------------------------------------
# descriptors

DESCRIPTOR_NAMES = (
    "occupied_ratio",
    "log_aspect",
    "var_rows",
    "var_cols",
    "cov_rc",
    "mean_intensity",
    "radial_0",
    "radial_1",
    "radial_2",
    "radial_3",
    "row_profile_front",
    "row_profile_back",
    "log_extent_along",
    "log_extent_across",
    "log_spread_along",
    "log_spread_across",
)


def patch_descriptor(patch: ObjectPatch) -> np.ndarray:
    """Geometric descriptor of a patch (see ``DESCRIPTOR_NAMES``)."""
    oh, ow = patch.content_shape
    r0, c0 = (PATCH_SIZE - oh) // 2, (PATCH_SIZE - ow) // 2
    content = patch.pixels[r0:r0 + oh, c0:c0 + ow]
    occupied = float(np.mean(content > 0.25))
    log_aspect = float(np.log(oh / ow))
    total = content.sum()
    rr, cc = np.mgrid[0:oh, 0:ow]
    rr = (rr + 0.5) / PATCH_SIZE
    cc = (cc + 0.5) / PATCH_SIZE
    if total > 0:
        wr = float((content * rr).sum() / total)
        wc = float((content * cc).sum() / total)
        var_r = float((content * (rr - wr) ** 2).sum() / total)
        var_c = float((content * (cc - wc) ** 2).sum() / total)
        cov = float((content * (rr - wr) * (cc - wc)).sum() / total)
        dist = np.hypot(rr - wr, cc - wc)
        edges = np.array([0.0, 0.1, 0.2, 0.35, np.inf])
        radial = []
        for a, b in zip(edges[:-1], edges[1:]):
            ring = (dist >= a) & (dist < b)
            radial.append(float(content[ring].mean()) if ring.any() else 0.0)
    else:
        var_r = var_c = cov = 0.0
        radial = [0.0] * 4
    # energy in the nearer vs farther half along range
    half = max(1, oh // 2)
    front = float(content[:half].sum() / total) if total > 0 else 0.0
    back = float(content[half:].sum() / total) if total > 0 else 0.0
    return np.array(
        [occupied, log_aspect, var_r, var_c, cov, float(content.mean()), *radial, front, back,
         *np.log(np.asarray(patch.footprint) + 0.05)]
    )


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class ClassifierModel:
    classes: Tuple[str, ...]
    centroids: np.ndarray  # (C, D) in standardized units
    dispersions: np.ndarray  # (C,) RMS member distance to centroid, standardized
    feature_mean: np.ndarray  # (D,)
    feature_scale: np.ndarray  # (D,)
    perturbation_scale: float = 0.5

    def __post_init__(self):
        if len(self.classes) < 1:
            raise ValueError("a model needs at least one class")
        for name in ("centroids", "dispersions", "feature_mean", "feature_scale"):
            a = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, a)

    def standardize(self, descriptor) -> np.ndarray:
        return (np.asarray(descriptor, dtype=float) - self.feature_mean) / self.feature_scale

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "version": MODEL_VERSION,
            "descriptor": list(DESCRIPTOR_NAMES),
            "classes": list(self.classes),
            "centroids": self.centroids.tolist(),
            "dispersions": self.dispersions.tolist(),
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "perturbation_scale": self.perturbation_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"not a classifier model file (schema={d.get('schema')!r})")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported classifier model version {d.get('version')!r}")
        if tuple(d.get("descriptor", ())) != DESCRIPTOR_NAMES:
            raise ValueError("classifier model was built with a different descriptor")
        return cls(
            tuple(d["classes"]),
            np.array(d["centroids"]),
            np.array(d["dispersions"]),
            np.array(d["feature_mean"]),
            np.array(d["feature_scale"]),
            float(d["perturbation_scale"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_centroids(descriptors, labels: Sequence[str], perturbation_scale: float = 0.5,
                  min_per_class: int = 5) -> ClassifierModel:
    """Nearest-centroid fit on raw descriptor vectors.

    Features are standardized by the pooled within-class standard deviation
    so the perturbation scale is in units of typical class spread.
    """
    X = np.asarray(descriptors, dtype=float)
    labels = list(labels)
    counts = Counter(labels)
    if len(counts) < 2:
        raise ClassifierTrainingError("training needs at least two classes")
    small = sorted(c for c, k in counts.items() if k < min_per_class)
    if small:
        raise ClassifierTrainingError(f"classes with fewer than {min_per_class} samples: {small}")
    classes = tuple(sorted(counts))
    y = np.array([classes.index(l) for l in labels])
    raw_centroids = np.stack([X[y == k].mean(axis=0) for k in range(len(classes))])
    resid = X - raw_centroids[y]
    pooled = np.sqrt((resid ** 2).sum(axis=0) / max(len(X) - len(classes), 1))
    scale = np.where(pooled > 1e-9, pooled, 1.0)
    mean = X.mean(axis=0)
    Z = (X - mean) / scale
    centroids = (raw_centroids - mean) / scale
    disp = np.array(
        [np.sqrt(np.mean(np.sum((Z[y == k] - centroids[k]) ** 2, axis=1))) for k in range(len(classes))]
    )
    return ClassifierModel(classes, centroids, disp, mean, scale, perturbation_scale)


def train_classifier(labeled_patches: Sequence[Tuple[ObjectPatch, str]], seed: int = 0,
                     perturbation_scale: float = 0.5) -> ClassifierModel:
    """Fit the descriptor model.

    ``seed`` is accepted for interface stability; the nearest-centroid fit
    itself has no stochastic step, so the result is identical for any seed.
    """
    del seed
    if not labeled_patches:
        raise ClassifierTrainingError("no training patches")
    X = np.stack([patch_descriptor(p) for p, _ in labeled_patches])
    return fit_centroids(X, [str(l) for _, l in labeled_patches], perturbation_scale)


def nearest_class(z: np.ndarray, model: ClassifierModel) -> np.ndarray:
    """Index of the nearest centroid for standardized descriptor rows; ties go low."""
    z = np.atleast_2d(z)
    d2 = ((z[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def classify_descriptor(descriptor, model: ClassifierModel, m: int = 25,
                        accept_threshold: float = 0.8, seed: int = 0) -> Classification:
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0 < accept_threshold <= 1:
        raise ValueError("accept_threshold must be in (0, 1]")
    z = model.standardize(descriptor)
    rng = np.random.default_rng(seed)
    draws = z + model.perturbation_scale * rng.standard_normal((m, z.size))
    votes = np.bincount(nearest_class(draws, model), minlength=len(model.classes))
    mode = int(np.argmax(votes))
    confidence = votes[mode] / m
    label = model.classes[mode] if confidence >= accept_threshold else UNKNOWN
    return Classification(
        label, float(confidence), m, {c: int(v) for c, v in zip(model.classes, votes) if v}
    )


def classify_object(patch: ObjectPatch, model: ClassifierModel, m: int = 25,
                    accept_threshold: float = 0.8, seed: int = 0) -> Classification:
    return classify_descriptor(patch_descriptor(patch), model, m, accept_threshold, seed)


def accuracy(model: ClassifierModel, labeled_patches: Sequence[Tuple[ObjectPatch, str]]) -> float:
    """Fraction of patches whose unperturbed nearest centroid matches the label."""
    if not labeled_patches:
        return float("nan")
    Z = np.stack([model.standardize(patch_descriptor(p)) for p, _ in labeled_patches])
    pred = nearest_class(Z, model)
    return float(np.mean([model.classes[k] == l for k, (_, l) in zip(pred, labeled_patches)]))


def labeled_descriptors(labeled_patches) -> List[Tuple[np.ndarray, str]]:
    return [(patch_descriptor(p), l) for p, l in labeled_patches]
