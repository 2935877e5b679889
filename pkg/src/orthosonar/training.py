"""Labelled patch generation from the simulator, for bootstrapping the classifier."""

from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .classification import ClassifierModel, ObjectPatch, extract_patch, train_classifier
from .detection import cluster_features, filter_clusters, soca_cfar
from .geometry import PlanarPose
from .scene import Box, Cylinder, Scene, Wall
from .sonar_sim import SonarConfig, default_horizontal_config, render_image

log = logging.getLogger(__name__)

TRAIN_CLASSES = ("cylindrical_piling", "rectangular_piling", "wall")


def _random_object(label: str, rng: np.random.Generator, depth: float, water_depth: float):
    """One primitive of class ``label`` placed in front of a sensor at the origin."""
    r = rng.uniform(5.0, 28.0)
    b = rng.uniform(-math.radians(55), math.radians(55))
    x, y = r * math.cos(b), r * math.sin(b)
    zc = -water_depth / 2
    if label == "cylindrical_piling":
        return Cylinder((x, y, zc), rng.uniform(0.25, 0.35), water_depth, label)
    if label == "rectangular_piling":
        side = rng.uniform(0.6, 1.0)
        return Box((x, y, zc), (side, side * rng.uniform(0.9, 1.1), water_depth),
                   rng.uniform(0, math.pi / 2), label)
    if label == "wall":
        # long wall crossing the field of view at a random orientation
        a = b + math.pi / 2 + rng.uniform(-0.6, 0.6)
        half = rng.uniform(8.0, 20.0)
        d = np.array([math.cos(a), math.sin(a)])
        p0 = np.array([x, y]) - half * d
        p1 = np.array([x, y]) + half * d
        return Wall(tuple(p0), tuple(p1), (-water_depth, 0.0), label)
    raise ValueError(f"unknown training class {label!r}")


def simulate_patches(label: str, count: int, seed: int = 0, cfg: Optional[SonarConfig] = None,
                     cfar=(10, 2, 15.8), clustering=(0.5, 4, 10), depth: float = -3.0,
                     water_depth: float = 10.0, max_attempts: int = 5) -> List[ObjectPatch]:
    """Render single-object scenes and cut the largest cluster's patch from each.

    Scenes where nothing survives detection are redrawn up to ``max_attempts``
    times per sample.
    """
    cfg = cfg or default_horizontal_config()
    rng = np.random.default_rng(np.random.SeedSequence([seed, TRAIN_CLASSES.index(label)]))
    pose = PlanarPose(0.0, 0.0, 0.0, depth)
    train, guard, k = cfar
    eps, min_pts, n = clustering
    out = []
    for _ in range(count):
        for _attempt in range(max_attempts):
            scene = Scene([_random_object(label, rng, depth, water_depth)], water_depth)
            img = render_image(scene, pose, cfg, rng)
            feats = soca_cfar(img, train, guard, k)
            clusters = filter_clusters(cluster_features(feats, eps, min_pts), n)
            if clusters:
                best = max(clusters, key=len)
                out.append(extract_patch(img, best))
                break
        else:
            log.warning("no detectable %s after %d attempts", label, max_attempts)
    return out


def generate_training_set(samples_per_class: int = 100, seed: int = 0,
                          classes: Sequence[str] = TRAIN_CLASSES,
                          **kw) -> List[Tuple[ObjectPatch, str]]:
    data = []
    for label in classes:
        data += [(p, label) for p in simulate_patches(label, samples_per_class, seed, **kw)]
    return data


def bootstrap_classifier(samples_per_class: int = 100, seed: int = 0,
                         perturbation_scale: float = 0.5, **kw) -> ClassifierModel:
    """Train the baseline classifier on freshly simulated patches."""
    data = generate_training_set(samples_per_class, seed, **kw)
    return train_classifier(data, seed, perturbation_scale)
