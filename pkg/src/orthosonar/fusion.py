"""Cross-sonar feature association and fused 3D measurements.

Features from the horizontal image (range, bearing) and the vertical image
(range, elevation) are matched within range bins by comparing 5x5 intensity
patches. Each match yields a point with the averaged range, the horizontal
bearing and the vertical elevation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detection import ImageFeature
from .geometry import FusedPoint
from .sonar_sim import PolarImage

PATCH_HALF = 2


class FusionConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Patch5x5:
    pixels: np.ndarray
    orientation: str = "horizontal"

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.shape != (5, 5):
            raise ValueError(f"patch must be 5x5, got {px.shape}")
        object.__setattr__(self, "pixels", px)


@dataclass
class RangeBinProblem:
    range_bin: int
    h_features: List[ImageFeature]
    v_features: List[ImageFeature]


def image_patch(norm: np.ndarray, range_bin: int, angle_bin: int) -> np.ndarray:
    """5x5 window of a normalized image centred on a pixel, zero outside the image."""
    out = np.zeros((2 * PATCH_HALF + 1, 2 * PATCH_HALF + 1))
    nr, na = norm.shape
    r0, c0 = range_bin - PATCH_HALF, angle_bin - PATCH_HALF
    rs, re = max(r0, 0), min(r0 + 5, nr)
    cs, ce = max(c0, 0), min(c0 + 5, na)
    if rs < re and cs < ce:
        out[rs - r0:re - r0, cs - c0:ce - c0] = norm[rs:re, cs:ce]
    return out


def feature_patch(norm: np.ndarray, f: ImageFeature) -> Patch5x5:
    px = image_patch(norm, f.range_bin, f.angle_bin)
    if f.orientation == "vertical":
        px = np.rot90(px)
    return Patch5x5(px, f.orientation)


def patch_cost(h: Patch5x5, v: Patch5x5) -> float:
    """Frobenius norm of the patch difference."""
    return float(np.linalg.norm(h.pixels - v.pixels))


def cost_matrix(h_patches: Sequence[Patch5x5], v_patches: Sequence[Patch5x5]) -> np.ndarray:
    if not h_patches or not v_patches:
        return np.zeros((len(h_patches), len(v_patches)))
    H = np.stack([p.pixels.ravel() for p in h_patches])
    V = np.stack([p.pixels.ravel() for p in v_patches])
    return np.sqrt(((H[:, None, :] - V[None, :, :]) ** 2).sum(axis=2))


def optimal_assignment(costs: np.ndarray) -> List[Tuple[int, int]]:
    """Minimum total-cost one-to-one matching of rows to columns."""
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        return []
    rows, cols = linear_sum_assignment(costs)
    return sorted(zip(rows.tolist(), cols.tolist()))


def row_confidence(row_costs) -> float:
    """Gap between the two cheapest candidates relative to the row's total cost.

    One candidate means no ambiguity (1.0); an all-zero row is maximally
    ambiguous (0.0).
    """
    c = np.sort(np.asarray(row_costs, dtype=float).ravel())
    if c.size < 2:
        return 1.0
    total = c.sum()
    if total <= 0:
        return 0.0
    return float(np.clip((c[1] - c[0]) / total, 0.0, 1.0))


def association_confidence(p: RangeBinProblem, chosen: Tuple[int, int], all_costs: np.ndarray) -> float:
    """Confidence of the match ``chosen = (h_index, v_index)`` within problem ``p``."""
    i, j = chosen
    costs = np.asarray(all_costs, dtype=float)
    if costs.shape != (len(p.h_features), len(p.v_features)):
        raise ValueError("cost matrix does not match the problem's feature counts")
    if not (0 <= i < costs.shape[0] and 0 <= j < costs.shape[1]):
        raise IndexError(f"pair {chosen} outside the problem")
    return row_confidence(costs[i])


def _problem_costs(p: RangeBinProblem, h_norm: np.ndarray, v_norm: np.ndarray) -> np.ndarray:
    return cost_matrix(
        [feature_patch(h_norm, f) for f in p.h_features],
        [feature_patch(v_norm, f) for f in p.v_features],
    )


def solve_range_bin(p: RangeBinProblem, h_img: PolarImage, v_img: PolarImage,
                    h_norm: Optional[np.ndarray] = None, v_norm: Optional[np.ndarray] = None):
    """Optimal association within one range-bin problem.

    Returns ``[(h_feature, v_feature, cost), ...]``; surplus features on the
    larger side stay unmatched.
    """
    if not p.h_features or not p.v_features:
        return []
    h_norm = h_img.normalized() if h_norm is None else h_norm
    v_norm = v_img.normalized() if v_norm is None else v_norm
    costs = _problem_costs(p, h_norm, v_norm)
    return [(p.h_features[i], p.v_features[j], float(costs[i, j])) for i, j in optimal_assignment(costs)]


def in_overlap(features: Sequence[ImageFeature], half_width: float) -> List[int]:
    """Indices of features whose resolved angle lies inside the shared window."""
    return [k for k, f in enumerate(features) if abs(f.angle) <= half_width + 1e-12]


def build_problems(h_feats: Sequence[ImageFeature], v_feats: Sequence[ImageFeature],
                   range_tolerance: int = 1):
    """One problem per horizontal range bin, with vertical candidates within tolerance.

    Returns ``(problems, h_indices, v_indices)`` where the index lists map each
    problem's features back to positions in the input sequences.
    """
    h_by_bin: Dict[int, List[int]] = {}
    for k, f in enumerate(h_feats):
        h_by_bin.setdefault(f.range_bin, []).append(k)
    v_by_bin: Dict[int, List[int]] = {}
    for k, f in enumerate(v_feats):
        v_by_bin.setdefault(f.range_bin, []).append(k)
    problems, h_idx, v_idx = [], [], []
    for b in sorted(h_by_bin):
        vs = [k for d in range(-range_tolerance, range_tolerance + 1) for k in v_by_bin.get(b + d, [])]
        if not vs:
            continue
        hs = h_by_bin[b]
        problems.append(RangeBinProblem(b, [h_feats[k] for k in hs], [v_feats[k] for k in vs]))
        h_idx.append(hs)
        v_idx.append(vs)
    return problems, h_idx, v_idx


def fuse_frame(h_img: PolarImage, v_img: PolarImage, h_feats: Sequence[ImageFeature],
               v_feats: Sequence[ImageFeature], min_confidence: float = 0.05,
               range_tolerance: int = 1) -> List[FusedPoint]:
    """Fuse one keyframe's features into 3D points.

    Horizontal features outside the vertical sonar's beam (and vice versa)
    cannot be associated and are ignored. ``FusedPoint.h_index`` refers to
    the position in ``h_feats``.
    """
    if abs(h_img.config.range_resolution - v_img.config.range_resolution) > 1e-12:
        raise FusionConfigError("horizontal and vertical range resolutions differ")
    h_keep = in_overlap(h_feats, v_img.config.vertical_beamwidth / 2)
    v_keep = in_overlap(v_feats, h_img.config.vertical_beamwidth / 2)
    if not h_keep or not v_keep:
        return []
    hf = [h_feats[k] for k in h_keep]
    vf = [v_feats[k] for k in v_keep]
    h_norm, v_norm = h_img.normalized(), v_img.normalized()
    problems, h_idx, _ = build_problems(hf, vf, range_tolerance)
    out = []
    for p, hs in zip(problems, h_idx):
        costs = _problem_costs(p, h_norm, v_norm)
        for i, j in optimal_assignment(costs):
            conf = association_confidence(p, (i, j), costs)
            if conf < min_confidence:
                continue
            fh, fv = p.h_features[i], p.v_features[j]
            out.append(
                FusedPoint(
                    (fh.range + fv.range) / 2,
                    fh.measurement.bearing,
                    fv.measurement.elevation,
                    conf,
                    h_keep[hs[i]],
                )
            )
    return out
