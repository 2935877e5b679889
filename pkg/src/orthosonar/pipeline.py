"""Mission runner: render, detect, classify, fuse, infer, accumulate, report.

Frames are processed in mission order because the class models are online
state. Every stochastic step draws from a generator seeded by
``(config.seed, frame index, ...)`` so runs are reproducible.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .classification import UNKNOWN, ClassifierModel, classify_object, extract_patch
from .config import PipelineConfig
from .detection import cluster_features, filter_clusters, soca_cfar
from .fusion import fuse_frame
from .geometry import FusedPoint, spherical_xyz
from .inference import (
    ClassModel,
    ObjectDetection,
    PreconditionError,
    RegistrationError,
    predict_heights_array,
    register_object,
    update_class_model,
)
from .mapping import FUSED, INFERRED, GlobalMap, absolute_error, summarize_errors, voxel_count, write_csv, write_ply
from .scene import Mission, Scene
from .sonar_sim import render_pair

log = logging.getLogger(__name__)

REPORT_SCHEMA = "orthosonar.report"


@dataclass
class FrameResult:
    index: int
    fused: int = 0
    inferred: int = 0
    detections: Dict[str, int] = field(default_factory=dict)
    skipped: Optional[str] = None


def _frame_seed(seed: int, frame: int) -> int:
    return int(np.random.SeedSequence([seed, frame]).generate_state(1)[0])


def _fused_xyz(fused: List[FusedPoint]) -> np.ndarray:
    if not fused:
        return np.zeros((0, 3))
    return spherical_xyz(np.array([f.range for f in fused]), np.array([f.bearing for f in fused]),
                         np.array([f.elevation for f in fused]))


class Pipeline:
    """Stateful per-mission processor; create a new one for each mission."""

    def __init__(self, scene: Scene, config: PipelineConfig, classifier: Optional[ClassifierModel] = None):
        self.scene = scene
        self.config = config
        self.h_cfg = config.sonar.horizontal()
        self.v_cfg = config.sonar.vertical()
        self.semantic = config.mode == "semantic"
        if self.semantic and classifier is None:
            classifier = ClassifierModel.load(config.classifier_path())
        self.classifier = classifier
        inf = config.inference
        grid = inf.grid()
        self.models: Dict[str, ClassModel] = {
            c: ClassModel(c, grid, inf.likelihood_floor, inf.max_reference_points,
                          int(np.random.SeedSequence([config.seed, 7, i]).generate_state(1)[0]))
            for i, c in enumerate(inf.classes)
        }
        self._max_elevation = self.h_cfg.vertical_beamwidth / 2 if inf.limit_to_beam else None
        self.map = GlobalMap()
        self.frames: List[FrameResult] = []
        self.failures: List[str] = []

    # -- per-frame stages -------------------------------------------------

    def _detect(self, img, cluster: bool):
        c, d = self.config.cfar, self.config.clustering
        feats = soca_cfar(img, c.train_cells, c.guard_cells, c.threshold_factor)
        if not cluster:
            return feats, None
        clusters = filter_clusters(cluster_features(feats, d.eps, d.min_pts), d.min_cluster_size)
        return [f for cl in clusters for f in cl.features], clusters

    def _classify(self, img, clusters, frame: int) -> List[ObjectDetection]:
        k = self.config.classification
        dets = []
        for ci, cl in enumerate(clusters):
            seed = int(np.random.SeedSequence([self.config.seed, frame, ci]).generate_state(1)[0])
            res = classify_object(extract_patch(img, cl), self.classifier, k.m, k.accept_threshold, seed)
            dets.append(ObjectDetection(cl, res.label, res.confidence))
        return dets

    def _infer(self, dets, fused, frame: int, result: FrameResult) -> np.ndarray:
        """Update class models with fused returns, then lift the rest of each detection."""
        inf = self.config.inference
        # h features are flattened cluster by cluster, so map index -> (cluster, member)
        owner = []
        for ci, d in enumerate(dets):
            owner += [(ci, fi) for fi in range(len(d.cluster))]
        per_det: Dict[int, List[FusedPoint]] = {}
        per_det_idx: Dict[int, List[int]] = {}
        for fp in fused:
            ci, fi = owner[fp.h_index]
            per_det.setdefault(ci, []).append(fp)
            per_det_idx.setdefault(ci, []).append(fi)

        out = []
        for ci, det in enumerate(dets):
            result.detections[det.label] = result.detections.get(det.label, 0) + 1
            if det.label == UNKNOWN or det.label not in self.models:
                continue
            model = self.models[det.label]
            obs = per_det.get(ci, [])
            try:
                if len(obs) >= inf.min_fused_points:
                    t = register_object(det, model, True, inf.icp_max_iters, inf.icp_tol, inf.icp_max_residual)
                    update_class_model(model, obs, t, inf.sigma)
                if model.update_count < 1:
                    continue
                pts, _ = predict_heights_array(det, model, per_det_idx.get(ci, ()), inf.confidence_threshold,
                                               inf.icp_max_iters, inf.icp_tol, inf.icp_max_residual,
                                               self._max_elevation)
                out.append(pts)
            except (RegistrationError, PreconditionError) as e:
                self.failures.append(f"frame {frame} object {ci}: {e}")
                log.info("frame %d object %d skipped: %s", frame, ci, e)
        return np.vstack(out) if out else np.zeros((0, 3))

    def process_frame(self, frame: int, pose) -> FrameResult:
        result = FrameResult(frame)
        h_img, v_img = render_pair(self.scene, pose, self.h_cfg, self.v_cfg, _frame_seed(self.config.seed, frame))
        h_feats, h_clusters = self._detect(h_img, True)
        v_feats, _ = self._detect(v_img, self.config.clustering.cluster_vertical)
        fz = self.config.fusion
        fused = fuse_frame(h_img, v_img, h_feats, v_feats, fz.min_confidence, fz.range_tolerance)
        inferred = np.zeros((0, 3))
        if self.semantic:
            dets = self._classify(h_img, h_clusters, frame)
            inferred = self._infer(dets, fused, frame, result)
        self.map.accumulate(pose, _fused_xyz(fused), FUSED, frame)
        self.map.accumulate(pose, inferred, INFERRED, frame)
        result.fused, result.inferred = len(fused), len(inferred)
        return result

    def run(self, mission: Mission) -> GlobalMap:
        for k, pose in enumerate(mission.poses):
            try:
                self.frames.append(self.process_frame(k, pose))
            except Exception as e:  # a bad frame must not abort the mission
                log.warning("frame %d failed: %s", k, e)
                self.failures.append(f"frame {k}: {type(e).__name__}: {e}")
                self.frames.append(FrameResult(k, skipped=str(e)))
        return self.map

    # -- reporting ----------------------------------------------------------

    def report(self, mission: Mission) -> dict:
        cell = self.config.metrics.voxel_size
        src = {}
        for tag in (None, FUSED, INFERRED):
            pts = self.map.select(tag)
            err = absolute_error(pts, self.scene) if len(pts) else np.zeros(0)
            src[tag or "all"] = {
                "points": int(len(pts)),
                "voxel_count": voxel_count(pts, cell),
                "error": summarize_errors(err).to_dict(),
            }
        return {
            "schema": REPORT_SCHEMA,
            "mode": self.config.mode,
            "seed": self.config.seed,
            "keyframes": len(mission),
            "keyframe_spacing": mission.keyframe_spacing,
            "voxel_size": cell,
            "voxel_count": src["all"]["voxel_count"],
            "sources": src,
            "classes": {
                name: {"updates": m.update_count, "dropped_updates": m.dropped_count,
                       "cells": len(m.cells), "reference_points": len(m.reference.reference_cloud)}
                for name, m in self.models.items()
            } if self.semantic else {},
            "frames": [
                {"index": f.index, "fused": f.fused, "inferred": f.inferred,
                 "detections": dict(sorted(f.detections.items())), "skipped": f.skipped}
                for f in self.frames
            ],
            "failures": list(self.failures),
        }


def _dump(obj, path: Path) -> None:
    # NaN is not valid JSON; report missing statistics as null
    def clean(o):
        if isinstance(o, float) and o != o:
            return None
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, list):
            return [clean(v) for v in o]
        return o

    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")


def run_mission(scene: Scene, mission: Mission, config: PipelineConfig, output_dir=None,
                classifier: Optional[ClassifierModel] = None):
    """Run one mission; writes ``cloud.ply``, ``cloud.csv`` and ``metrics.json`` when ``output_dir`` is set.

    Returns ``(report, global_map)``. Wall-clock time is logged but kept out
    of the report so repeated runs are byte-identical.
    """
    t0 = time.perf_counter()
    pipe = Pipeline(scene, config, classifier)
    gmap = pipe.run(mission)
    report = pipe.report(mission)
    log.info("%s mission: %d frames, %d points, %.1f s", config.mode, len(mission), len(gmap),
             time.perf_counter() - t0)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_ply(gmap, out / "cloud.ply")
        write_csv(gmap, out / "cloud.csv")
        _dump(report, out / "metrics.json")
    return report, gmap


def comparison_table(reports: Dict[str, dict]) -> str:
    head = f"{'mode':<10} {'keyframes':>9} {'points':>8} {'voxels':>8} {'median':>8} {'q1':>8} {'q3':>8} {'outliers':>9}"
    lines = [head, "-" * len(head)]
    for mode, r in reports.items():
        e = r["sources"]["all"]["error"]
        fmt = lambda v: "nan" if v is None or v != v else f"{v:.4f}"
        lines.append(
            f"{mode:<10} {r['keyframes']:>9d} {r['sources']['all']['points']:>8d} {r['voxel_count']:>8d} "
            f"{fmt(e['median']):>8} {fmt(e['q1']):>8} {fmt(e['q3']):>8} {100 * e['outlier_fraction']:>8.2f}%"
        )
    b, s = reports.get("benchmark"), reports.get("semantic")
    if b and s and b["voxel_count"]:
        lines.append(f"coverage ratio semantic/benchmark: {s['voxel_count'] / b['voxel_count']:.2f}")
    return "\n".join(lines) + "\n"


def compare_modes(scene: Scene, mission: Mission, config: PipelineConfig, output_dir=None,
                  classifier: Optional[ClassifierModel] = None) -> dict:
    """Run benchmark and semantic modes with the same seeds and tabulate them."""
    reports = {}
    for mode in ("benchmark", "semantic"):
        sub = None if output_dir is None else Path(output_dir) / mode
        reports[mode], _ = run_mission(scene, mission, config.with_mode(mode), sub, classifier)
    b, s = reports["benchmark"], reports["semantic"]
    summary = {
        "schema": "orthosonar.comparison",
        "seed": config.seed,
        "keyframes": len(mission),
        "keyframe_spacing": mission.keyframe_spacing,
        "voxel_count": {m: r["voxel_count"] for m, r in reports.items()},
        "coverage_ratio": s["voxel_count"] / b["voxel_count"] if b["voxel_count"] else None,
        "median_error": {m: r["sources"]["all"]["error"]["median"] for m, r in reports.items()},
        "error": {m: r["sources"]["all"]["error"] for m, r in reports.items()},
    }
    table = comparison_table(reports)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _dump(summary, out / "comparison.json")
        (out / "comparison.txt").write_text(table)
    return {"summary": summary, "reports": reports, "table": table}
