"""Command-line entry point: ``orthosonar {run,compare,train-classifier,render-scene}``.

Exit codes: 0 success, 2 bad input (config, scene or mission file, or
arguments), 3 failure while processing.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .classification import ClassifierTrainingError, accuracy
from .config import DATA_DIR, ConfigError, PipelineConfig, load_config
from .scene import SceneError, load_mission, load_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DEFAULT_SCENE = DATA_DIR / "marina.yaml"
DEFAULT_MISSION = DATA_DIR / "mission_4m.yaml"

log = logging.getLogger("orthosonar")


class InputError(Exception):
    pass


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "mode", None):
        cfg = cfg.with_mode(args.mode)
    if getattr(args, "spacing", None) is not None:
        cfg = replace(cfg, keyframe_spacing=args.spacing)
    return cfg.validate(str(args.config or "<defaults>"))


def _inputs(args, cfg: PipelineConfig):
    for p in (args.scene, args.mission):
        if not Path(p).is_file():
            raise InputError(f"{p}: no such file")
    scene = load_scene(args.scene)
    mission = load_mission(args.mission, cfg.keyframe_spacing)
    return scene, mission


def cmd_run(args) -> int:
    from .pipeline import run_mission

    cfg = _config(args)
    scene, mission = _inputs(args, cfg)
    t0 = time.perf_counter()
    report, _ = run_mission(scene, mission, cfg, args.output)
    e = report["sources"]["all"]["error"]
    print(f"{cfg.mode}: {report['keyframes']} keyframes, {report['sources']['all']['points']} points, "
          f"{report['voxel_count']} voxels, median error {e['median']:.4f} m "
          f"({time.perf_counter() - t0:.1f} s) -> {args.output}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .pipeline import compare_modes

    cfg = _config(args)
    scene, mission = _inputs(args, cfg)
    t0 = time.perf_counter()
    result = compare_modes(scene, mission, cfg, args.output)
    print(result["table"], end="")
    print(f"({time.perf_counter() - t0:.1f} s) -> {args.output}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import bootstrap_classifier, generate_training_set

    cfg = _config(args)
    k = cfg.classification
    n = args.samples or k.train_samples_per_class
    ckw = dict(cfg=cfg.sonar.horizontal(),
               cfar=(cfg.cfar.train_cells, cfg.cfar.guard_cells, cfg.cfar.threshold_factor),
               clustering=(cfg.clustering.eps, cfg.clustering.min_pts, cfg.clustering.min_cluster_size))
    model = bootstrap_classifier(n, cfg.seed, k.perturbation_scale, **ckw)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    model.save(args.output)
    held_out = generate_training_set(max(n // 4, 5), cfg.seed + 1, **ckw)
    print(f"trained on {n} samples per class {list(model.classes)}; "
          f"held-out accuracy {accuracy(model, held_out):.3f} -> {args.output}")
    return EXIT_OK


def cmd_render(args) -> int:
    from .pipeline import _frame_seed
    from .sonar_sim import render_clean, render_pair

    cfg = _config(args)
    scene, mission = _inputs(args, cfg)
    if not 0 <= args.frame < len(mission):
        raise InputError(f"--frame must be in [0, {len(mission) - 1}]")
    pose = mission.poses[args.frame]
    h_cfg, v_cfg = cfg.sonar.horizontal(), cfg.sonar.vertical()
    h, v = render_pair(scene, pose, h_cfg, v_cfg, _frame_seed(cfg.seed, args.frame))
    _, h_owner = render_clean(scene, pose, h_cfg)
    _, v_owner = render_clean(scene, pose, v_cfg)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        out,
        horizontal=h.intensities, vertical=v.intensities,
        horizontal_owner=h_owner, vertical_owner=v_owner,
        pose=np.array([pose.x, pose.y, pose.yaw, pose.depth]),
        labels=np.array(scene.labels),
    )
    print(f"frame {args.frame}: horizontal {h.intensities.shape}, vertical {v.intensities.shape} -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orthosonar", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, mission=True):
        p.add_argument("--config", type=Path, help="YAML config (defaults built in)")
        p.add_argument("--seed", type=int, help="override config seed")
        if mission:
            p.add_argument("--scene", type=Path, default=DEFAULT_SCENE)
            p.add_argument("--mission", type=Path, default=DEFAULT_MISSION)
            p.add_argument("--spacing", type=float, help="keyframe spacing for waypoint missions (m)")

    p = sub.add_parser("run", help="run one mission and write cloud + metrics")
    common(p)
    p.add_argument("--mode", choices=("benchmark", "semantic"))
    p.add_argument("--output", type=Path, default=Path("out/run"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run benchmark and semantic modes side by side")
    common(p)
    p.add_argument("--output", type=Path, default=Path("out/compare"))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train-classifier", help="train the baseline classifier on simulated patches")
    common(p, mission=False)
    p.add_argument("--samples", type=int, help="samples per class")
    p.add_argument("--output", type=Path, default=Path("out/classifier.json"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render-scene", help="render one keyframe's sonar pair to .npz")
    common(p)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--output", type=Path, default=Path("out/frame.npz"))
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SceneError, InputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ClassifierTrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # anything else is a processing failure
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
