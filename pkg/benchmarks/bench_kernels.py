"""Time the numba loop kernels against their numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

The numba kernels are warmed up (compiled) before timing. Both paths are
also checked for agreement on the same inputs, so a speedup never hides a
wrong answer. ``ORTHOSONAR_DISABLE_NUMBA`` only changes the default backend
the library dispatches to; this script always times both.
"""

import argparse
import time

import numpy as np

from orthosonar import _accel
from orthosonar.config import DATA_DIR
from orthosonar.detection import soca_noise
from orthosonar.scene import load_mission, load_scene
from orthosonar.sonar_sim import _ray_directions, cast_rays, default_horizontal_config, render_image


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        print("numba is not importable; nothing to compare")
        return 1

    scene = load_scene(DATA_DIR / "marina.yaml")
    pose = load_mission(DATA_DIR / "mission_4m.yaml").poses[5]
    cfg = default_horizontal_config()
    img = render_image(scene, pose, cfg, np.random.default_rng(0)).intensities
    origin = np.array([pose.x, pose.y, pose.depth])
    dirs = _ray_directions(pose, cfg)

    cases = {
        f"soca_noise {img.shape[0]}x{img.shape[1]}": lambda nb: soca_noise(img, 10, 2, use_numba=nb),
        f"cast_rays {len(dirs)} rays x {len(scene.primitives)} prims": lambda nb: cast_rays(origin, dirs, scene, use_numba=nb),
    }
    print(f"default backend: {_accel.backend_name()}   (best of {args.repeat})")
    print(f"{'kernel':<40} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}  agree")
    for name, fn in cases.items():
        a, b = fn(True), fn(False)  # warm-up compiles the jitted kernel
        if isinstance(a, tuple):
            hit = np.isfinite(a[0])
            agree = (np.array_equal(a[2], b[2]) and np.allclose(a[0][hit], b[0][hit], atol=1e-12)
                     and np.array_equal(hit, np.isfinite(b[0])))
        else:
            agree = np.array_equal(a, b)
        t_nb = best_of(lambda: fn(True), args.repeat)
        t_np = best_of(lambda: fn(False), args.repeat)
        print(f"{name:<40} {1e3 * t_nb:>10.2f} {1e3 * t_np:>10.2f} {t_np / t_nb:>7.2f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
