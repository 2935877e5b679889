import math

import numpy as np
import pytest

from orthosonar.geometry import PlanarPose
from orthosonar.scene import Box, Cylinder, Scene, Wall
from orthosonar.sonar_sim import (
    PolarImage,
    SonarConfig,
    cast_rays,
    default_horizontal_config,
    default_vertical_config,
    render_clean,
    render_image,
    render_pair,
)


def test_config_rejects_bad_geometry():
    with pytest.raises(ValueError):
        SonarConfig(range_resolution=0.07)
    with pytest.raises(ValueError):
        SonarConfig(orientation="diagonal")
    with pytest.raises(ValueError):
        SonarConfig(angular_bin_count=1)


def test_bin_centers():
    cfg = default_horizontal_config()
    assert cfg.range_bins == 600
    assert cfg.angle_centers()[0] == pytest.approx(-math.radians(65) + math.radians(0.25))
    assert cfg.range_bin(9.75) == 195
    assert cfg.angle_bin(0.0) == 130


def test_polar_image_validates_shape():
    cfg = default_horizontal_config()
    with pytest.raises(ValueError):
        PolarImage(cfg, np.zeros((10, 10)))
    with pytest.raises(ValueError):
        PolarImage(cfg, -np.ones((cfg.range_bins, cfg.angular_bin_count)))


def test_empty_scene_is_noise_floor(origin_pose):
    cfg = default_horizontal_config()
    signal, owner = render_clean(Scene([]), origin_pose, cfg)
    assert not signal.any()
    assert (owner == -1).all()
    clean = render_image(Scene([]), origin_pose, default_horizontal_config(speckle_scale=0.0),
                         np.random.default_rng(0))
    np.testing.assert_array_equal(clean.intensities, cfg.noise_floor)


def test_single_cylinder_ridge(single_cylinder, origin_pose):
    cfg = default_horizontal_config()
    # analytic first hit: 10 - 0.25 = 9.75 m -> floor(9.75 / 0.05) = 195
    signal, owner = render_clean(single_cylinder, origin_pose, cfg)
    col = cfg.angle_bin(0.0)
    assert int(np.argmax(signal[:, col])) == 195
    assert owner[195, col] == 0
    a, b = (render_image(single_cylinder, origin_pose, cfg, np.random.default_rng(s)) for s in (1, 2))
    assert not np.array_equal(a.intensities, b.intensities)
    # the ridge stands well above the speckled background in both realizations
    for img in (a, b):
        assert img.intensities[195, col] > 20 * np.median(img.intensities)


def test_cylinder_hit_distances_are_analytic(single_cylinder):
    origin = np.array([0.0, 0.0, -3.0])
    ang = np.linspace(-0.02, 0.02, 9)
    dirs = np.stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)], axis=1)
    t, cos, prim = cast_rays(origin, dirs, single_cylinder)
    # ray/circle intersection in the plane
    d = 10.0 * np.cos(ang) - np.sqrt(0.25 ** 2 - (10.0 * np.sin(ang)) ** 2)
    np.testing.assert_allclose(t, d, atol=1e-12)
    assert (prim == 0).all()
    assert np.all((cos > 0) & (cos <= 1))


@pytest.mark.parametrize("use_numba", [True, False])
def test_ray_kernels_agree(use_numba, rng):
    scene = Scene([Cylinder((6, 1, -5), 0.3, 10), Box((9, -2, -5), (0.8, 0.8, 10), 0.3),
                   Wall((12, -10), (12, 10), (-10, 0))])
    origin = np.array([0.0, 0.0, -3.0])
    dirs = rng.normal(size=(2000, 3)) * [1, 0.5, 0.1] + [1.0, 0, 0]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ref = cast_rays(origin, dirs, scene, use_numba=not use_numba)
    got = cast_rays(origin, dirs, scene, use_numba=use_numba)
    np.testing.assert_array_equal(got[2], ref[2])
    hit = np.isfinite(ref[0])
    np.testing.assert_allclose(got[0][hit], ref[0][hit], rtol=0, atol=1e-12)
    np.testing.assert_allclose(got[1][hit], ref[1][hit], rtol=0, atol=1e-12)
    assert np.isinf(got[0][~hit]).all()


def test_hits_lie_on_surfaces(rng):
    scene = Scene([Cylinder((6, 1, -5), 0.3, 10), Box((9, -2, -5), (0.8, 0.8, 10), 0.3),
                   Wall((12, -10), (12, 10), (-10, 0))])
    from orthosonar.scene import distances_to_scene

    origin = np.array([0.0, 0.0, -3.0])
    dirs = rng.normal(size=(500, 3)) * [1, 0.5, 0.1] + [1.0, 0, 0]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t, _, _ = cast_rays(origin, dirs, scene)
    hit = np.isfinite(t)
    pts = origin + t[hit, None] * dirs[hit]
    assert distances_to_scene(pts, scene).max() < 1e-9


def test_render_pair_determinism(single_cylinder, origin_pose):
    h_cfg, v_cfg = default_horizontal_config(), default_vertical_config()
    a = render_pair(single_cylinder, origin_pose, h_cfg, v_cfg, 5)
    b = render_pair(single_cylinder, origin_pose, h_cfg, v_cfg, 5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.intensities, y.intensities)
    with pytest.raises(ValueError):
        render_pair(single_cylinder, origin_pose, v_cfg, h_cfg, 5)


def test_vertical_image_sees_piling_across_elevations(single_cylinder):
    cfg = default_vertical_config()
    signal, _ = render_clean(single_cylinder, PlanarPose(0, 0, 0, -3.0), cfg)
    # a vertical piling returns in every elevation column, at slant range d / cos(phi)
    cols = np.nonzero(signal.any(axis=0))[0]
    assert len(cols) == cfg.angular_bin_count
    first = np.array([np.nonzero(signal[:, c])[0][0] for c in range(cfg.angular_bin_count)])
    phi = cfg.angle_centers()
    assert abs(first[0] - cfg.range_bin(9.75 / math.cos(phi[0]))) <= 1


def test_yawed_pose_rotates_image(single_cylinder):
    cfg = default_horizontal_config()
    pose = PlanarPose(0.0, 0.0, math.radians(20), 0.0)
    signal, _ = render_clean(single_cylinder, pose, cfg)
    col = int(np.argmax(signal.max(axis=0)))
    assert abs(cfg.angle_centers()[col] - math.radians(-20)) < cfg.angle_resolution * 1.5
