import math

import numpy as np
import pytest
import yaml

from orthosonar.geometry import CartesianPoint
from orthosonar.scene import (
    Box,
    Cylinder,
    Scene,
    SceneError,
    Wall,
    distance_to_scene,
    distances_to_scene,
    load_mission,
    load_scene,
    mission_from_path,
    save_mission,
    save_scene,
)


def test_cylinder_distances():
    c = Cylinder((0.0, 0.0, -5.0), 0.3, 10.0)
    sc = Scene([c])
    assert distance_to_scene(CartesianPoint(0.3, 0.0, -2.0), sc) == pytest.approx(0.0, abs=1e-12)
    assert distance_to_scene(CartesianPoint(0.0, 0.0, -5.0), sc) == pytest.approx(0.3)
    assert distance_to_scene(CartesianPoint(1.3, 0.0, -5.0), sc) == pytest.approx(1.0)
    # above the top cap rim
    assert distance_to_scene(CartesianPoint(0.6, 0.0, 0.4), sc) == pytest.approx(0.5)


def test_wall_offset():
    sc = Scene([Wall((0.0, 0.0), (10.0, 0.0), (-10.0, 0.0))])
    assert distance_to_scene(CartesianPoint(4.0, 0.3, -2.0), sc) == pytest.approx(0.3)
    assert distance_to_scene(CartesianPoint(13.0, 4.0, -2.0), sc) == pytest.approx(5.0)


def test_empty_scene_distance_raises():
    with pytest.raises(SceneError):
        distance_to_scene(CartesianPoint(0, 0, 0), Scene([]))


def _box_surface_samples(b: Box, n: int, rng) -> np.ndarray:
    """Uniform samples over the six faces of ``b`` (area weighted)."""
    hx, hy, hz = np.asarray(b.extents) / 2
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u, v = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    local = np.zeros((n, 3))
    ax = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    half = np.array([hx, hy, hz])
    for a in range(3):
        m = ax == a
        others = [k for k in range(3) if k != a]
        local[m, a] = sign[m] * half[a]
        local[m, others[0]] = u[m] * half[others[0]]
        local[m, others[1]] = v[m] * half[others[1]]
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    world = np.empty_like(local)
    world[:, 0] = c * local[:, 0] - s * local[:, 1] + b.center[0]
    world[:, 1] = s * local[:, 0] + c * local[:, 1] + b.center[1]
    world[:, 2] = local[:, 2] + b.center[2]
    return world


def test_box_distance_matches_dense_surface_sampling(rng):
    b = Box((2.0, -1.0, -3.0), (0.8, 0.6, 2.0), math.radians(30))
    sc = Scene([b])
    surface = _box_surface_samples(b, 1_000_000, rng)
    from scipy.spatial import cKDTree

    tree = cKDTree(surface)
    # points near a corner, outside and inside
    corner = _box_surface_samples(Box(b.center, b.extents, b.yaw), 1, rng)[0]
    queries = np.array([
        [2.9, -0.3, -1.7],
        [2.6, -0.6, -1.9],
        [2.0, -1.0, -3.0],
        [1.4, -1.5, -4.2],
        corner + np.array([0.05, -0.04, 0.03]),
    ])
    exact = distances_to_scene(queries, sc)
    sampled, _ = tree.query(queries)
    # sampling spacing is about 2 mm at this density
    assert np.all(sampled >= exact - 1e-9)
    np.testing.assert_allclose(exact, sampled, atol=5e-3)


def test_distance_is_lipschitz(rng):
    sc = Scene([Cylinder((0, 0, -5), 0.3, 10), Box((3, 1, -5), (0.8, 0.8, 10), 0.4),
                Wall((-5, 6), (8, 6), (-10, 0))])
    a = rng.uniform(-6, 9, size=(500, 3))
    b = a + rng.normal(scale=0.2, size=a.shape)
    da, db = distances_to_scene(a, sc), distances_to_scene(b, sc)
    assert np.all(da >= 0)
    assert np.all(np.abs(da - db) <= np.linalg.norm(a - b, axis=1) + 1e-12)


def test_invalid_primitives():
    with pytest.raises(SceneError):
        Cylinder((0, 0, 0), -1.0, 1.0)
    with pytest.raises(SceneError):
        Box((0, 0, 0), (0.0, 1.0, 1.0))
    with pytest.raises(SceneError):
        Wall((0, 0), (0, 0), (-1, 0))


def test_scene_round_trip(tmp_path, data_dir):
    sc = load_scene(data_dir / "marina.yaml")
    save_scene(sc, tmp_path / "s.yaml")
    again = load_scene(tmp_path / "s.yaml")
    assert again.labels == sc.labels
    pts = np.random.default_rng(0).uniform(0, 80, size=(100, 3)) * [1, 0.2, -0.1]
    np.testing.assert_allclose(distances_to_scene(pts, again), distances_to_scene(pts, sc), atol=1e-12)


def test_default_scene_contents(data_dir):
    labels = load_scene(data_dir / "marina.yaml").labels
    assert labels.count("cylindrical_piling") >= 6
    assert labels.count("rectangular_piling") >= 4
    assert labels.count("wall") == 1


def test_scene_errors_name_file_and_field(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump({"primitives": [{"kind": "cylinder", "center": [0, 0, 0], "height": 2}]}))
    with pytest.raises(SceneError, match=r"bad.yaml: primitives\[0\].*radius"):
        load_scene(p)
    p.write_text(yaml.safe_dump({"primitives": [{"kind": "cone"}]}))
    with pytest.raises(SceneError, match="unknown kind"):
        load_scene(p)


def test_mission_from_path_spacing():
    m = mission_from_path([(0, 0), (76, 0)], 4.0, -3.5)
    assert len(m) == 20
    xs = [p.x for p in m.poses]
    np.testing.assert_allclose(np.diff(xs), 4.0)
    assert all(p.depth == -3.5 for p in m.poses)
    turn = mission_from_path([(0, 0), (10, 0), (10, 10)], 2.0, 0.0)
    assert turn.poses[-1].yaw == pytest.approx(math.pi / 2)


def test_default_missions(data_dir):
    assert len(load_mission(data_dir / "mission_4m.yaml")) == 20
    assert len(load_mission(data_dir / "mission_2m.yaml")) == 39
    assert len(load_mission(data_dir / "mission_4m.yaml", spacing_override=2.0)) == 39


def test_mission_round_trip(tmp_path, data_dir):
    m = load_mission(data_dir / "mission_4m.yaml")
    save_mission(m, tmp_path / "m.yaml")
    again = load_mission(tmp_path / "m.yaml")
    assert [(p.x, p.y, p.depth) for p in again.poses] == pytest.approx([(p.x, p.y, p.depth) for p in m.poses])
