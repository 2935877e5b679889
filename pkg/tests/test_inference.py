import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthosonar.detection import FeatureCluster, ImageFeature, cluster_features, filter_clusters, soca_cfar
from orthosonar.fusion import fuse_frame
from orthosonar.geometry import PlanarPose, SphericalMeasurement
from orthosonar.inference import (
    ClassModel,
    GridSpec,
    HeightDistribution,
    ObjectDetection,
    PreconditionError,
    default_confidence_threshold,
    log_likelihood,
    map_estimate,
    map_estimate_cell,
    predict_heights,
    predict_heights_array,
    register_object,
    update_class_model,
)
from orthosonar.registration import icp_2d
from orthosonar.scene import Cylinder, Scene, distances_to_scene
from orthosonar.sonar_sim import default_horizontal_config, default_vertical_config, render_pair

from oracles import sequential_posterior

GRID = GridSpec()
Z = GRID.z_centers()
DZ = GRID.z_step


def posterior(measurements, sigma=0.1, floor=1e-3):
    d = HeightDistribution(Z)
    for z in measurements:
        d.update(z, sigma, floor)
    return d


def test_grid_shape():
    assert (GRID.n_r, GRID.n_theta, GRID.n_z) == (40, 20, 200)
    assert Z[0] == pytest.approx(-4.975) and Z[-1] == pytest.approx(4.975)
    assert default_confidence_threshold(GRID) == pytest.approx(0.025)
    i, j = GRID.cell_indices([-1.5, 0.05], [0.0, 0.0])
    assert list(i) == [-1, 10] and list(j) == [-1, 10]
    with pytest.raises(ValueError):
        GridSpec(z_step=0.0)


def test_single_measurement_mode():
    assert abs(posterior([-1.0]).mode() - (-1.0)) <= DZ / 2 + 1e-12
    assert posterior([-0.73]).mode() == pytest.approx(-0.725)


def test_hundred_samples_about_truth():
    r = np.random.default_rng(5)
    zs = r.normal(-0.5, 0.1, 100)
    for floor in (0.0, 1e-3):
        d = posterior(zs, 0.1, floor)
        assert abs(d.mode() - (-0.5)) <= DZ
        np.testing.assert_allclose(d.probabilities, sequential_posterior(Z, zs, 0.1, floor), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-6, 6), min_size=1, max_size=40), st.floats(0.02, 1.0), st.integers(0, 2 ** 31))
def test_normalized_and_order_independent(zs, sigma, seed):
    a = posterior(zs, sigma)
    assert abs(a.probabilities.sum() - 1.0) < 1e-9
    perm = np.random.default_rng(seed).permutation(len(zs))
    b = posterior([zs[k] for k in perm], sigma)
    np.testing.assert_allclose(a.probabilities, b.probabilities, atol=1e-9)


def test_pure_gaussian_product_collapses_to_one_mode():
    d = posterior([1.0, -1.0], 0.1, floor=0.0)
    assert abs(d.mode()) <= DZ / 2 + 1e-12


def test_floor_keeps_symmetric_bimodality():
    p = posterior([1.0, -1.0], 0.1).probabilities
    np.testing.assert_allclose(p, p[::-1], atol=1e-12)
    lo, hi = Z[np.argmax(np.where(Z < 0, p, -1))], Z[np.argmax(np.where(Z > 0, p, -1))]
    assert abs(lo + 1.0) <= DZ / 2 + 1e-12 and abs(hi - 1.0) <= DZ / 2 + 1e-12


def test_log_likelihood_validation():
    with pytest.raises(ValueError):
        log_likelihood(Z, 0.0, 0.0)


def _model_with(updates, sigma=0.1):
    m = ClassModel("cylindrical_piling", GRID)
    for z in updates:
        m.apply_update(5, 7, z, sigma)
    return m


def test_map_estimate_examples():
    m = _model_with([])
    assert map_estimate_cell(m, 3, 3) == []
    m = _model_with([-1.2] * 5, 0.05)
    out = map_estimate_cell(m, 5, 7)
    assert len(out) == 1 and abs(out[0] + 1.2) <= DZ / 2 + 1e-12
    m = _model_with([1.0, -1.0])
    lo, hi = map_estimate_cell(m, 5, 7)
    assert lo < 0 < hi
    assert abs(lo + 1.0) <= DZ / 2 + 1e-12 and abs(hi - 1.0) <= DZ / 2 + 1e-12
    # the cell at offsets (r=-0.45, theta=-2.5 deg) is (5, 7)
    assert map_estimate(m, -0.45, math.radians(-2.5)) == [lo, hi]
    with pytest.raises(ValueError):
        map_estimate(m, 10.0, 0.0)


def test_uniform_cell_never_passes_its_own_level():
    m = _model_with([])
    m.cells[(0, 0)] = np.full(GRID.n_z, -math.log(GRID.n_z))
    assert map_estimate_cell(m, 0, 0, 1.0 / GRID.n_z) == []


def test_model_round_trip(tmp_path):
    m = _model_with([0.3, -2.0, 1.1])
    m.reference.origin_range, m.reference.origin_bearing = 7.0, 0.1
    m.grow_reference(np.random.default_rng(0).normal(size=(20, 2)))
    m.save(tmp_path / "c.json")
    again = ClassModel.load(tmp_path / "c.json")
    assert again.update_count == 3
    np.testing.assert_array_equal(again.cells[(5, 7)], m.cells[(5, 7)])
    np.testing.assert_array_equal(again.reference.reference_cloud, m.reference.reference_cloud)


def test_reference_cap():
    m = ClassModel("x", GRID, max_reference_points=50, seed=3)
    m.grow_reference(np.random.default_rng(0).normal(size=(80, 2)))
    assert len(m.reference.reference_cloud) == 50


# -- registration and prediction on simulated sightings ----------------------


def _arc(r0, b0, n=30, radius=0.3):
    """Planar features on the near side of a circle centred at range r0 + radius, bearing b0."""
    phi = np.linspace(-1.2, 1.2, n)
    c = (r0 + radius) * np.array([math.cos(b0), math.sin(b0)])
    pts = c - radius * np.c_[np.cos(phi + b0), np.sin(phi + b0)]
    feats = [ImageFeature(int(np.hypot(*p) / 0.05), 0, SphericalMeasurement(float(np.hypot(*p)),
                                                                         float(math.atan2(p[1], p[0])), None))
             for p in pts]
    return ObjectDetection(FeatureCluster(tuple(feats)), "cylindrical_piling")


def test_first_sighting_defines_frame():
    m = ClassModel("cylindrical_piling", GRID)
    det = _arc(8.0, 0.2)
    t = register_object(det, m, True)
    assert m.reference.initialized
    assert m.reference.origin_range == pytest.approx(det.cluster.ranges().min())
    # the (min range, median bearing) anchor lands at the origin
    r0, b0 = det.cluster.ranges().min(), np.median(det.cluster.angles())
    anchor = t.apply([[r0 * math.cos(b0), r0 * math.sin(b0)]])
    np.testing.assert_allclose(anchor, [[0.0, 0.0]], atol=1e-12)
    assert t.rotation == pytest.approx(-b0)


def test_wrong_class_is_a_precondition_violation():
    m = ClassModel("cylindrical_piling", GRID)
    det = ObjectDetection(_arc(8.0, 0.0).cluster, "wall")
    with pytest.raises(PreconditionError):
        register_object(det, m, True)
    with pytest.raises(PreconditionError):
        register_object(ObjectDetection(det.cluster, "unknown"), ClassModel("unknown", GRID), True)


def test_empty_model_cannot_predict():
    m = ClassModel("cylindrical_piling", GRID)
    with pytest.raises(PreconditionError):
        predict_heights(_arc(8.0, 0.0), m)


def test_infeasible_height_is_skipped():
    m = ClassModel("cylindrical_piling", GRID)
    det = _arc(1.0, 0.0, radius=0.1)
    register_object(det, m, True)
    for i in range(GRID.n_r):
        for j in range(GRID.n_theta):
            m.apply_update(i, j, 5.0, 0.05)
    assert predict_heights(det, m) == []


def _detect(img, n=10):
    clusters = filter_clusters(cluster_features(soca_cfar(img), 0.5, 4), n)
    return clusters


@pytest.fixture(scope="module")
def trained_cylinder_model():
    """Class model trained on a cylinder seen dead ahead from 15 ranges."""
    scene = Scene([Cylinder((30.0, 0.0, -5.0), 0.3, 10.0)], 10.0)
    h_cfg, v_cfg = default_horizontal_config(), default_vertical_config()
    m = ClassModel("cylindrical_piling", GRID)
    for k, x in enumerate(np.linspace(6.0, 22.0, 15)):
        pose = PlanarPose(float(x), 0.0, 0.0, -3.5)
        h, v = render_pair(scene, pose, h_cfg, v_cfg, 100 + k)
        clusters = _detect(h)
        feats = [f for c in clusters for f in c.features]
        fused = fuse_frame(h, v, feats, [f for c in _detect(v) for f in c.features], 0.0)
        if len(fused) < 3:
            continue
        det = ObjectDetection(clusters[0], "cylindrical_piling")
        t = register_object(det, m, True)
        update_class_model(m, fused, t, 0.1)
    return scene, m


def test_registration_overlaps_reference_after_lateral_shift(trained_cylinder_model):
    scene, m = trained_cylinder_model
    pose = PlanarPose(14.0, 1.0, 0.0, -3.5)
    h, _ = render_pair(scene, pose, default_horizontal_config(), default_vertical_config(), 7)
    det = ObjectDetection(_detect(h)[0], "cylindrical_piling")
    t = register_object(det, m, False)
    from scipy.spatial import cKDTree

    d, _ = cKDTree(m.reference.reference_cloud).query(t.apply(det.cluster.planar_points()))
    assert np.median(d) <= 2 * 0.05


def test_prediction_outside_overlap_lies_on_surface(trained_cylinder_model):
    scene, m = trained_cylinder_model
    assert m.update_count > 20
    # cylinder at 30 deg bearing: outside the vertical sonar's +-10 deg window
    pose = PlanarPose(30.0 - 12.0 * math.cos(math.radians(30)), -12.0 * math.sin(math.radians(30)),
                      0.0, -3.5)
    h, _ = render_pair(scene, pose, default_horizontal_config(), default_vertical_config(), 9)
    det = ObjectDetection(_detect(h)[0], "cylindrical_piling")
    assert abs(np.median(det.cluster.angles()) - math.radians(30)) < 0.05
    pts, idx = predict_heights_array(det, m, max_elevation=math.radians(10))
    assert len(pts) >= 10
    err = distances_to_scene(pose.apply(pts), scene)
    assert err.max() <= 0.2
    # every lifted point keeps its measured range
    R = det.cluster.ranges()[idx]
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), R, rtol=1e-6)
