import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthosonar.geometry import (
    CartesianPoint,
    FusedPoint,
    PlanarPose,
    SphericalMeasurement,
    cartesian_to_spherical,
    spherical_to_cartesian,
    spherical_xyz,
    transform_to_map,
    wrap_angle,
    xyz_spherical,
)


def test_spherical_axis_directions():
    p = spherical_to_cartesian(SphericalMeasurement(1.0, 0.0, 0.0))
    assert (p.x, p.y, p.z) == (1.0, 0.0, 0.0)
    p = spherical_to_cartesian(SphericalMeasurement(2.0, math.pi / 2, 0.0))
    assert p.x == pytest.approx(0.0, abs=1e-15)
    assert p.y == pytest.approx(2.0)


def test_spherical_against_high_precision_value():
    # frozen from a 40-digit mpmath evaluation
    p = spherical_to_cartesian(SphericalMeasurement(30.0, 0.3, -0.1))
    np.testing.assert_allclose(
        p.as_array(), [28.516913577661900709, 8.8213150965556756069, -2.9950024994048445692],
        rtol=0, atol=1e-12,
    )


def test_cartesian_to_spherical_examples():
    m = cartesian_to_spherical(CartesianPoint(0.0, 3.0, 0.0))
    assert m.range == pytest.approx(3.0)
    assert m.bearing == pytest.approx(math.pi / 2)
    assert m.elevation == pytest.approx(0.0)
    m = cartesian_to_spherical(CartesianPoint(1.0, 1.0, math.sqrt(2.0)))
    assert m.range == pytest.approx(2.0, abs=1e-15)
    assert m.bearing == pytest.approx(math.pi / 4, abs=1e-15)
    assert m.elevation == pytest.approx(math.pi / 4, abs=1e-15)


def test_origin_rejected():
    with pytest.raises(ValueError):
        cartesian_to_spherical(CartesianPoint(0.0, 0.0, 0.0))


def test_round_trip_frustum(rng):
    n = 1000
    r = rng.uniform(0.1, 30.0, n)
    b = rng.uniform(-math.radians(65), math.radians(65), n)
    e = rng.uniform(-math.radians(10), math.radians(10), n)
    for ri, bi, ei in zip(r, b, e):
        p = spherical_to_cartesian(SphericalMeasurement(ri, bi, ei))
        q = spherical_to_cartesian(cartesian_to_spherical(p))
        assert np.max(np.abs(p.as_array() - q.as_array())) < 1e-9


def test_vectorized_matches_scalar(rng):
    r, b, e = rng.uniform(1, 30, 50), rng.uniform(-1, 1, 50), rng.uniform(-0.2, 0.2, 50)
    xyz = spherical_xyz(r, b, e)
    for k in range(50):
        p = spherical_to_cartesian(SphericalMeasurement(r[k], b[k], e[k]))
        np.testing.assert_allclose(xyz[k], p.as_array(), atol=1e-12)
    r2, b2, e2 = xyz_spherical(xyz)
    np.testing.assert_allclose(r2, r, atol=1e-12)
    np.testing.assert_allclose(b2, b, atol=1e-12)
    np.testing.assert_allclose(e2, e, atol=1e-12)


def test_measurement_validation():
    with pytest.raises(ValueError):
        SphericalMeasurement(-1.0)
    with pytest.raises(ValueError):
        SphericalMeasurement(1.0, bearing=4.0)
    with pytest.raises(ValueError):
        CartesianPoint(float("nan"), 0.0, 0.0)
    with pytest.raises(ValueError):
        FusedPoint(1.0, 0.0, 0.0, 1.5)


def test_yaw_normalized():
    assert PlanarPose(0, 0, 3 * math.pi / 2, 0).yaw == pytest.approx(-math.pi / 2)
    assert PlanarPose(0, 0, math.pi, 0).yaw == pytest.approx(-math.pi)
    assert wrap_angle(math.pi) == pytest.approx(-math.pi)


def test_transform_examples():
    p = CartesianPoint(5.0, 1.0, -2.0)
    assert transform_to_map(PlanarPose(), p) == p
    q = transform_to_map(PlanarPose(0, 0, math.pi / 2, 0), CartesianPoint(1.0, 0.0, 0.0))
    np.testing.assert_allclose(q.as_array(), [0, 1, 0], atol=1e-15)


def test_transform_against_matrix_value():
    # frozen from a 40-digit homogeneous-matrix product
    q = transform_to_map(PlanarPose(10.0, -4.0, math.pi / 6, 1.5), CartesianPoint(3.0, 2.0, 0.0))
    np.testing.assert_allclose(q.as_array(), [11.59807621135331594, -0.76794919243112270647, 1.5],
                               atol=1e-12)


def test_apply_agrees_with_matrix(rng):
    pose = PlanarPose(3.0, -2.0, 0.7, -4.0)
    pts = rng.normal(size=(20, 3))
    homog = np.c_[pts, np.ones(20)] @ pose.matrix().T
    np.testing.assert_allclose(pose.apply(pts), homog[:, :3], atol=1e-12)


poses = st.builds(
    PlanarPose,
    st.floats(-100, 100), st.floats(-100, 100), st.floats(-10, 10), st.floats(-20, 0),
)
points = st.lists(st.tuples(*[st.floats(-50, 50)] * 3), min_size=2, max_size=10)


@settings(max_examples=200, deadline=None)
@given(poses, points)
def test_transform_is_isometry_and_invertible(pose, pts):
    pts = np.array(pts)
    world = pose.apply(pts)
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d1 = np.linalg.norm(world[:, None] - world[None], axis=2)
    assert np.max(np.abs(d0 - d1)) < 1e-9
    assert np.max(np.abs(pose.inverse_apply(world) - pts)) < 1e-9


def test_fused_point_cartesian():
    f = FusedPoint(10.025, 0.1, -0.05, 0.5)
    p = f.to_cartesian()
    assert math.sqrt(p.x ** 2 + p.y ** 2 + p.z ** 2) == pytest.approx(10.025)
