import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from asp import geom
from asp.errors import DegenerateGeometry, EmptyCloud, InvalidParameter

coords = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)
clouds = arrays(np.float64, st.tuples(st.integers(1, 40), st.just(3)), elements=coords)


def _cube(n=11, size=1.0):
    g = np.linspace(0.0, size, n)
    return np.array([[x, y, z] for x in g for y in g for z in g])


def test_as_cloud_validation():
    assert geom.as_cloud([1, 2, 3]).shape == (1, 3)
    with pytest.raises(EmptyCloud):
        geom.as_cloud([])
    assert geom.as_cloud([], allow_empty=True).shape == (0, 3)
    with pytest.raises(InvalidParameter):
        geom.as_cloud(np.zeros((4, 2)))
    with pytest.raises(InvalidParameter):
        geom.as_cloud([[0, 0, np.nan]])


@pytest.mark.parametrize("theta,expected", [
    (0.0, 0.0), (-math.pi / 2, 3 * math.pi / 2), (5 * math.pi, math.pi), (2 * math.pi, 0.0),
])
def test_normalize_angle(theta, expected):
    assert geom.normalize_angle(theta) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_normalize_angle_range(theta):
    t = geom.normalize_angle(theta)
    assert 0.0 <= t < 2 * math.pi
    assert math.isclose(math.cos(t), math.cos(theta), abs_tol=1e-7)


def test_pose2d_rejects_nonfinite_and_wraps():
    with pytest.raises(InvalidParameter):
        geom.Pose2D(math.inf, 0.0)
    assert geom.Pose2D(1, 2, -math.pi).theta == pytest.approx(math.pi)


@given(st.floats(-3, 3), st.floats(-1.5, 1.5), st.floats(-3, 3))
def test_quaternion_roundtrip(roll, pitch, yaw):
    q = geom.quat_from_rpy(roll, pitch, yaw)
    assert np.linalg.norm(q) == pytest.approx(1.0)
    m = geom.quat_to_matrix(q)
    assert np.allclose(m @ m.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(m) == pytest.approx(1.0)
    q2 = geom.quat_from_matrix(m)
    assert np.allclose(geom.quat_to_matrix(q2), m, atol=1e-9)


def test_yaw_rotates_x_to_y():
    m = geom.quat_to_matrix(geom.quat_from_rpy(0, 0, math.pi / 2))
    assert np.allclose(m @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_pose3d_checks_quaternion():
    with pytest.raises(InvalidParameter):
        geom.Pose3D(np.zeros(3), np.array([2.0, 0, 0, 0]))
    p = geom.Pose3D([1, 2, 3])
    assert geom.Pose3D.from_list(p.to_list()).to_list() == p.to_list()


def test_centroid_and_extents():
    cube = _cube()
    assert np.allclose(geom.centroid(cube), [0.5, 0.5, 0.5])
    assert np.allclose(geom.aabb_extents(cube), [1, 1, 1])
    bar = np.array([[0, 0, 0], [2, 0.1, 0.1]])
    assert geom.aabb_extents(bar).max() == pytest.approx(2.0)


def test_voxel_downsample_oracle():
    pts = np.array([[0.001, 0.001, 0.001], [0.003, 0.001, 0.001], [0.05, 0.0, 0.0]])
    out = geom.voxel_downsample(pts, 0.02)
    # two occupied voxels; the first holds the mean of the two nearby points
    assert out.shape == (2, 3)
    assert np.allclose(out[0], [0.002, 0.001, 0.001])
    assert np.allclose(out[1], [0.05, 0.0, 0.0])
    with pytest.raises(InvalidParameter):
        geom.voxel_downsample(pts, 0.0)


@given(clouds)
def test_voxel_downsample_properties(pc):
    out = geom.voxel_downsample(pc, 0.1)
    assert out.shape[0] <= pc.shape[0]
    assert out.shape[0] == np.unique(np.floor(pc / 0.1), axis=0).shape[0]
    perm = pc[::-1]
    assert np.allclose(geom.voxel_downsample(perm, 0.1), out)
    again = geom.voxel_downsample(out, 0.1)
    assert again.shape == out.shape


def test_overlap_ratio_examples():
    a = _cube(6, 0.1)
    assert geom.overlap_ratio(a, a) == 1.0
    assert geom.overlap_ratio(a, a + 5.0) == 0.0
    half = a[a[:, 0] <= 0.05]
    # every point of the half lies in the full cube
    assert geom.directed_overlap(half, a) == 1.0
    assert geom.overlap_ratio(a, half) == 1.0


@given(clouds, clouds)
def test_overlap_matches_bruteforce(a, b):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    expected = float((d.min(axis=1) <= 0.3).mean())
    assert geom.directed_overlap(a, b, 0.3) == pytest.approx(expected)
    assert geom.overlap_ratio(a, b, 0.3) == geom.overlap_ratio(b, a, 0.3)


def test_iou_3d():
    a = _cube(6, 0.1)
    assert geom.iou_3d(a, a) == 1.0
    assert geom.iou_3d(a, a + 1.0) == 0.0
    # two boxes of 2 voxels sharing one voxel
    p = np.array([[0.01, 0.01, 0.01], [0.03, 0.01, 0.01]])
    q = np.array([[0.03, 0.01, 0.01], [0.05, 0.01, 0.01]])
    assert geom.iou_3d(p, q, 0.02) == pytest.approx(1 / 3)


def test_dominant_normal_plane_and_degenerate():
    g = np.linspace(0, 1, 5)
    plane = np.array([[x, y, 0.3] for x in g for y in g])
    n = geom.dominant_normal(plane)
    assert abs(n[2]) == pytest.approx(1.0)
    with pytest.raises(DegenerateGeometry):
        geom.dominant_normal(np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3.0]]))
    with pytest.raises(DegenerateGeometry):
        geom.dominant_normal(plane[:2])


def test_orient_away():
    n = np.array([0, 0, 1.0])
    assert np.allclose(geom.orient_away(n, np.array([0, 0, -1.0]), np.zeros(3)), -n)
    assert np.allclose(geom.orient_away(n, np.array([0, 0, 1.0]), np.zeros(3)), n)


def test_nearest_distances(rng):
    q = rng.normal(size=(50, 3))
    c = rng.normal(size=(70, 3))
    ref = np.linalg.norm(q[:, None] - c[None], axis=2).min(axis=1)
    assert np.allclose(geom.nearest_distances(q, c), ref)
