import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from splatdistill.camera import (
    Camera,
    CameraError,
    from_spherical,
    opencv_extrinsics,
    orbit,
    project_points,
    reference_camera,
    relative_embedding,
    sample_orbit,
    view_matrix,
)

az = st.floats(-720, 720, allow_nan=False)
po = st.floats(1, 179, allow_nan=False)


def test_front_view_position():
    np.testing.assert_allclose(Camera(0, 90).position, [0, 0, 1.5], atol=1e-15)
    np.testing.assert_allclose(Camera(90, 90, 2.0).position, [2.0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(Camera(0, 45, 1.0).position, [0, math.sqrt(0.5), math.sqrt(0.5)], atol=1e-15)


@given(az, po)
def test_rotation_orthonormal_and_looks_at_target(a, p):
    cam = Camera(a, p)
    R = cam.rotation()
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    px, depth, valid = project_points(cam, np.zeros(3))
    assert valid[0]
    assert depth[0] == pytest.approx(cam.radius)
    np.testing.assert_allclose(px[0], cam.principal_point, atol=1e-9)


def test_up_direction_projects_upward():
    cam = Camera(30, 90)
    px, _, _ = project_points(cam, [[0, 0.1, 0], [0, -0.1, 0]])
    assert px[0, 1] < 32 < px[1, 1]


def test_projection_matches_pinhole_with_opencv_extrinsics(rng):
    cam = Camera(40, 70, width=48, height=32)
    pts = rng.uniform(-0.3, 0.3, size=(10, 3))
    Rcv, tcv = opencv_extrinsics(cam)
    pc = pts @ Rcv.T + tcv
    cx, cy = cam.principal_point
    expect = np.stack([cam.focal * pc[:, 0] / pc[:, 2] + cx, cam.focal * pc[:, 1] / pc[:, 2] + cy], axis=1)
    px, depth, _ = project_points(cam, pts)
    np.testing.assert_allclose(px, expect, atol=1e-9)
    np.testing.assert_allclose(depth, pc[:, 2], atol=1e-12)


def test_points_behind_camera_invalid():
    cam = Camera(0, 90)
    px, _, valid = project_points(cam, [[0, 0, 3.0]])
    assert not valid[0] and np.all(np.isnan(px[0]))


def test_view_matrix_maps_eye_to_origin():
    cam = Camera(123, 60)
    V = view_matrix(cam)
    np.testing.assert_allclose(V @ np.append(cam.position, 1), [0, 0, 0, 1], atol=1e-12)


@pytest.mark.parametrize("kwargs", [dict(polar=0), dict(polar=180), dict(radius=0), dict(fov_y=180),
                                    dict(width=0)])
def test_invalid_cameras(kwargs):
    args = dict(azimuth=0, polar=90) | kwargs
    with pytest.raises(CameraError):
        Camera(**args)


def test_dict_round_trip():
    cam = from_spherical(12.5, 80, 1.7, 40, 32, 24)
    assert Camera.from_dict(cam.to_dict()) == cam


def test_relative_embedding():
    ref = reference_camera()
    e = relative_embedding(ref, ref).as_array()
    np.testing.assert_allclose(e, [0, 0, 1, 0], atol=1e-15)
    e = relative_embedding(ref, Camera(90, 60, 2.0))
    assert e.delta_polar == pytest.approx(math.radians(-30))
    assert e.sin_delta_azimuth == pytest.approx(1.0)
    assert e.delta_radius == pytest.approx(0.5)


def test_orbit_spacing():
    cams = orbit(8, polar=80)
    assert [c.azimuth for c in cams] == [45.0 * i for i in range(8)]
    assert all(c.polar == 80 for c in cams)


def test_sample_orbit_stratified_and_seeded():
    cams = sample_orbit(6, polar_jitter_deg=10, seed=3)
    azs = np.array([c.azimuth for c in cams])
    np.testing.assert_allclose(np.diff(azs), 60.0)
    assert all(80 <= c.polar <= 100 for c in cams)
    assert [c.azimuth for c in sample_orbit(6, 10, 3)] == list(azs)
    with pytest.raises(CameraError):
        sample_orbit(0)
