import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from splatdistill.scene import (
    GaussianScene,
    GaussianSplat,
    SceneError,
    SceneGradients,
    covariance,
    logit,
    normalize_quaternion,
    quat_to_rotmat,
    query_density,
    rgb_to_sh_dc,
    sh_coeff_count,
    sigmoid,
    sphere_init,
)

quats = arrays(np.float64, 4, elements=st.floats(-3, 3, allow_nan=False)).filter(
    lambda q: np.linalg.norm(q) > 1e-3)


def _axis_angle(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def test_quaternion_matches_rodrigues():
    axis = np.array([1.0, 2.0, -0.5])
    angle = 0.7
    k = axis / np.linalg.norm(axis)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    rodrigues = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
    np.testing.assert_allclose(quat_to_rotmat(_axis_angle(axis, angle)), rodrigues, atol=1e-14)


@given(quats)
def test_rotation_is_orthonormal_and_scale_free(q):
    R = quat_to_rotmat(q)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(quat_to_rotmat(3.7 * q), R, atol=1e-12)


def test_zero_quaternion_rejected():
    with pytest.raises(SceneError):
        normalize_quaternion([0, 0, 0, 0])


@given(quats, arrays(np.float64, 3, elements=st.floats(-3, 1)))
def test_covariance_is_symmetric_positive_definite(q, log_s):
    sp = GaussianSplat(np.zeros(3), log_s, q, np.zeros((1, 3)), 0.0)
    cov = covariance(sp)
    np.testing.assert_allclose(cov, cov.T, atol=1e-14)
    eig = np.linalg.eigvalsh(cov)
    np.testing.assert_allclose(np.sort(eig), np.sort(np.exp(2 * log_s)), rtol=1e-9)


def test_query_density_against_explicit_inverse():
    sp = GaussianSplat(np.array([0.1, -0.2, 0.3]), np.log([0.2, 0.1, 0.3]), _axis_angle([0, 1, 1], 0.4),
                       np.zeros((1, 3)), 0.0)
    x = np.array([0.2, 0.0, 0.1])
    d = x - sp.mu
    expect = np.exp(-0.5 * d @ np.linalg.inv(covariance(sp)) @ d)
    assert query_density(sp, x) == pytest.approx(expect, rel=1e-12)
    assert query_density(sp, sp.mu) == 1.0


def test_query_density_rejects_degenerate_scale():
    sp = GaussianSplat(np.zeros(3), np.array([0.0, 0.0, np.log(1e-9)]), np.array([1.0, 0, 0, 0]),
                       np.zeros((1, 3)), 0.0)
    with pytest.raises(SceneError, match="singular"):
        query_density(sp, np.ones(3))


def test_sigmoid_logit_inverse_and_stable():
    p = np.array([1e-6, 0.2, 0.5, 0.9, 1 - 1e-6])
    np.testing.assert_allclose(sigmoid(logit(p)), p, rtol=1e-9)
    big = sigmoid(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(big)) and big[0] == 0.0 and big[1] == 1.0


@pytest.mark.parametrize("order,count", [(0, 1), (1, 4), (2, 9), (3, 16)])
def test_sh_coeff_count(order, count):
    assert sh_coeff_count(order) == count


def test_sh_order_out_of_range():
    with pytest.raises(SceneError):
        sh_coeff_count(4)


def test_from_activated_round_trip():
    mu = np.random.default_rng(0).normal(size=(5, 3))
    sc = GaussianScene.from_activated(mu, 0.05, (1, 0, 0, 0), (0.2, 0.4, 0.9), 0.3, sh_order=2)
    np.testing.assert_allclose(sc.scale, 0.05)
    np.testing.assert_allclose(sc.opacity, 0.3)
    assert sc.sh.shape == (5, 9, 3)
    np.testing.assert_allclose(sc.sh[:, 0], rgb_to_sh_dc([0.2, 0.4, 0.9]) * np.ones((5, 1)))
    np.testing.assert_array_equal(sc.sh[:, 1:], 0.0)
    sc.check()


def test_covariances_match_per_splat(rng):
    sc = GaussianScene(rng.normal(size=(4, 3)), rng.normal(size=(4, 3)) - 2, rng.normal(size=(4, 4)),
                       np.zeros((4, 1, 3)), np.zeros(4))
    for i in range(4):
        np.testing.assert_allclose(sc.covariances()[i], covariance(sc.splat(i)), atol=1e-15)


def test_copy_and_subset_are_independent():
    sc = sphere_init(10, 0.5, 0)
    cp = sc.copy()
    cp.mu[0] += 1
    assert not np.array_equal(cp.mu, sc.mu)
    sub = sc.subset(np.arange(10) % 2 == 0)
    assert len(sub) == 5
    np.testing.assert_array_equal(sub.mu, sc.mu[::2])


def test_check_catches_bad_opacity():
    sc = sphere_init(3, 0.5, 0)
    sc.opacity_logit[1] = np.inf
    with pytest.raises(SceneError):
        sc.check()


def test_sphere_init_statistics():
    sc = sphere_init(4000, 0.5, 3)
    r = np.linalg.norm(sc.mu, axis=1)
    assert r.max() <= 0.5
    # uniform in the ball: P(r < R/2) = 1/8
    assert np.mean(r < 0.25) == pytest.approx(0.125, abs=0.02)
    np.testing.assert_allclose(sc.opacity, 0.1)
    np.testing.assert_array_equal(sphere_init(50, 0.5, 9).mu, sphere_init(50, 0.5, 9).mu)


@pytest.mark.parametrize("count,radius", [(0, 1.0), (5, 0.0)])
def test_sphere_init_validates(count, radius):
    with pytest.raises(SceneError):
        sphere_init(count, radius, 0)


def test_scene_gradients_algebra():
    sc = sphere_init(3, 0.5, 0)
    g = SceneGradients.zeros_like(sc)
    g.mu[:] = 1.0
    h = (g + g).scaled(0.25)
    np.testing.assert_array_equal(h.mu, 0.5)
    assert h.all_finite()
    h.sh[0, 0, 0] = np.nan
    assert not h.all_finite()
