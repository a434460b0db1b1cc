import numpy as np
import pytest
from scipy.special import sph_harm_y

from splatdistill.sh import eval_sh, sh_basis, sh_basis_grad


def _real_sh_oracle(l, m, d):
    """Real SH built from scipy's complex SH (Condon-Shortley phase kept, no extra (-1)^m)."""
    theta = np.arccos(np.clip(d[:, 2], -1, 1))
    phi = np.arctan2(d[:, 1], d[:, 0])
    Y = sph_harm_y(l, abs(m), theta, phi)
    if m == 0:
        return Y.real
    return np.sqrt(2) * (Y.real if m > 0 else Y.imag)


@pytest.fixture
def dirs(rng):
    d = rng.normal(size=(50, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_basis_matches_scipy(order, dirs):
    B = sh_basis(dirs, order)
    assert B.shape == (50, (order + 1) ** 2)
    for l in range(order + 1):
        for m in range(-l, l + 1):
            np.testing.assert_allclose(B[:, l * l + l + m], _real_sh_oracle(l, m, dirs), atol=1e-12)


def test_basis_is_orthonormal_on_sphere():
    # Lebedev-free check: Monte Carlo over many directions
    rng = np.random.default_rng(5)
    d = rng.normal(size=(400_000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    B = sh_basis(d, 3)
    gram = 4 * np.pi * B.T @ B / len(d)
    np.testing.assert_allclose(gram, np.eye(16), atol=0.02)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_basis_grad_by_finite_differences(order, dirs):
    g = sh_basis_grad(dirs, order)
    h = 1e-6
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        fd = (sh_basis(dirs + e, order) - sh_basis(dirs - e, order)) / (2 * h)
        np.testing.assert_allclose(g[..., axis], fd, atol=1e-8)


def test_eval_sh_dc_only_gives_rgb():
    from splatdistill.scene import rgb_to_sh_dc

    sh = np.zeros((4, 3))
    sh[0] = rgb_to_sh_dc([0.1, 0.5, 0.8])
    np.testing.assert_allclose(eval_sh(sh, np.array([0, 0, 1.0]), 1), [0.1, 0.5, 0.8], atol=1e-15)


def test_eval_sh_clamps():
    sh = np.full((1, 3), 10.0)
    np.testing.assert_array_equal(eval_sh(sh, np.array([1.0, 0, 0]), 0), 1.0)
    np.testing.assert_array_equal(eval_sh(-sh, np.array([1.0, 0, 0]), 0), 0.0)


def test_eval_sh_rejects_wrong_count():
    with pytest.raises(ValueError, match="coefficients"):
        eval_sh(np.zeros((3, 3)), np.array([1.0, 0, 0]), 1)
