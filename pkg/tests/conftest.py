import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def brute_dft2(x):
    """Unitary 2D DFT by direct double sum, one channel at a time."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 2:
        x = x[:, :, None]
    H, W, C = x.shape
    out = np.zeros_like(x)
    for k in range(H):
        for l in range(W):
            acc = np.zeros(C, dtype=np.complex128)
            for m in range(H):
                for n in range(W):
                    acc += x[m, n] * np.exp(-2j * np.pi * (k * m / H + l * n / W))
            out[k, l] = acc / np.sqrt(H * W)
    return out


def brute_dft2_matrix(x):
    """Same transform via explicit DFT matrices; fast enough for 64x64."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 2:
        x = x[:, :, None]
    H, W, _ = x.shape
    FH = np.exp(-2j * np.pi * np.outer(np.arange(H), np.arange(H)) / H)
    FW = np.exp(-2j * np.pi * np.outer(np.arange(W), np.arange(W)) / W)
    return np.einsum("km,mnc,ln->klc", FH, x, FW) / np.sqrt(H * W)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
