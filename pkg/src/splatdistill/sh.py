"""Real spherical harmonics up to degree 3 in the 3DGS sign convention."""

from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
      -0.4570457994644658, 1.445305721320277, -0.5900435899266435)


def sh_basis(dirs, order: int) -> np.ndarray:
    """Basis values ``(..., (order+1)^2)`` for unit directions ``(..., 3)``."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = [np.full(x.shape, C0)]
    if order >= 1:
        out += [-C1 * y, C1 * z, -C1 * x]
    if order >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out += [
            C2[0] * x * y,
            C2[1] * y * z,
            C2[2] * (2 * zz - xx - yy),
            C2[3] * x * z,
            C2[4] * (xx - yy),
        ]
    if order >= 3:
        out += [
            C3[0] * y * (3 * xx - yy),
            C3[1] * x * y * z,
            C3[2] * y * (4 * zz - xx - yy),
            C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
            C3[4] * x * (4 * zz - xx - yy),
            C3[5] * z * (xx - yy),
            C3[6] * x * (xx - 3 * yy),
        ]
    return np.stack(out, axis=-1)


def sh_basis_grad(dirs, order: int) -> np.ndarray:
    """Partial derivatives of each basis polynomial, shape ``(..., (order+1)^2, 3)``."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    zero = np.zeros_like(x)
    rows = [(zero, zero, zero)]
    if order >= 1:
        rows += [(zero, zero - C1, zero), (zero, zero, zero + C1), (zero - C1, zero, zero)]
    if order >= 2:
        xx, yy, zz = x * x, y * y, z * z
        rows += [
            (C2[0] * y, C2[0] * x, zero),
            (zero, C2[1] * z, C2[1] * y),
            (-2 * C2[2] * x, -2 * C2[2] * y, 4 * C2[2] * z),
            (C2[3] * z, zero, C2[3] * x),
            (2 * C2[4] * x, -2 * C2[4] * y, zero),
        ]
    if order >= 3:
        rows += [
            (6 * C3[0] * x * y, C3[0] * (3 * xx - 3 * yy), zero),
            (C3[1] * y * z, C3[1] * x * z, C3[1] * x * y),
            (-2 * C3[2] * x * y, C3[2] * (4 * zz - xx - 3 * yy), 8 * C3[2] * y * z),
            (-6 * C3[3] * x * z, -6 * C3[3] * y * z, C3[3] * (6 * zz - 3 * xx - 3 * yy)),
            (C3[4] * (4 * zz - 3 * xx - yy), -2 * C3[4] * x * y, 8 * C3[4] * x * z),
            (2 * C3[5] * x * z, -2 * C3[5] * y * z, C3[5] * (xx - yy)),
            (C3[6] * (3 * xx - 3 * yy), -6 * C3[6] * x * y, zero),
        ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def eval_sh(sh, direction, order: int) -> np.ndarray:
    """Color seen from ``direction``: basis contraction plus 0.5, clamped to [0, 1].

    ``sh`` is ``((order+1)^2, 3)`` or batched ``(N, (order+1)^2, 3)``.
    """
    coeffs = np.asarray(sh, dtype=np.float64)
    k = (order + 1) ** 2
    if coeffs.shape[-2:] != (k, 3):
        raise ValueError(f"SH order {order} needs ({k}, 3) coefficients, got {coeffs.shape[-2:]}")
    basis = sh_basis(direction, order)
    raw = np.einsum("...k,...kc->...c", basis, coeffs) + 0.5
    return np.clip(raw, 0.0, 1.0)
