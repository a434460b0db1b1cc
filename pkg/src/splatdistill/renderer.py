"""Differentiable splat rasterizer with an analytic backward pass.

The forward pass projects splats with the local affine (EWA) approximation,
sorts them by camera depth, and alpha-composites front to back. Instead of
tiles it enumerates (pixel, splat) pairs inside each splat's 3-sigma box, so
compositing becomes a segmented scan over a flat pair list. Every quantity the
backward pass needs is kept on a :class:`ForwardState`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, opencv_extrinsics
from .scene import GaussianScene, SceneGradients, normalize_quaternion, quat_to_rotmat, sigmoid
from .sh import sh_basis, sh_basis_grad

COV2D_FLOOR = 0.3
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4
MAHA_MAX = 9.0  # 3-sigma ellipse


class RenderError(ValueError):
    pass


@dataclass
class ProjectedSplat:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    alpha_base: float
    index: int


@dataclass
class RenderOutput:
    color: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W, 1)
    aux: np.ndarray  # (H, W) contributing splats per pixel
    state: ForwardState | None = field(default=None, repr=False, compare=False)


@dataclass
class ForwardState:
    order: np.ndarray  # storage index of each canonical (depth-sorted) splat
    # per canonical splat
    t: np.ndarray
    J: np.ndarray
    Wc: np.ndarray
    R: np.ndarray
    scale: np.ndarray
    q: np.ndarray
    rot_norm: np.ndarray
    sigma3: np.ndarray
    T2: np.ndarray
    conic: np.ndarray
    mean2d: np.ndarray
    color: np.ndarray
    color_mask: np.ndarray
    basis: np.ndarray
    dirs: np.ndarray
    dir_norm: np.ndarray
    opacity: np.ndarray
    # per (pixel, splat) pair, pixel-major then front to back
    pix: np.ndarray
    spl: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    G: np.ndarray
    alpha: np.ndarray
    trans: np.ndarray
    active: np.ndarray
    seg_start: np.ndarray
    seg_len: np.ndarray
    # per pixel
    t_final: np.ndarray
    accum: np.ndarray
    focal: float
    n_scene: int
    shape: tuple


def _check_finite(scene: GaussianScene) -> None:
    for name, arr in scene.params().items():
        flat = arr.reshape(len(scene), -1)
        bad = ~np.all(np.isfinite(flat), axis=1)
        if np.any(bad):
            raise RenderError(f"splat {int(np.argmax(bad))} has a non-finite {name}")


def _camera_space(mu: np.ndarray, Wc: np.ndarray, tc: np.ndarray) -> np.ndarray:
    # elementwise rather than BLAS so results do not depend on array position
    return (
        mu[:, 0:1] * Wc[:, 0] + mu[:, 1:2] * Wc[:, 1] + mu[:, 2:3] * Wc[:, 2] + tc
    )


def _enumerate_pairs(mean2d, a, c, conic, opacity, H, W):
    """Visible (pixel, splat) pairs, sorted by pixel and front to back within a pixel."""
    n = len(mean2d)
    # candidate pairs from the axis-aligned box of the 3-sigma ellipse
    rx = 3.0 * np.sqrt(a)
    ry = 3.0 * np.sqrt(c)
    x0 = np.clip(np.ceil(mean2d[:, 0] - rx - 0.5), 0, W).astype(np.int64)
    x1 = np.clip(np.floor(mean2d[:, 0] + rx - 0.5), -1, W - 1).astype(np.int64)
    y0 = np.clip(np.ceil(mean2d[:, 1] - ry - 0.5), 0, H).astype(np.int64)
    y1 = np.clip(np.floor(mean2d[:, 1] + ry - 0.5), -1, H - 1).astype(np.int64)
    nx = np.maximum(x1 - x0 + 1, 0)
    ny = np.maximum(y1 - y0 + 1, 0)
    cnt = nx * ny
    total = int(cnt.sum())
    spl = np.repeat(np.arange(n), cnt)
    starts = np.cumsum(cnt) - cnt
    local = np.arange(total) - np.repeat(starts, cnt)
    nx_r = np.repeat(nx, cnt)
    px = np.repeat(x0, cnt) + local % np.maximum(nx_r, 1)
    py = np.repeat(y0, cnt) + local // np.maximum(nx_r, 1)

    dx = px + 0.5 - mean2d[spl, 0]
    dy = py + 0.5 - mean2d[spl, 1]
    maha = conic[spl, 0] * dx * dx + 2.0 * conic[spl, 1] * dx * dy + conic[spl, 2] * dy * dy
    G = np.exp(-0.5 * maha)
    alpha = opacity[spl] * G
    keep = (maha <= MAHA_MAX) & (alpha >= ALPHA_MIN)
    pix = (py * W + px)[keep]
    spl, dx, dy, G, alpha = spl[keep], dx[keep], dy[keep], G[keep], alpha[keep]

    # pairs are splat-major in depth order; a stable sort by pixel keeps depth order per pixel
    perm = np.argsort(pix, kind="stable")
    return pix[perm], spl[perm], dx[perm], dy[perm], G[perm], alpha[perm]


def _forward(scene: GaussianScene, cam: Camera, cull_from: ForwardState | None = None) -> ForwardState:
    _check_finite(scene)
    H, W = cam.height, cam.width
    Wc, tc = opencv_extrinsics(cam)
    f = cam.focal
    cx, cy = cam.principal_point

    t_all = _camera_space(scene.mu, Wc, tc)
    storage = np.arange(len(scene))
    vis = t_all[:, 2] > cam.near
    vis_idx = storage[vis]
    if cull_from is None:
        order = vis_idx[np.lexsort((vis_idx, t_all[vis, 2]))]
    else:
        order = cull_from.order
    n = len(order)

    mu = scene.mu[order]
    t = t_all[order]
    rot = scene.rotation[order]
    rot_norm = np.linalg.norm(rot, axis=1)
    q = normalize_quaternion(rot) if n else rot
    R = quat_to_rotmat(rot) if n else np.zeros((0, 3, 3))
    scale = np.exp(scene.log_scale[order])
    M = R * scale[:, None, :]
    sigma3 = M @ np.swapaxes(M, 1, 2)

    invz = 1.0 / t[:, 2]
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = f * invz
    J[:, 0, 2] = -f * t[:, 0] * invz**2
    J[:, 1, 1] = f * invz
    J[:, 1, 2] = -f * t[:, 1] * invz**2
    T2 = J @ Wc
    cov = T2 @ sigma3 @ np.swapaxes(T2, 1, 2)
    cov[:, 0, 0] += COV2D_FLOOR
    cov[:, 1, 1] += COV2D_FLOOR
    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)
    mean2d = np.stack([f * t[:, 0] * invz + cx, f * t[:, 1] * invz + cy], axis=1)

    campos = cam.position
    dvec = mu - campos
    dir_norm = np.linalg.norm(dvec, axis=1)
    dirs = dvec / dir_norm[:, None]
    basis = sh_basis(dirs, scene.sh_order)
    raw = np.einsum("nk,nkc->nc", basis, scene.sh[order]) + 0.5
    color = np.clip(raw, 0.0, 1.0)
    color_mask = (raw > 0.0) & (raw < 1.0)
    opacity = sigmoid(scene.opacity_logit[order])

    if cull_from is None:
        pix, spl, dx, dy, G, alpha = _enumerate_pairs(mean2d, a, c, conic, opacity, H, W)
    else:
        pix, spl = cull_from.pix, cull_from.spl
        dx = pix % W + 0.5 - mean2d[spl, 0]
        dy = pix // W + 0.5 - mean2d[spl, 1]
        maha = conic[spl, 0] * dx * dx + 2.0 * conic[spl, 1] * dx * dy + conic[spl, 2] * dy * dy
        G = np.exp(-0.5 * maha)
        alpha = opacity[spl] * G

    npix = H * W
    seg_len = np.bincount(pix, minlength=npix)
    seg_start = np.cumsum(seg_len) - seg_len
    log1m = np.log1p(-alpha)
    excl = np.cumsum(log1m) - log1m
    base = np.repeat(excl[seg_start[seg_len > 0]], seg_len[seg_len > 0])
    trans = np.exp(excl - base)
    active = trans >= T_MIN if cull_from is None else cull_from.active

    weight = np.where(active, alpha * trans, 0.0)
    accum = np.stack(
        [np.bincount(pix, weights=weight * color[spl, ch], minlength=npix) for ch in range(3)],
        axis=1,
    )
    t_final = np.exp(np.bincount(pix, weights=np.where(active, log1m, 0.0), minlength=npix))

    return ForwardState(
        order=order, t=t, J=J, Wc=Wc, R=R, scale=scale, q=q, rot_norm=rot_norm,
        sigma3=sigma3, T2=T2, conic=conic, mean2d=mean2d, color=color,
        color_mask=color_mask, basis=basis, dirs=dirs, dir_norm=dir_norm, opacity=opacity,
        pix=pix, spl=spl, dx=dx, dy=dy, G=G, alpha=alpha, trans=trans, active=active,
        seg_start=seg_start, seg_len=seg_len, t_final=t_final, accum=accum, focal=f,
        n_scene=len(scene), shape=(H, W),
    )


def render(scene: GaussianScene, cam: Camera, cull_from: RenderOutput | None = None) -> RenderOutput:
    """Composite ``scene`` as seen from ``cam``.

    ``cull_from`` reuses the depth order, culled pair set and early-termination
    points of an earlier render of the same camera, so the result stays on
    that render's smooth piece (for gradient checks across cull thresholds).
    """
    st = _forward(scene, cam, None if cull_from is None else cull_from.state)
    H, W = st.shape
    img = st.accum + st.t_final[:, None] * scene.background[None, :]
    counts = np.bincount(st.pix[st.active], minlength=H * W)
    return RenderOutput(
        color=img.reshape(H, W, 3),
        alpha=(1.0 - st.t_final).reshape(H, W, 1),
        aux=counts.reshape(H, W),
        state=st,
    )


def project(scene: GaussianScene, cam: Camera) -> list[ProjectedSplat]:
    """Per-splat screen-space footprint, front to back; splats behind the near plane are dropped."""
    st = _forward(scene, cam)
    out = []
    for i, idx in enumerate(st.order):
        a, b, c = st.conic[i]
        cov = np.linalg.inv(np.array([[a, b], [b, c]]))
        out.append(ProjectedSplat(st.mean2d[i].copy(), cov, float(st.t[i, 2]),
                                  st.color[i].copy(), float(st.opacity[i]), int(idx)))
    return out


def render_backward(scene: GaussianScene, cam: Camera, grad_color,
                    forward: RenderOutput | None = None) -> SceneGradients:
    """Gradient of ``sum(grad_color * render(scene, cam).color)`` w.r.t. every splat parameter.

    Pass the matching ``forward`` output to skip recomputing the forward pass.
    """
    H, W = cam.height, cam.width
    g_img = np.asarray(grad_color, dtype=np.float64)
    if g_img.shape != (H, W, 3):
        raise RenderError(f"grad_color shape {g_img.shape} does not match render ({H}, {W}, 3)")
    st = forward.state if forward is not None and forward.state is not None else _forward(scene, cam)
    grads = SceneGradients.zeros_like(scene)
    n = len(st.order)
    if n == 0:
        return grads

    g_pix = g_img.reshape(H * W, 3)
    pix, spl = st.pix, st.spl
    gp = g_pix[pix]
    col = st.color[spl]
    act = st.active

    # dC/dalpha_i = c_i T_i - (sum of later contributions + background T_final) / (1 - alpha_i)
    contrib = np.where(act, st.alpha * st.trans, 0.0)[:, None] * col
    incl = np.cumsum(contrib, axis=0)
    has = st.seg_len > 0
    seg_base = np.repeat((incl - contrib)[st.seg_start[has]], st.seg_len[has], axis=0)
    incl -= seg_base
    tail = st.accum[pix] - incl + st.t_final[pix, None] * scene.background[None, :]
    g_alpha = np.where(
        act,
        np.einsum("pc,pc->p", gp, col) * st.trans - np.einsum("pc,pc->p", gp, tail) / (1.0 - st.alpha),
        0.0,
    )
    w_pair = np.where(act, st.alpha * st.trans, 0.0)
    g_color = np.stack([np.bincount(spl, weights=w_pair * gp[:, ch], minlength=n) for ch in range(3)], axis=1)

    g_opacity = np.bincount(spl, weights=g_alpha * st.G, minlength=n)
    g_maha = g_alpha * st.opacity[spl] * st.G * -0.5
    dx, dy = st.dx, st.dy
    gA = np.bincount(spl, weights=g_maha * dx * dx, minlength=n)
    gB = np.bincount(spl, weights=g_maha * 2.0 * dx * dy, minlength=n)
    gC = np.bincount(spl, weights=g_maha * dy * dy, minlength=n)
    A_, B_, C_ = st.conic[spl, 0], st.conic[spl, 1], st.conic[spl, 2]
    g_mx = np.bincount(spl, weights=g_maha * -2.0 * (A_ * dx + B_ * dy), minlength=n)
    g_my = np.bincount(spl, weights=g_maha * -2.0 * (B_ * dx + C_ * dy), minlength=n)

    # conic = inv(cov2d)  =>  dL/dcov = -conic dL/dconic conic
    conic_m = np.empty((n, 2, 2))
    conic_m[:, 0, 0], conic_m[:, 0, 1], conic_m[:, 1, 0], conic_m[:, 1, 1] = (
        st.conic[:, 0], st.conic[:, 1], st.conic[:, 1], st.conic[:, 2])
    g_conic = np.empty((n, 2, 2))
    g_conic[:, 0, 0], g_conic[:, 0, 1], g_conic[:, 1, 0], g_conic[:, 1, 1] = gA, 0.5 * gB, 0.5 * gB, gC
    g_cov = -conic_m @ g_conic @ conic_m

    T2t = np.swapaxes(st.T2, 1, 2)
    g_sigma3 = T2t @ g_cov @ st.T2
    g_T2 = 2.0 * g_cov @ st.T2 @ st.sigma3
    g_J = g_T2 @ st.Wc.T

    f = st.focal
    tx, ty, tz = st.t[:, 0], st.t[:, 1], st.t[:, 2]
    iz = 1.0 / tz
    g_t = np.zeros((n, 3))
    g_t[:, 0] = g_J[:, 0, 2] * (-f * iz**2) + g_mx * f * iz
    g_t[:, 1] = g_J[:, 1, 2] * (-f * iz**2) + g_my * f * iz
    g_t[:, 2] = (
        (g_J[:, 0, 0] + g_J[:, 1, 1]) * (-f * iz**2)
        + g_J[:, 0, 2] * (2.0 * f * tx * iz**3)
        + g_J[:, 1, 2] * (2.0 * f * ty * iz**3)
        - g_mx * f * tx * iz**2
        - g_my * f * ty * iz**2
    )
    g_mu = g_t @ st.Wc

    # color = clamp(sh . basis(dir) + 0.5)
    g_raw = g_color * st.color_mask
    g_sh = st.basis[:, :, None] * g_raw[:, None, :]
    if scene.sh_order > 0:
        dbasis = sh_basis_grad(st.dirs, scene.sh_order)
        coeff_dot = np.einsum("nkc,nc->nk", scene.sh[st.order], g_raw)
        g_dir = np.einsum("nk,nkd->nd", coeff_dot, dbasis)
        d = st.dirs
        g_mu += (g_dir - d * np.sum(d * g_dir, axis=1, keepdims=True)) / st.dir_norm[:, None]

    # sigma3 = M M^T, M = R diag(s)
    M = st.R * st.scale[:, None, :]
    g_M = 2.0 * g_sigma3 @ M
    g_logs = np.sum(g_M * st.R, axis=1) * st.scale
    gR = g_M * st.scale[:, None, :]
    w, x, y, z = st.q[:, 0], st.q[:, 1], st.q[:, 2], st.q[:, 3]
    G00, G01, G02 = gR[:, 0, 0], gR[:, 0, 1], gR[:, 0, 2]
    G10, G11, G12 = gR[:, 1, 0], gR[:, 1, 1], gR[:, 1, 2]
    G20, G21, G22 = gR[:, 2, 0], gR[:, 2, 1], gR[:, 2, 2]
    gq = 2.0 * np.stack([
        -z * G01 + y * G02 + z * G10 - x * G12 - y * G20 + x * G21,
        y * G01 + z * G02 + y * G10 - 2 * x * G11 - w * G12 + z * G20 + w * G21 - 2 * x * G22,
        -2 * y * G00 + x * G01 + w * G02 + x * G10 + z * G12 - w * G20 + z * G21 - 2 * y * G22,
        -2 * z * G00 - w * G01 + x * G02 + w * G10 - 2 * z * G11 + y * G12 + x * G20 + y * G21,
    ], axis=1)
    g_rot = (gq - st.q * np.sum(st.q * gq, axis=1, keepdims=True)) / st.rot_norm[:, None]

    g_logit = g_opacity * st.opacity * (1.0 - st.opacity)

    o = st.order
    grads.mu[o] = g_mu
    grads.log_scale[o] = g_logs
    grads.rotation[o] = g_rot
    grads.sh[o] = g_sh
    grads.opacity_logit[o] = g_logit
    return grads


def render_turntable(scene: GaussianScene, cameras) -> list[RenderOutput]:
    return [render(scene, cam) for cam in cameras]
