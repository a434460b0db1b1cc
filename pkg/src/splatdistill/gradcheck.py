"""Central finite-difference checks for the renderer and the amplitude residual.

The rasterizer is only piecewise smooth: a perturbation can push a pair
across the alpha or 3-sigma cut, reorder two splats, or move the
early-termination point. When that happens the probe is re-evaluated on the
base render's piece (same order, pair set and stopping points), which is the
function the analytic gradient differentiates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .grids import amplitude, dft2
from .renderer import RenderOutput, render, render_backward
from .scene import GaussianScene


@dataclass
class Mismatch:
    param: str
    index: tuple
    numeric: float
    analytic: float


@dataclass
class GradCheckResult:
    checked: int = 0
    frozen: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def merge(self, other: GradCheckResult) -> GradCheckResult:
        return GradCheckResult(self.checked + other.checked, self.frozen + other.frozen,
                               self.mismatches + other.mismatches)


def close(numeric: float, analytic: float, rtol: float, atol: float) -> bool:
    diff = abs(numeric - analytic)
    return diff <= atol or diff <= rtol * max(abs(numeric), abs(analytic))


def _same_piece(a: RenderOutput, b: RenderOutput) -> bool:
    sa, sb = a.state, b.state
    return (np.array_equal(sa.order, sb.order) and np.array_equal(sa.pix, sb.pix)
            and np.array_equal(sa.spl, sb.spl) and np.array_equal(sa.active, sb.active))


def check_render_gradients(scene: GaussianScene, cam: Camera, weights=None, h: float = 1e-4,
                           rtol: float = 1e-4, atol: float = 1e-7, seed: int = 0) -> GradCheckResult:
    """Compare ``render_backward`` against central differences of ``sum(weights * color)``."""
    scene = scene.copy()
    if weights is None:
        weights = np.random.default_rng(seed).normal(size=(cam.height, cam.width, 3))
    base = render(scene, cam)
    analytic = render_backward(scene, cam, weights, forward=base)
    result = GradCheckResult()

    def objective(out):
        return float(np.sum(weights * out.color))

    for name in scene.PARAMS:
        arr = getattr(scene, name)
        g = getattr(analytic, name)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            plus = render(scene, cam)
            arr[idx] = old - h
            minus = render(scene, cam)
            if not (_same_piece(plus, base) and _same_piece(minus, base)):
                result.frozen += 1
                arr[idx] = old + h
                plus = render(scene, cam, cull_from=base)
                arr[idx] = old - h
                minus = render(scene, cam, cull_from=base)
            arr[idx] = old
            numeric = (objective(plus) - objective(minus)) / (2.0 * h)
            result.checked += 1
            if not close(numeric, float(g[idx]), rtol, atol):
                result.mismatches.append(Mismatch(name, idx, numeric, float(g[idx])))
    return result


def amplitude_objective(eps_hat, eps) -> float:
    """``0.5 * sum((A(eps_hat) - A(eps))**2)``, the loss whose gradient chain mode returns."""
    gap = amplitude(dft2(eps_hat)) - amplitude(dft2(eps))
    return 0.5 * float(np.sum(gap**2))


def numeric_gradient(fn, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``fn`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = fn(x)
        x[idx] = old - h
        fm = fn(x)
        x[idx] = old
        out[idx] = (fp - fm) / (2.0 * h)
    return out


def random_scene(rng, count: int, sh_order: int = 0, extent: float = 0.4) -> GaussianScene:
    """Random well-conditioned scene for gradient checks."""
    k = (sh_order + 1) ** 2
    return GaussianScene(
        mu=rng.uniform(-extent, extent, (count, 3)),
        log_scale=np.log(rng.uniform(0.05, 0.15, (count, 3))),
        rotation=rng.normal(size=(count, 4)),
        sh=rng.normal(scale=0.3, size=(count, k, 3)),
        opacity_logit=rng.normal(size=count),
        sh_order=sh_order,
        background=rng.uniform(size=3),
    )
