"""Gaussian splat scenes stored in pre-activation form.

Scales are kept as logs, opacity as a logit and rotation as an unnormalized
quaternion ``(w, x, y, z)`` so unconstrained updates keep every activated
value valid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

MIN_SCALE = 1e-8
SH_C0 = 0.28209479177387814


class SceneError(ValueError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def sh_coeff_count(order: int) -> int:
    if order not in (0, 1, 2, 3):
        raise SceneError(f"SH order must be in 0..3, got {order}")
    return (order + 1) ** 2


def rgb_to_sh_dc(rgb):
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def normalize_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise SceneError("cannot normalize a zero quaternion")
    return q / n


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrices for (batches of) quaternions ``(w, x, y, z)``."""
    w, x, y, z = np.moveaxis(normalize_quaternion(q), -1, 0)
    R = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return R.reshape(R.shape[:-1] + (3, 3))


@dataclass
class GaussianSplat:
    mu: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    sh: np.ndarray
    opacity_logit: float

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))


def covariance(splat: GaussianSplat) -> np.ndarray:
    R = quat_to_rotmat(splat.rotation)
    M = R * np.exp(np.asarray(splat.log_scale, dtype=np.float64))[None, :]
    return M @ M.T


def query_density(splat: GaussianSplat, x) -> float:
    """Unnormalized Gaussian falloff ``exp(-0.5 d^T Sigma^-1 d)`` at point ``x``."""
    if np.any(np.exp(splat.log_scale) <= MIN_SCALE):
        raise SceneError("covariance is near-singular (activated scale <= 1e-8)")
    d = np.asarray(x, dtype=np.float64) - np.asarray(splat.mu, dtype=np.float64)
    sol = np.linalg.solve(covariance(splat), d)
    return float(np.exp(-0.5 * d @ sol))


@dataclass
class GaussianScene:
    """Struct-of-arrays splat collection.

    ``sh`` has shape ``(N, (k+1)^2, 3)``.
    """

    mu: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    sh: np.ndarray
    opacity_logit: np.ndarray
    sh_order: int = 0
    background: np.ndarray = field(default_factory=lambda: np.ones(3))

    PARAMS = ("mu", "log_scale", "rotation", "sh", "opacity_logit")

    def __post_init__(self):
        # own writable copies: inputs may be broadcast views or caller-held arrays
        self.mu = np.array(self.mu, dtype=np.float64).reshape(-1, 3)
        n = len(self.mu)
        self.log_scale = np.array(self.log_scale, dtype=np.float64).reshape(n, 3)
        self.rotation = np.array(self.rotation, dtype=np.float64).reshape(n, 4)
        k = sh_coeff_count(self.sh_order)
        self.sh = np.array(self.sh, dtype=np.float64).reshape(n, k, 3)
        self.opacity_logit = np.array(self.opacity_logit, dtype=np.float64).reshape(n)
        self.background = np.array(self.background, dtype=np.float64).reshape(3)

    def __len__(self) -> int:
        return len(self.mu)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> np.ndarray:
        return sigmoid(self.opacity_logit)

    @property
    def quaternion(self) -> np.ndarray:
        return normalize_quaternion(self.rotation)

    def covariances(self) -> np.ndarray:
        M = quat_to_rotmat(self.rotation) * self.scale[:, None, :]
        return M @ np.swapaxes(M, 1, 2)

    def splat(self, i: int) -> GaussianSplat:
        return GaussianSplat(
            self.mu[i].copy(), self.log_scale[i].copy(), self.rotation[i].copy(),
            self.sh[i].copy(), float(self.opacity_logit[i]),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAMS}

    def copy(self) -> GaussianScene:
        return GaussianScene(
            **{name: arr.copy() for name, arr in self.params().items()},
            sh_order=self.sh_order,
            background=self.background.copy(),
        )

    def subset(self, keep) -> GaussianScene:
        return GaussianScene(
            **{name: arr[keep].copy() for name, arr in self.params().items()},
            sh_order=self.sh_order,
            background=self.background.copy(),
        )

    def check(self) -> None:
        """Assert the activated-parameter invariants."""
        if not np.all(self.scale > 0):
            raise SceneError("non-positive activated scale")
        op = self.opacity
        if not np.all((op > 0) & (op < 1)):
            raise SceneError("activated opacity outside (0, 1)")
        if not np.allclose(np.linalg.norm(self.quaternion, axis=1), 1.0, atol=1e-9):
            raise SceneError("quaternion failed to normalize")

    @classmethod
    def from_activated(cls, mu, scale, rotation, rgb, opacity, sh_order=0, background=(1, 1, 1)):
        mu = np.asarray(mu, dtype=np.float64).reshape(-1, 3)
        n = len(mu)
        sh = np.zeros((n, sh_coeff_count(sh_order), 3))
        sh[:, 0, :] = rgb_to_sh_dc(np.broadcast_to(rgb, (n, 3)))
        return cls(
            mu=mu,
            log_scale=np.log(np.broadcast_to(scale, (n, 3))),
            rotation=np.broadcast_to(rotation, (n, 4)),
            sh=sh,
            opacity_logit=logit(np.broadcast_to(opacity, (n,))),
            sh_order=sh_order,
            background=background,
        )


def sphere_init(count: int, radius: float, seed: int, sh_order: int = 0,
                opacity: float = 0.1, background=(1.0, 1.0, 1.0)) -> GaussianScene:
    """Splats placed uniformly in a ball, gray, isotropic and mostly transparent."""
    if count < 1:
        raise SceneError(f"count must be >= 1, got {count}")
    if radius <= 0:
        raise SceneError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=(count, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * np.cbrt(rng.uniform(size=count))
    mu = direction * r[:, None]
    return GaussianScene.from_activated(
        mu=mu,
        scale=radius * count ** (-1.0 / 3.0),
        rotation=(1.0, 0.0, 0.0, 0.0),
        rgb=(0.5, 0.5, 0.5),
        opacity=opacity,
        sh_order=sh_order,
        background=background,
    )


@dataclass
class SceneGradients:
    """Gradients with the same layout as a :class:`GaussianScene`'s parameters."""

    mu: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    sh: np.ndarray
    opacity_logit: np.ndarray

    @classmethod
    def zeros_like(cls, scene: GaussianScene) -> SceneGradients:
        return cls(**{name: np.zeros_like(arr) for name, arr in scene.params().items()})

    def items(self):
        return ((f.name, getattr(self, f.name)) for f in fields(self))

    def __add__(self, other: SceneGradients) -> SceneGradients:
        return SceneGradients(**{name: arr + getattr(other, name) for name, arr in self.items()})

    def scaled(self, k: float) -> SceneGradients:
        return SceneGradients(**{name: k * arr for name, arr in self.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(arr)) for _, arr in self.items())
