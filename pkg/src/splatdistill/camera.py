"""Spherical-pose pinhole cameras.

World frame is right-handed and y-up. Polar angle is measured from +y,
azimuth in the xz-plane starting at +z, so the front view (azimuth 0,
polar 90) sits on the +z axis looking at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_RADIUS = 1.5
DEFAULT_FOV_Y = 49.1


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class Camera:
    azimuth: float
    polar: float
    radius: float = DEFAULT_RADIUS
    fov_y: float = DEFAULT_FOV_Y
    width: int = 64
    height: int = 64
    target: tuple = (0.0, 0.0, 0.0)
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        if not 0.0 < self.fov_y < 180.0:
            raise CameraError(f"fov_y must be in (0, 180), got {self.fov_y}")
        if self.radius <= 0:
            raise CameraError(f"radius must be positive, got {self.radius}")
        if not 0.0 < self.polar < 180.0:
            raise CameraError(f"polar {self.polar} deg makes the +y up vector degenerate")
        if self.width < 1 or self.height < 1:
            raise CameraError("image size must be positive")

    @property
    def position(self) -> np.ndarray:
        az, po = math.radians(self.azimuth), math.radians(self.polar)
        offset = self.radius * np.array(
            [math.sin(po) * math.sin(az), math.cos(po), math.sin(po) * math.cos(az)]
        )
        return np.asarray(self.target, dtype=np.float64) + offset

    @property
    def focal(self) -> float:
        """Focal length in pixels (square pixels, vertical FOV)."""
        return 0.5 * self.height / math.tan(math.radians(self.fov_y) / 2)

    @property
    def principal_point(self) -> tuple[float, float]:
        return 0.5 * self.width, 0.5 * self.height

    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; rows are camera right, up and backward axes."""
        eye = self.position
        fwd = np.asarray(self.target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, [0.0, 1.0, 0.0])
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise CameraError("view direction parallel to up vector")
        right /= norm
        up = np.cross(right, fwd)
        return np.stack([right, up, -fwd])

    def to_dict(self) -> dict:
        return {
            "azimuth_deg": self.azimuth, "polar_deg": self.polar, "radius": self.radius,
            "fov_y_deg": self.fov_y, "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Camera:
        return cls(
            azimuth=float(d["azimuth_deg"]), polar=float(d["polar_deg"]),
            radius=float(d.get("radius", DEFAULT_RADIUS)),
            fov_y=float(d.get("fov_y_deg", DEFAULT_FOV_Y)),
            width=int(d.get("width", 64)), height=int(d.get("height", 64)),
        )


def from_spherical(azimuth, polar, radius=DEFAULT_RADIUS, fov_y=DEFAULT_FOV_Y,
                   width=64, height=64) -> Camera:
    return Camera(float(azimuth), float(polar), float(radius), float(fov_y), int(width), int(height))


def view_matrix(cam: Camera) -> np.ndarray:
    R = cam.rotation()
    V = np.eye(4)
    V[:3, :3] = R
    V[:3, 3] = -R @ cam.position
    return V


def projection_matrix(cam: Camera) -> np.ndarray:
    """OpenGL-style perspective matrix mapping the view frustum to the clip cube."""
    f = 1.0 / math.tan(math.radians(cam.fov_y) / 2)
    aspect = cam.width / cam.height
    n, fa = cam.near, cam.far
    P = np.zeros((4, 4))
    P[0, 0] = f / aspect
    P[1, 1] = f
    P[2, 2] = (fa + n) / (n - fa)
    P[2, 3] = 2 * fa * n / (n - fa)
    P[3, 2] = -1.0
    return P


def project_points(cam: Camera, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points to continuous pixel coordinates.

    Returns ``(pixels, depth, valid)``; a point is valid when it lies in front
    of the near plane. Pixel ``(i, j)`` covers ``[i, i+1) x [j, j+1)`` with
    rows growing downward.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    homo = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
    cam_space = homo @ view_matrix(cam).T
    depth = -cam_space[:, 2]
    valid = depth > cam.near
    clip = cam_space @ projection_matrix(cam).T
    with np.errstate(divide="ignore", invalid="ignore"):
        ndc = clip[:, :2] / clip[:, 3:4]
    px = np.stack([(ndc[:, 0] + 1) * 0.5 * cam.width, (1 - ndc[:, 1]) * 0.5 * cam.height], axis=1)
    px[~valid] = np.nan
    return px, depth, valid


def opencv_extrinsics(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera transform with +z forward and +y down (image convention)."""
    V = view_matrix(cam)
    flip = np.array([1.0, -1.0, -1.0])
    return V[:3, :3] * flip[:, None], V[:3, 3] * flip


@dataclass(frozen=True)
class PoseEmbedding:
    delta_polar: float
    sin_delta_azimuth: float
    cos_delta_azimuth: float
    delta_radius: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.delta_polar, self.sin_delta_azimuth, self.cos_delta_azimuth, self.delta_radius]
        )


def relative_embedding(reference: Camera, novel: Camera) -> PoseEmbedding:
    daz = math.radians(novel.azimuth - reference.azimuth)
    return PoseEmbedding(
        math.radians(novel.polar - reference.polar),
        math.sin(daz),
        math.cos(daz),
        novel.radius - reference.radius,
    )


def reference_camera(width=64, height=64) -> Camera:
    """The input view: front-facing, 1.5 scene units out, 49.1 deg FOV."""
    return Camera(0.0, 90.0, DEFAULT_RADIUS, DEFAULT_FOV_Y, width, height)


def orbit(count: int, polar: float = 90.0, offset: float = 0.0, radius=DEFAULT_RADIUS,
          fov_y=DEFAULT_FOV_Y, width=64, height=64) -> list[Camera]:
    """Evenly spaced cameras around the vertical axis."""
    step = 360.0 / count
    return [Camera(offset + i * step, polar, radius, fov_y, width, height) for i in range(count)]


def sample_orbit(count: int, polar_jitter_deg: float = 0.0, seed: int = 0, radius=DEFAULT_RADIUS,
                 fov_y=DEFAULT_FOV_Y, width=64, height=64) -> list[Camera]:
    """Stratified azimuths (one per equal arc, shared random offset), jittered polar."""
    if count < 1:
        raise CameraError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    step = 360.0 / count
    offset = rng.uniform(0.0, step)
    jitter = rng.uniform(-polar_jitter_deg, polar_jitter_deg, size=count) if polar_jitter_deg > 0 else np.zeros(count)
    return [
        Camera(offset + i * step, 90.0 + float(jitter[i]), radius, fov_y, width, height)
        for i in range(count)
    ]
