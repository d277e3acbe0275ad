"""Forward synthesis of photometric stereo inputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import geometry as geo
from .core import (
    CameraIntrinsics,
    ConfigError,
    DimensionError,
    LightSet,
    MaterialParams,
)
from .reflectance import cook_torrance


@dataclass(frozen=True)
class Scene:
    depth: np.ndarray
    camera: CameraIntrinsics
    material: MaterialParams
    lights: LightSet
    mask: np.ndarray | None = None
    # exact depth gradient; central differences of ``depth`` when omitted
    gradient: np.ndarray | None = None

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=float)
        object.__setattr__(self, "depth", depth)
        mask = np.ones(depth.shape, bool) if self.mask is None else np.asarray(self.mask, bool)
        if mask.shape != depth.shape:
            raise DimensionError("mask and depth sizes differ")
        object.__setattr__(self, "mask", mask)
        if self.gradient is not None and np.shape(self.gradient) != depth.shape + (2,):
            raise DimensionError("gradient must have shape (H, W, 2)")
        if np.any(depth[mask] <= 0):
            raise ValueError("depth must be positive on the mask")

    @property
    def shape(self):
        return self.depth.shape


def shading_geometry(depth, camera: CameraIntrinsics, mask=None, gradient=None):
    """Viewer-frame normals, view vectors and camera-frame surface points."""
    depth = np.asarray(depth, dtype=float)
    if mask is None:
        mask = np.ones(depth.shape, bool)
    if gradient is None:
        gradient = geo.depth_gradient(depth, camera, mask)
    mu, nu = geo.image_grid(camera, depth.shape)
    z = np.where(mask & (depth > 0), depth, 1.0)
    N = geo.unit_normal_from_gradient(mu, nu, z, gradient[..., 0], gradient[..., 1], camera.f)
    V = geo.shading_view(mu, nu, camera.f)
    S = geo.surface_point(mu, nu, z, camera.f)
    return N, V, S


def render_image(scene: Scene, light_index: int) -> np.ndarray:
    """RGB image ``(H, W, 3)`` under one light, clipped to ``[0, 1]``."""
    N, V, S = shading_geometry(scene.depth, scene.camera, scene.mask, scene.gradient)
    return _shade(scene, N, V, S, light_index)


def _shade(scene, N, V, S, light_index):
    mat = scene.material
    L, Pi = geo.shading_light(scene.lights[light_index], S)
    kd = mat.kd_array
    I = cook_torrance(
        N[..., None, :], V[..., None, :], L[..., None, :], Pi[..., None],
        kd, mat.k_s, mat.m, mat.f_lambda,
    )
    I = np.clip(I, 0.0, 1.0)
    return np.where(scene.mask[..., None], I, 0.0)


def render_dataset(scene: Scene) -> list[np.ndarray]:
    if len(scene.lights) < 3:
        raise ValueError("need at least three lights")
    N, V, S = shading_geometry(scene.depth, scene.camera, scene.mask, scene.gradient)
    return [_shade(scene, N, V, S, i) for i in range(len(scene.lights))]


class AnalyticSurface(NamedTuple):
    depth: np.ndarray
    normals: np.ndarray
    gradient: np.ndarray
    mask: np.ndarray


SURFACE_DEFAULTS = {
    "plane": {"z0": 2.0},
    "ramp": {"z0": 2.0, "slope_x": 0.5, "slope_y": -0.25},
    "sphere": {"z0": 2.0, "radius": 0.45},
    "gauss_bump": {"z0": 2.0, "amplitude": 0.3, "sigma": 0.15},
}


def analytic_surfaces(name: str, size: int, params: dict | None = None,
                      camera: CameraIntrinsics | None = None) -> AnalyticSurface:
    """Closed-form test surfaces over the metric image plane.

    Depth is a function of the image coordinates ``(mu, nu)``; the returned
    normals come from the exact gradient, not from finite differences.

    * ``plane``: constant depth ``z0``.
    * ``ramp``: ``z0 + slope_x mu + slope_y nu``.
    * ``sphere``: spherical cap ``z0 + R - sqrt(R^2 - r^2)`` of radius ``R``
      facing the camera; the mask keeps ``r < 0.98 R``.
    * ``gauss_bump``: ``z0 - A exp(-r^2 / (2 sigma^2))``.
    """
    if name not in SURFACE_DEFAULTS:
        raise ConfigError(f"unknown surface {name!r}; choose from {sorted(SURFACE_DEFAULTS)}")
    if size < 16:
        raise ValueError("surface size must be at least 16")
    p = dict(SURFACE_DEFAULTS[name])
    unknown = set(params or {}) - set(p)
    if unknown:
        raise ConfigError(f"unknown parameters for {name}: {sorted(unknown)}")
    p.update(params or {})
    K = camera or CameraIntrinsics.default(size, size)
    mu, nu = geo.image_grid(K, (size, size))
    mask = np.ones((size, size), bool)
    z0 = p["z0"]

    if name == "plane":
        z = np.full(mu.shape, z0)
        gx = gy = np.zeros(mu.shape)
    elif name == "ramp":
        z = z0 + p["slope_x"] * mu + p["slope_y"] * nu
        gx = np.full(mu.shape, p["slope_x"])
        gy = np.full(mu.shape, p["slope_y"])
    elif name == "sphere":
        R = p["radius"]
        r2 = mu**2 + nu**2
        mask = r2 < (0.98 * R) ** 2
        root = np.sqrt(np.maximum(R * R - r2, (0.02 * R) ** 2))
        z = np.where(mask, z0 + R - root, z0 + R)
        gx = np.where(mask, mu / root, 0.0)
        gy = np.where(mask, nu / root, 0.0)
    else:
        A, s = p["amplitude"], p["sigma"]
        e = np.exp(-(mu**2 + nu**2) / (2 * s * s))
        z = z0 - A * e
        gx = A * e * mu / (s * s)
        gy = A * e * nu / (s * s)

    grad = np.stack([gx, gy], axis=-1)
    N = geo.unit_normal_from_gradient(mu, nu, z, gx, gy, K.f)
    return AnalyticSurface(z, N, grad, mask)
