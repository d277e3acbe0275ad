"""Shared domain types, validation helpers and error classes.

Rasters are plain numpy arrays: ``(height, width)`` for scalar grids and
``(height, width, 3)`` for colour / normal grids, always float64.  Masks are
boolean ``(height, width)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np


class CTStereoError(Exception):
    """Base class for all package errors."""


class InvalidImage(CTStereoError):
    pass


class DimensionError(CTStereoError):
    pass


class CoplanarError(CTStereoError):
    pass


class TooFewLights(CTStereoError):
    pass


class ConfigError(CTStereoError):
    pass


class EmptyDomain(CTStereoError):
    pass


class DegenerateCamera(CTStereoError):
    pass


class DegenerateNormal(CTStereoError):
    pass


class DegenerateView(CTStereoError):
    pass


class SingularLight(CTStereoError):
    pass


class EmptySystem(CTStereoError):
    pass


class BorderError(CTStereoError):
    pass


class NoBoundary(CTStereoError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics.

    ``psi_x``/``psi_y`` are focal lengths in pixels, ``delta_x``/``delta_y``
    the principal point in pixels and ``f`` the metric focal length that
    scales image-plane coordinates.
    """

    psi_x: float
    psi_y: float
    delta_x: float
    delta_y: float
    f: float = 1.0
    xi: float = 0.0

    def __post_init__(self):
        if not (self.psi_x > 0 and self.psi_y > 0):
            raise DegenerateCamera("focal lengths psi_x, psi_y must be positive")
        if not self.f > 0:
            raise DegenerateCamera("metric focal length f must be positive")
        if self.xi != 0:
            raise DegenerateCamera("non-zero skew is not supported")

    @classmethod
    def default(cls, width: int, height: int) -> "CameraIntrinsics":
        """Principal point at the central pixel, psi = max(width, height), f = 1."""
        psi = float(max(width, height))
        return cls(psi, psi, float(width // 2), float(height // 2), 1.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.psi_x, self.xi, self.delta_x], [0.0, self.psi_y, self.delta_y], [0.0, 0.0, 1.0]]
        )

    def pixel_spacing(self) -> tuple[float, float]:
        """Metric image-plane distance between neighbouring pixels (x, y)."""
        return self.f / self.psi_x, self.f / self.psi_y


class LightKind(str, Enum):
    DIRECTIONAL = "directional"
    POINT = "point"


@dataclass(frozen=True)
class LightSpec:
    """A single light source.

    Directional lights carry the unit vector pointing from the surface toward
    the source, in the viewer frame (``+z`` toward the camera).  Point lights
    carry a position in camera coordinates (origin at the pinhole, ``z`` is
    depth), the same frame as :func:`ctstereo.geometry.surface_point`.
    """

    kind: LightKind
    vector: tuple[float, float, float]
    intensity: float = 1.0

    def __post_init__(self):
        kind = LightKind(self.kind)
        object.__setattr__(self, "kind", kind)
        v = np.asarray(self.vector, dtype=float)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError("light vector must be a finite 3-vector")
        if not (np.isfinite(self.intensity) and self.intensity >= 0):
            raise ValueError("light intensity must be finite and non-negative")
        if kind is LightKind.DIRECTIONAL:
            n = np.linalg.norm(v)
            if n == 0:
                raise ValueError("directional light needs a non-zero direction")
            v = v / n
        object.__setattr__(self, "vector", tuple(float(c) for c in v))

    @classmethod
    def directional(cls, direction, intensity: float = 1.0) -> "LightSpec":
        return cls(LightKind.DIRECTIONAL, tuple(direction), intensity)

    @classmethod
    def point(cls, position, intensity: float = 1.0) -> "LightSpec":
        return cls(LightKind.POINT, tuple(position), intensity)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.vector)


@dataclass(frozen=True)
class LightSet:
    lights: tuple[LightSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "lights", tuple(self.lights))

    def __len__(self):
        return len(self.lights)

    def __iter__(self):
        return iter(self.lights)

    def __getitem__(self, i):
        return self.lights[i]

    @property
    def all_directional(self) -> bool:
        return all(l.kind is LightKind.DIRECTIONAL for l in self.lights)


@dataclass(frozen=True)
class MaterialParams:
    k_d: tuple[float, float, float] = (0.5, 0.5, 0.5)
    k_s: float = 0.0
    m: float = 0.3
    f_lambda: float = 0.04

    def __post_init__(self):
        kd = np.broadcast_to(np.asarray(self.k_d, dtype=float), (3,))
        object.__setattr__(self, "k_d", tuple(float(c) for c in kd))
        vals = [*kd, self.k_s, self.m, self.f_lambda]
        if not all(np.isfinite(vals)):
            raise ValueError("material parameters must be finite")
        if self.m <= 0:
            raise ValueError("roughness m must be positive")
        if np.any(kd < 0) or np.any(kd > 1):
            raise ValueError("k_d must lie in [0, 1]")
        if not 0 <= self.f_lambda <= 1:
            raise ValueError("f_lambda must lie in [0, 1]")

    @classmethod
    def with_complementary_specular(cls, k_d, m=0.3, f_lambda=0.04) -> "MaterialParams":
        """Synthetic-test convention ``k_s = 1 - mean(k_d)``."""
        kd = np.broadcast_to(np.asarray(k_d, dtype=float), (3,))
        return cls(tuple(kd), 1.0 - float(kd.mean()), m, f_lambda)

    @property
    def kd_array(self) -> np.ndarray:
        return np.array(self.k_d)


def check_same_shape(*grids: np.ndarray) -> tuple[int, int]:
    """Return the common ``(height, width)`` or raise DimensionError."""
    shapes = {np.shape(g)[:2] for g in grids}
    if len(shapes) != 1:
        raise DimensionError(f"grid sizes differ: {sorted(shapes)}")
    return shapes.pop()


def normalize_intensities(raw, bit_depth: int) -> np.ndarray:
    """Scale integer-coded intensities to ``[0, 1]`` as float64."""
    a = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise InvalidImage("image contains non-finite values")
    full = float(2**bit_depth - 1)
    if a.min(initial=0.0) < 0 or a.max(initial=0.0) > full:
        raise InvalidImage(f"values outside [0, {full:g}] for {bit_depth}-bit data")
    return a / full


def validate_light_set(
    lights: LightSet | Sequence[LightSpec], tol: float = 1e-8, reference_depth: float = 1.0
) -> None:
    """Raise unless the first three light directions span 3-space.

    Point lights are judged by their direction as seen from the on-axis
    surface point at ``reference_depth``.
    """
    lights = list(lights)
    if len(lights) < 3:
        raise TooFewLights(f"need at least 3 lights, got {len(lights)}")
    rows = []
    for l in lights[:3]:
        if l.kind is LightKind.POINT:
            d = np.array([0.0, 0.0, reference_depth]) - l.array
            rows.append(d / np.linalg.norm(d))
        else:
            rows.append(l.array)
    if abs(np.linalg.det(np.array(rows))) <= tol:
        raise CoplanarError("first three light vectors are coplanar")


def shadow_mask(images: Sequence[np.ndarray], tau_shadow: float = 0.02) -> np.ndarray:
    """Pixels whose darkest observation falls below ``tau_shadow``."""
    if len(images) == 0:
        raise DimensionError("no images")
    check_same_shape(*images)
    stack = np.stack([_luminance(im) for im in images])
    return stack.min(axis=0) < tau_shadow


def _luminance(im: np.ndarray) -> np.ndarray:
    im = np.asarray(im, dtype=float)
    return im.mean(axis=-1) if im.ndim == 3 else im


luminance = _luminance


def normals_are_unit(normals: np.ndarray, mask: np.ndarray | None = None, tol: float = 1e-6) -> bool:
    n = np.linalg.norm(normals, axis=-1)
    if mask is not None:
        n = n[mask]
    return bool(np.all(np.abs(n - 1) <= tol))
