"""Perspective surface geometry, intrinsics and light/view vectors.

Two frames appear here.  The *camera frame* has the pinhole at the origin and
``z`` equal to depth; :func:`surface_point`, :func:`viewing_vector` and
:func:`light_vector` work in it.  Shading is done in the *viewer frame*, the
point reflection of the camera frame, in which the normal built from the
depth gradient (:func:`normal_from_gradient`) faces the viewer for every
positive depth.  Dot products are identical in both frames, so the change is
a sign flip of the view and point-light vectors (see :func:`shading_view`
and :func:`shading_light`).
"""

from __future__ import annotations

import numpy as np

from .core import (
    CameraIntrinsics,
    DegenerateCamera,
    DegenerateNormal,
    DegenerateView,
    LightKind,
    LightSpec,
    SingularLight,
)


def surface_point(x, y, z, f):
    """Camera-frame point ``(-x z/f, -y z/f, z)`` seen at image coords ``(x, y)``."""
    f = np.asarray(f, dtype=float)
    if np.any(f == 0):
        raise DegenerateCamera("focal length must be non-zero")
    x, y, z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, z)))
    return np.stack([-x * z / f, -y * z / f, z], axis=-1)


def normal_from_gradient(x, y, z, z_x, z_y, f):
    """Unnormalised normal of the perspective surface from its depth gradient.

    This is the cross product of the surface tangents, i.e.
    ``((z/f) z_x, (z/f) z_y, (z/f^2)(x z_x + y z_y + z))``.
    """
    x, y, z, z_x, z_y = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (x, y, z, z_x, z_y))
    )
    if np.any(np.asarray(f) <= 0):
        raise DegenerateCamera("focal length must be positive")
    s = z / f
    n = np.stack([s * z_x, s * z_y, s / f * (z_x * x + z_y * y + z)], axis=-1)
    if np.any(z == 0):
        raise DegenerateNormal("zero depth gives a zero-length normal")
    return n


def unit_normal_from_gradient(x, y, z, z_x, z_y, f):
    n = normal_from_gradient(x, y, z, z_x, z_y, f)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateNormal("zero-length normal")
    n = n / norm
    # viewer-frame normals must face the camera: N . S > 0
    S = surface_point(x, y, z, f)
    flip = np.sum(n * S, axis=-1, keepdims=True) < 0
    return np.where(flip, -n, n)


def gradient_from_normal(normal, x, y, z, f):
    """Depth gradient whose perspective normal is parallel to ``normal``.

    Inverts :func:`normal_from_gradient` at the given depth ``z``.
    """
    normal = np.asarray(normal, dtype=float)
    nx, ny, nz = normal[..., 0], normal[..., 1], normal[..., 2]
    if np.any(nz == 0):
        raise DegenerateNormal("grazing normal has no finite gradient")
    p, q = nx / nz, ny / nz
    denom = f - x * p - y * q
    if np.any(denom == 0):
        raise DegenerateNormal("normal is parallel to the viewing ray")
    return np.stack([z * p / denom, z * q / denom], axis=-1)


def pixel_to_image_coords(px, py, K: CameraIntrinsics):
    """Metric image-plane coordinates ``(mu, nu, f)`` of pixel ``(px, py)``."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    mu = K.f * (px - K.delta_x) / K.psi_x
    nu = K.f * (py - K.delta_y) / K.psi_y
    return mu, nu, K.f


def image_to_pixel_coords(mu, nu, K: CameraIntrinsics):
    """Forward map ``Gamma (1/f) (mu, nu, f)`` to homogeneous pixel coords."""
    chi = np.stack(np.broadcast_arrays(np.asarray(mu, float), np.asarray(nu, float),
                                       np.full(np.shape(mu), K.f)), axis=-1)
    return chi @ K.matrix.T / K.f


def image_grid(K: CameraIntrinsics, shape) -> tuple[np.ndarray, np.ndarray]:
    """Metric coordinates of every pixel of a ``(height, width)`` raster."""
    h, w = shape[:2]
    py, px = np.mgrid[0:h, 0:w].astype(float)
    mu, nu, _ = pixel_to_image_coords(px, py, K)
    return mu, nu


def viewing_vector(x, y, z, f):
    """Unit camera-frame vector from the surface point toward the pinhole."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DegenerateView("surface points must lie in front of the camera (z > 0)")
    S = surface_point(x, y, z, f)
    n = np.linalg.norm(S, axis=-1, keepdims=True)
    return -S / n


def shading_view(x, y, f):
    """Viewer-frame unit view vector.  Independent of depth: ``(-x, -y, f)/|.|``."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    v = np.stack([-x, -y, np.full(x.shape, float(f))], axis=-1)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def light_vector(light: LightSpec, S):
    """Unit light direction and attenuation ``Pi`` at camera-frame point ``S``.

    Directional: the stored direction and ``Pi = l_d``.  Point:
    ``(U - S)/|U - S|`` and ``Pi = l_d/|U - S|^2``.
    """
    S = np.asarray(S, dtype=float)
    if light.kind is LightKind.DIRECTIONAL:
        L = np.broadcast_to(light.array, S.shape).copy()
        Pi = np.full(S.shape[:-1], float(light.intensity))
        return L, Pi
    d = light.array - S
    dist2 = np.sum(d * d, axis=-1)
    if np.any(dist2 == 0):
        raise SingularLight("point light coincides with a surface point")
    dist = np.sqrt(dist2)
    return d / dist[..., None], light.intensity / dist2


def shading_light(light: LightSpec, S):
    """Viewer-frame light vector and attenuation at camera-frame point ``S``."""
    L, Pi = light_vector(light, S)
    if light.kind is LightKind.POINT:
        L = -L
    return L, Pi


def depth_gradient(depth, K: CameraIntrinsics, mask=None):
    """Central-difference depth gradient in metric image units.

    Falls back to one-sided differences at the image border and wherever a
    neighbour lies outside ``mask``.  Returns ``(H, W, 2)`` holding
    ``(z_x, z_y)``; isolated pixels get zero.
    """
    z = np.asarray(depth, dtype=float)
    if mask is None:
        mask = np.ones(z.shape, dtype=bool)
    hx, hy = K.pixel_spacing()
    gx = _axis_diff(z, mask, axis=1) / hx
    gy = _axis_diff(z, mask, axis=0) / hy
    return np.stack([gx, gy], axis=-1)


def _axis_diff(z, mask, axis):
    zf = np.moveaxis(z, axis, 0)
    mf = np.moveaxis(mask, axis, 0)
    n = zf.shape[0]
    fwd = np.zeros(zf.shape, dtype=bool)
    bwd = np.zeros(zf.shape, dtype=bool)
    fwd[:-1] = mf[:-1] & mf[1:]
    bwd[1:] = mf[1:] & mf[:-1]
    zp = np.zeros_like(zf)
    zm = np.zeros_like(zf)
    if n > 1:
        zp[:-1] = zf[1:]
        zm[1:] = zf[:-1]
    both = fwd & bwd
    out = np.where(both, (zp - zm) / 2.0, 0.0)
    out = np.where(fwd & ~bwd, zp - zf, out)
    out = np.where(bwd & ~fwd, zf - zm, out)
    out = np.where(mf, out, 0.0)
    return np.moveaxis(out, 0, axis)


def normals_from_depth(depth, K: CameraIntrinsics, mask=None, gradient=None):
    """Unit viewer-frame normals of a depth map (``(H, W, 3)``)."""
    z = np.asarray(depth, dtype=float)
    if gradient is None:
        gradient = depth_gradient(z, K, mask)
    mu, nu = image_grid(K, z.shape)
    zz = np.where(z > 0, z, 1.0)
    return unit_normal_from_gradient(mu, nu, zz, gradient[..., 0], gradient[..., 1], K.f)
