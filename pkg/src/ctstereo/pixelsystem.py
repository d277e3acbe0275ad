"""Per-pixel residual systems for the Cook-Torrance photometric equations.

Unknowns are the depth gradient ``(z_x, z_y)`` at a fixed depth estimate;
the normal follows from the perspective cross product.  One residual per
input image: observed minus modelled irradiance.
"""

from __future__ import annotations

from functools import partial

import numpy as np

from . import geometry as geo
from .core import CameraIntrinsics, EmptySystem, LightSet, MaterialParams, luminance
from .reflectance import cook_torrance, cook_torrance_dn
from .solver import ResidualSystem


def _normal(X, mu, nu, z, f):
    s = z / f
    n = np.stack([s * X[:, 0], s * X[:, 1], s / f * (X[:, 0] * mu + X[:, 1] * nu + z)], axis=-1)
    return n, np.linalg.norm(n, axis=-1)


def _residual(X, I, mu, nu, z, V, L, Pi, kd, *, f, k_s, m, f_lambda):
    n, nn = _normal(X, mu, nu, z, f)
    N = n / nn[:, None]
    model = cook_torrance(N[:, None, :], V[:, None, :], L, Pi, kd[:, None], k_s, m, f_lambda)
    return I - model


def _jacobian(X, I, mu, nu, z, V, L, Pi, kd, *, f, k_s, m, f_lambda):
    n, nn = _normal(X, mu, nu, z, f)
    N = n / nn[:, None]
    dI_dN = cook_torrance_dn(N[:, None, :], V[:, None, :], L, Pi, kd[:, None], k_s, m, f_lambda)
    P = X.shape[0]
    dN_dn = (np.eye(3)[None] - N[:, :, None] * N[:, None, :]) / nn[:, None, None]
    s = z / f
    dn_dX = np.zeros((P, 3, 2))
    dn_dX[:, 0, 0] = s
    dn_dX[:, 1, 1] = s
    dn_dX[:, 2, 0] = s * mu / f
    dn_dX[:, 2, 1] = s * nu / f
    return -np.einsum("pki,pij,pjl->pkl", dI_dN, dN_dn, dn_dX)


def pixel_system(I, mu, nu, z, V, L, Pi, kd, *, f, k_s, m, f_lambda) -> ResidualSystem:
    """Batched system from per-pixel arrays.

    ``I`` and ``Pi`` are ``(P, k)``, ``L`` is ``(P, k, 3)`` (viewer frame),
    ``V`` is ``(P, 3)`` and ``mu, nu, z, kd`` are ``(P,)``.
    """
    I = np.asarray(I, dtype=float)
    P, k = I.shape
    data = {
        "I": I,
        "mu": np.broadcast_to(np.asarray(mu, float), (P,)),
        "nu": np.broadcast_to(np.asarray(nu, float), (P,)),
        "z": np.broadcast_to(np.asarray(z, float), (P,)),
        "V": np.asarray(V, float),
        "L": np.asarray(L, float),
        "Pi": np.asarray(Pi, float),
        "kd": np.broadcast_to(np.asarray(kd, float), (P,)),
    }
    consts = dict(f=float(f), k_s=float(k_s), m=float(m), f_lambda=float(f_lambda))
    return ResidualSystem(
        partial(_residual, **consts), dim_x=2, dim_f=k,
        jacobian=partial(_jacobian, **consts), data=data,
    )


def pixel_lighting(lights: LightSet, S):
    """Viewer-frame light vectors ``(P, k, 3)`` and attenuations ``(P, k)``."""
    Ls, Pis = zip(*(geo.shading_light(l, S) for l in lights))
    return np.stack(Ls, axis=-2), np.stack(Pis, axis=-1)


def build_pixel_system(pixels, images, lights: LightSet, camera: CameraIntrinsics,
                       material: MaterialParams, z_est, albedo=None,
                       tau_shadow: float = 0.0) -> ResidualSystem:
    """Residual system for one pixel ``(row, col)`` or index arrays ``(rows, cols)``.

    ``images`` are the input rasters (RGB images are reduced to their channel
    mean, which the model reproduces exactly with the mean albedo).
    ``z_est`` is a scalar or a depth grid.  ``albedo`` overrides the
    material's mean ``k_d``.  Raises :class:`EmptySystem` if every
    observation of a pixel is at or below ``tau_shadow``.
    """
    rows, cols = (np.atleast_1d(np.asarray(a, dtype=int)) for a in pixels)
    lum = np.stack([luminance(im) for im in images], axis=-1)
    I = lum[rows, cols]
    if np.any(np.all(I <= tau_shadow, axis=1)):
        raise EmptySystem("all observations of a pixel are shadowed")
    z = np.broadcast_to(np.asarray(z_est, dtype=float), lum.shape[:2])[rows, cols]
    mu, nu, f = geo.pixel_to_image_coords(cols, rows, camera)
    S = geo.surface_point(mu, nu, z, f)
    V = geo.shading_view(mu, nu, f)
    L, Pi = pixel_lighting(lights, S)
    if albedo is None:
        kd = np.full(rows.shape, float(np.mean(material.k_d)))
    else:
        a = np.asarray(albedo, dtype=float)
        if a.ndim == 3:
            a = a.mean(axis=-1)
        kd = np.broadcast_to(a, lum.shape[:2])[rows, cols] if a.ndim else np.full(rows.shape, float(a))
    return pixel_system(I, mu, nu, z, V, L, Pi, kd, f=f, k_s=material.k_s,
                        m=material.m, f_lambda=material.f_lambda)
