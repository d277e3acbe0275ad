"""Depth from a gradient field by least-squares (Poisson) integration.

The discrete energy sums, over every pair of 4-neighbours inside the
domain, the squared mismatch between the depth difference and the averaged
target gradient.  Its normal equations are a graph Laplacian with natural
(Neumann) boundaries; on the full rectangle that Laplacian is diagonal in
the DCT-II basis, which gives the direct initial solution.  Masked domains
are finished with restarted GMRES.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
import scipy.fft
import scipy.sparse as sp
from scipy.sparse.linalg import gmres

from . import geometry as geo
from .core import CameraIntrinsics, DimensionError, EmptyDomain

log = logging.getLogger(__name__)

GRAZING_NZ = 1e-6


def _edges(mask, axis):
    m = np.moveaxis(mask, axis, 0)
    e = np.zeros(m.shape, bool)
    e[:-1] = m[:-1] & m[1:]
    return np.moveaxis(e, 0, axis)


def divergence_rhs(gradients, mask=None, spacing=(1.0, 1.0)) -> np.ndarray:
    """Discrete divergence of ``(z_x, z_y)`` including boundary flux.

    Inside the domain this is the central difference
    ``(g[i+1] - g[i-1]) / 2h`` per axis; where a neighbour is missing the
    one-sided half-difference remains, carrying the Neumann flux.
    """
    g = np.asarray(gradients, dtype=float)
    if g.ndim != 3 or g.shape[-1] != 2:
        raise DimensionError("gradients must have shape (H, W, 2)")
    mask = np.ones(g.shape[:2], bool) if mask is None else np.asarray(mask, bool)
    rhs = np.zeros(g.shape[:2])
    for axis, comp, h in ((1, 0, spacing[0]), (0, 1, spacing[1])):
        gc = np.where(mask, g[..., comp], 0.0)
        e = _edges(mask, axis)
        gcm = np.moveaxis(gc, axis, 0)
        em = np.moveaxis(e, axis, 0)
        ge = np.zeros(gcm.shape)
        ge[:-1] = np.where(em[:-1], 0.5 * (gcm[:-1] + gcm[1:]), 0.0)
        r = ge.copy()
        r[1:] -= ge[:-1]
        rhs += np.moveaxis(r, 0, axis) / h
    return np.where(mask, rhs, 0.0)


def laplacian_matrix(mask, spacing=(1.0, 1.0)) -> sp.csr_matrix:
    """Graph Laplacian over the masked pixels (negative semi-definite)."""
    mask = np.asarray(mask, bool)
    idx = -np.ones(mask.shape, int)
    idx[mask] = np.arange(mask.sum())
    rows, cols, vals = [], [], []
    for axis, h in ((1, spacing[0]), (0, spacing[1])):
        e = _edges(mask, axis)
        a = idx[e]
        b = np.moveaxis(np.moveaxis(idx, axis, 0)[1:], 0, axis)
        b = b[np.moveaxis(np.moveaxis(e, axis, 0)[:-1], 0, axis)]
        w = 1.0 / (h * h)
        rows += [a, b, a, b]
        cols += [b, a, a, b]
        vals += [np.full(a.size, w), np.full(a.size, w), np.full(a.size, -w), np.full(a.size, -w)]
    n = int(mask.sum())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def simchony_initial(rhs, spacing=(1.0, 1.0)) -> np.ndarray:
    """Exact zero-mean solution of the full-rectangle Neumann Poisson problem."""
    rhs = np.asarray(rhs, dtype=float)
    H, W = rhs.shape
    hx, hy = spacing
    kx = (2.0 * np.cos(np.pi * np.arange(W) / W) - 2.0) / (hx * hx)
    ky = (2.0 * np.cos(np.pi * np.arange(H) / H) - 2.0) / (hy * hy)
    eig = ky[:, None] + kx[None, :]
    coef = scipy.fft.dctn(rhs, type=2, norm="ortho")
    eig[0, 0] = 1.0
    coef = coef / eig
    coef[0, 0] = 0.0
    return scipy.fft.idctn(coef, type=2, norm="ortho")


class Refinement(NamedTuple):
    depth: np.ndarray
    iterations: int
    residuals: list
    stagnated: bool


def gmres_refine(rhs, z0, mask=None, spacing=(1.0, 1.0), tol: float = 1e-10,
                 max_iter: int = 2000, restart: int = 50) -> Refinement:
    """Solve the masked Poisson system with restarted GMRES from ``z0``.

    Convergence is judged on ``|Lap z - rhs| <= tol * max(|rhs|, |r0|)``.
    The result is gauge-fixed to zero mean on the mask; pixels outside the
    mask are NaN.  ``residuals`` holds the true residual norm at the start
    and after every restart cycle.
    """
    rhs = np.asarray(rhs, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != rhs.shape:
        raise DimensionError("initial depth and rhs sizes differ")
    mask = np.ones(rhs.shape, bool) if mask is None else np.asarray(mask, bool)
    if not mask.any():
        raise EmptyDomain("empty integration domain")
    A = laplacian_matrix(mask, spacing)
    b = rhs[mask]
    x0 = np.nan_to_num(z0[mask])
    r0 = np.linalg.norm(A @ x0 - b)
    scale = max(np.linalg.norm(b), r0)
    history = [r0]
    iterations = 0
    stagnated = False
    x = x0
    if scale > 0 and r0 > tol * scale:
        count = [0]

        def _count(_):
            count[0] += 1

        remaining = max_iter
        while remaining > 0:
            x_new, _ = gmres(A, b, x0=x, rtol=0.0, atol=tol * scale, restart=restart,
                             maxiter=1, callback=_count, callback_type="pr_norm")
            remaining -= restart
            res = np.linalg.norm(A @ x_new - b)
            if res > history[-1]:
                stagnated = True
                break
            x = x_new
            history.append(res)
            if res <= tol * scale:
                break
            if res > 0.999999 * history[-2]:
                stagnated = True
                break
        iterations = count[0]
        if history[-1] > tol * scale:
            stagnated = True
            log.warning("GMRES stopped at relative residual %.3e", history[-1] / scale)
    out = np.full(rhs.shape, np.nan)
    out[mask] = x - x.mean()
    return Refinement(out, iterations, history, stagnated)


def integrate_gradients(gradients, mask=None, spacing=(1.0, 1.0), tol: float = 1e-10,
                        max_iter: int = 2000) -> np.ndarray:
    """Zero-mean depth whose differences best match ``gradients`` on ``mask``."""
    g = np.asarray(gradients, dtype=float)
    mask = np.ones(g.shape[:2], bool) if mask is None else np.asarray(mask, bool)
    g = np.where(mask[..., None], np.nan_to_num(g), 0.0)
    rhs = divergence_rhs(g, mask, spacing)
    if mask.all():
        z = simchony_initial(rhs, spacing)
        return z - z.mean()
    # full-frame spectral solve of the field (zero outside the mask) as start
    z0 = simchony_initial(divergence_rhs(g, None, spacing), spacing)
    return gmres_refine(rhs, z0, mask, spacing, tol, max_iter).depth


def normals_to_gradients(normals, mask=None):
    """Orthographic reading ``(n_x/n_z, n_y/n_z)``; grazing pixels clamped."""
    n = np.asarray(normals, dtype=float)
    nz = n[..., 2]
    grazing = nz <= GRAZING_NZ
    if mask is not None:
        grazing &= np.asarray(mask, bool)
    if np.any(grazing):
        log.warning("%d grazing normals clamped", int(grazing.sum()))
    nz = np.where(nz <= GRAZING_NZ, GRAZING_NZ, nz)
    return np.stack([n[..., 0] / nz, n[..., 1] / nz], axis=-1), grazing


def integrate_normals(normals, camera: CameraIntrinsics | None = None, mask=None,
                      mean_depth: float | None = None, tol: float = 1e-10,
                      max_iter: int = 2000, max_fixed_point: int = 100,
                      fixed_point_tol: float = 1e-12) -> np.ndarray:
    """Depth from a unit normal field.

    Without ``mean_depth`` the orthographic slopes ``n_x/n_z, n_y/n_z`` are
    integrated (metric spacing from ``camera`` if given, else unit spacing)
    and the result has zero mean on the mask.

    With ``camera`` and ``mean_depth`` the perspective normal relation is
    inverted: the normal fixes ``grad z / z`` per pixel, so the depth is
    found as the fixed point of ``z <- c + integrate(z * grad z / z)`` with
    ``c`` chosen so the masked mean equals ``mean_depth``.
    """
    n = np.asarray(normals, dtype=float)
    mask = np.ones(n.shape[:2], bool) if mask is None else np.asarray(mask, bool)
    spacing = camera.pixel_spacing() if camera is not None else (1.0, 1.0)
    if mean_depth is None or camera is None:
        g, _ = normals_to_gradients(n, mask)
        return integrate_gradients(g, mask, spacing, tol, max_iter)

    nz = np.where(n[..., 2] <= GRAZING_NZ, GRAZING_NZ, n[..., 2])
    n = np.concatenate([n[..., :2], nz[..., None]], axis=-1)
    mu, nu = geo.image_grid(camera, n.shape)
    log_grad = geo.gradient_from_normal(n, mu, nu, 1.0, camera.f)
    return integrate_log_gradients(log_grad, mask, spacing, mean_depth, tol, max_iter,
                                   max_fixed_point, fixed_point_tol)


def integrate_log_gradients(log_grad, mask, spacing, mean_depth: float, tol=1e-10,
                            max_iter=2000, max_fixed_point=100, fixed_point_tol=1e-12):
    """Depth with ``grad z = z * log_grad`` and prescribed masked mean."""
    z = np.where(mask, float(mean_depth), np.nan)
    for _ in range(max_fixed_point):
        g = np.where(mask[..., None], z[..., None] * log_grad, 0.0)
        z_new = integrate_gradients(g, mask, spacing, tol, max_iter) + mean_depth
        change = np.nanmax(np.abs(z_new - z))
        z = z_new
        if change <= fixed_point_tol * mean_depth:
            break
    return z
