"""Seeding highlight pixels from curvature-similar pixels on the highlight rim.

Specular pixels are hard starts for the per-pixel solvers.  For each one we
walk the rim pixels of its highlight in order of grid distance and borrow
the Lambertian gradient estimate of the first rim pixel whose Gaussian and
mean curvature (of the smoothed intensity) agree within 5%.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import geometry as geo
from .core import (
    BorderError,
    CameraIntrinsics,
    EmptyDomain,
    LightSet,
    NoBoundary,
    luminance,
)
from .pixelsystem import pixel_lighting
from .reflectance import lambertian_inversion

REL_TOL = 0.05
ABS_FLOOR = 1e-6
# distances are rounded before tie-breaking so that 1+sqrt2 == sqrt2+1
_ROUND = 9


@dataclass(frozen=True)
class CurvatureDescriptor:
    k1: float
    k2: float

    def __post_init__(self):
        if self.k1 > self.k2:
            a, b = self.k2, self.k1
            object.__setattr__(self, "k1", a)
            object.__setattr__(self, "k2", b)

    @property
    def gc(self) -> float:
        return self.k1 * self.k2

    @property
    def mc(self) -> float:
        return 0.5 * (self.k1 + self.k2)


@dataclass(frozen=True)
class HighlightRegion:
    specular_mask: np.ndarray
    # rim pixels (row, col) in row-major order
    boundary: tuple

    @property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.specular_mask.shape, bool)
        if self.boundary:
            r, c = np.array(self.boundary).T
            m[r, c] = True
        return m


class Seed(NamedTuple):
    gradient: np.ndarray
    source: tuple
    matched: bool


def detect_specular_mask(images, tau_spec: float = 95.0, mask=None) -> np.ndarray:
    """Pixels whose brightest observation exceeds the ``tau_spec`` percentile."""
    peak = np.max([luminance(im) for im in images], axis=0)
    valid = np.ones(peak.shape, bool) if mask is None else np.asarray(mask, bool)
    if not valid.any():
        return np.zeros(peak.shape, bool)
    thresh = np.percentile(peak[valid], tau_spec)
    return valid & (peak > thresh)


def extract_boundary(mask) -> HighlightRegion:
    """Non-specular pixels 8-adjacent to ``mask``."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise EmptyDomain("specular mask is empty")
    if mask.all():
        raise NoBoundary("specular mask covers the whole image")
    ring = ndi.binary_dilation(mask, structure=np.ones((3, 3), bool)) & ~mask
    return HighlightRegion(mask, tuple(map(tuple, np.argwhere(ring))))


def grid_graph(domain) -> sp.csr_matrix:
    """8-connected graph over ``domain`` pixels (row-major node ids of the full grid)."""
    domain = np.asarray(domain, bool)
    H, W = domain.shape
    ids = np.arange(H * W).reshape(H, W)
    rows, cols, vals = [], [], []
    for dr, dc, w in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, np.sqrt(2.0)), (1, -1, np.sqrt(2.0))):
        r0, r1 = 0, H - dr
        c0, c1 = max(0, -dc), W - max(0, dc)
        a = domain[r0:r1, c0:c1] & domain[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        src = ids[r0:r1, c0:c1][a]
        dst = ids[r0 + dr:r1 + dr, c0 + dc:c1 + dc][a]
        rows += [src, dst]
        cols += [dst, src]
        vals += [np.full(src.size, w)] * 2
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(H * W, H * W)
    )


def _order(p, region, dist):
    """Sort rim pixels by (path distance, row-major index); Euclidean for unreachable."""
    W = region.specular_mask.shape[1]
    b = np.array(region.boundary)
    d = dist[b[:, 0] * W + b[:, 1]]
    reach = np.isfinite(d)
    eu = np.hypot(b[:, 0] - p[0], b[:, 1] - p[1])
    key_d = np.where(reach, np.round(d, _ROUND), np.round(eu, _ROUND))
    # reachable candidates always precede unreachable ones
    idx = np.lexsort((b[:, 0] * W + b[:, 1], key_d, ~reach))
    return [(tuple(b[i]), float(d[i] if reach[i] else eu[i])) for i in idx]


def dijkstra_nearest(p, region: HighlightRegion, graph=None):
    """Rim pixels ordered by shortest 8-connected path from ``p``.

    Paths run through the highlight and its rim (edge weights 1 and sqrt 2).
    Returns ``[((row, col), distance), ...]``.
    """
    if not region.boundary:
        raise NoBoundary("highlight region has no boundary")
    if graph is None:
        graph = grid_graph(region.specular_mask | region.boundary_mask)
    W = region.specular_mask.shape[1]
    dist = dijkstra(graph, indices=p[0] * W + p[1])
    return _order(p, region, dist)


def reference_image(images, sigma: float = 1.0) -> np.ndarray:
    """Mean intensity of the inputs, Gaussian-smoothed."""
    mean = np.mean([luminance(im) for im in images], axis=0)
    return ndi.gaussian_filter(mean, sigma, mode="nearest") if sigma > 0 else mean


def _quadratic_filters(window: int):
    if window < 3 or window % 2 == 0:
        raise ValueError("curvature window must be an odd integer >= 3")
    r = window // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(float)
    A = np.stack([np.ones(x.size), x.ravel(), y.ravel(), x.ravel() ** 2,
                  (x * y).ravel(), y.ravel() ** 2], axis=1)
    P = np.linalg.pinv(A)
    # coefficient rows for x^2, xy, y^2 as correlation kernels
    return [P[i].reshape(window, window) for i in (3, 4, 5)]


def _eig2(hxx, hxy, hyy):
    mid = 0.5 * (hxx + hyy)
    rad = np.sqrt(0.25 * (hxx - hyy) ** 2 + hxy**2)
    return mid - rad, mid + rad


def curvature_maps(ref_image, window: int = 5):
    """Gaussian and mean curvature of the intensity at every pixel.

    The Hessian comes from a least-squares quadratic fit over the window.
    Pixels whose window leaves the image are NaN.
    """
    ref = np.asarray(ref_image, dtype=float)
    cxx, cxy, cyy = (ndi.correlate(ref, k, mode="constant") for k in _quadratic_filters(window))
    k1, k2 = _eig2(2 * cxx, cxy, 2 * cyy)
    gc, mc = k1 * k2, 0.5 * (k1 + k2)
    r = window // 2
    inner = np.zeros(ref.shape, bool)
    inner[r:ref.shape[0] - r, r:ref.shape[1] - r] = True
    return np.where(inner, gc, np.nan), np.where(inner, mc, np.nan)


def curvature_descriptor(pixel, ref_image, window: int = 5) -> CurvatureDescriptor:
    ref = np.asarray(ref_image, dtype=float)
    r = window // 2
    i, j = pixel
    if i < r or j < r or i >= ref.shape[0] - r or j >= ref.shape[1] - r:
        raise BorderError(f"pixel {pixel} is within {r} of the image border")
    patch = ref[i - r:i + r + 1, j - r:j + r + 1]
    cxx, cxy, cyy = (float(np.sum(k * patch)) for k in _quadratic_filters(window))
    k1, k2 = _eig2(2 * cxx, cxy, 2 * cyy)
    return CurvatureDescriptor(float(k1), float(k2))


def _close(a, b):
    if abs(b) < ABS_FLOOR:
        return abs(a - b) <= ABS_FLOOR
    return abs(a - b) <= REL_TOL * abs(b)


def similar(q: CurvatureDescriptor, p: CurvatureDescriptor) -> bool:
    """Both GC and MC of ``q`` within 5% of ``p`` (absolute floor near zero)."""
    return _close(q.gc, p.gc) and _close(q.mc, p.mc)


def dgmc_seed(pixel_p, region: HighlightRegion, ref_image, lambertian_gradients,
              window: int = 5, candidates=None, curv=None) -> Seed:
    """Seed gradient for specular pixel ``pixel_p``.

    ``candidates`` may carry a precomputed :func:`dijkstra_nearest` order and
    ``curv`` precomputed :func:`curvature_maps`.  A specular pixel without a
    descriptor (too close to the border) never matches and takes the
    nearest rim pixel.
    """
    if candidates is None:
        candidates = dijkstra_nearest(pixel_p, region)
    if curv is None:
        curv = curvature_maps(ref_image, window)
    gc, mc = curv
    grads = np.asarray(lambertian_gradients, dtype=float)
    p = tuple(pixel_p)
    ref = (gc[p], mc[p])
    for q, _ in candidates:
        cq = (gc[q], mc[q])
        if not np.all(np.isfinite(cq)):
            continue  # descriptor undefined at the border
        if np.all(np.isfinite(ref)):
            ok = _close(cq[0], ref[0]) and _close(cq[1], ref[1])
        else:
            ok = False
        if ok:
            return Seed(grads[q].copy(), q, True)
    q = candidates[0][0]
    return Seed(grads[q].copy(), q, False)


def lambertian_gradients(images, lights: LightSet, camera: CameraIntrinsics, z_est):
    """Per-pixel gradient from three-light Lambertian inversion at depth ``z_est``."""
    lum = np.stack([luminance(im) for im in images], axis=-1)
    H, W = lum.shape[:2]
    mu, nu = geo.image_grid(camera, (H, W))
    z = np.broadcast_to(np.asarray(z_est, float), (H, W))
    S = geo.surface_point(mu, nu, z, camera.f)
    L, Pi = pixel_lighting(lights, S.reshape(-1, 3))
    n, _ = lambertian_inversion(lum.reshape(-1, lum.shape[-1]), L, Pi)
    n = n.reshape(H, W, 3)
    # orient toward the camera and keep away from grazing
    n = np.where(n[..., 2:3] < 0, -n, n)
    n[..., 2] = np.maximum(n[..., 2], 1e-3)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = geo.gradient_from_normal(n, mu, nu, z, camera.f)
    return np.nan_to_num(g, nan=0.0, posinf=0.0, neginf=0.0)


class DgmcResult(NamedTuple):
    seeds: np.ndarray  # (H, W, 2) initial gradients
    specular_mask: np.ndarray
    matched: np.ndarray  # bool per specular pixel: a similar rim pixel was found


def dgmc_initialization(images, lights: LightSet, camera: CameraIntrinsics, z_est, mask=None,
                        tau_spec: float = 95.0, window: int = 5, sigma: float = 1.0,
                        base=None) -> DgmcResult:
    """Initial gradients for every pixel.

    Non-specular pixels start from ``base`` (Lambertian estimates by
    default); specular pixels take the seed of their matched rim pixel.
    """
    lam = lambertian_gradients(images, lights, camera, z_est)
    seeds = lam.copy() if base is None else np.array(base, dtype=float)
    spec = detect_specular_mask(images, tau_spec, mask)
    matched = np.zeros(spec.shape, bool)
    if not spec.any() or spec.all():
        return DgmcResult(seeds, spec, matched)
    region = extract_boundary(spec)
    domain = spec | region.boundary_mask
    nodes = np.flatnonzero(domain)
    graph = grid_graph(domain)[nodes][:, nodes]
    curv = curvature_maps(reference_image(images, sigma), window)
    pix = np.argwhere(spec)
    local = np.searchsorted(nodes, np.ravel_multi_index(pix.T, spec.shape))
    dist = dijkstra(graph, indices=local)
    full = np.full(spec.size, np.inf)
    for p, d in zip(map(tuple, pix), dist):
        full[nodes] = d
        s = dgmc_seed(p, region, None, lam, window, _order(p, region, full), curv)
        seeds[p] = s.gradient
        matched[p] = s.matched
    return DgmcResult(seeds, spec, matched)
