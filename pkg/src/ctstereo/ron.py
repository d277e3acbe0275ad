"""Alternating reconstruction of normals, albedo, depth and roughness.

One sweep updates the albedo from the current normals, integrates the
normals into depth, re-estimates the roughness from the depth and re-solves
the per-pixel normal systems with the new albedo, roughness and geometry.
The sweep loop stops when the mean objective stops improving.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .core import (
    CameraIntrinsics,
    DimensionError,
    EmptyDomain,
    LightSet,
    MaterialParams,
    TooFewLights,
    check_same_shape,
    luminance,
    shadow_mask,
    validate_light_set,
)
from .dgmc import dgmc_initialization, lambertian_gradients
from .integrator import integrate_normals
from .pixelsystem import build_pixel_system, pixel_lighting
from .reflectance import specular_lobe
from .solver import SolverConfig, Status, solve

log = logging.getLogger(__name__)

M_FLOOR = 1e-3
DARK = 1e-12
INIT_METHODS = ("dgmc", "flat", "lambertian")


@dataclass
class RonConfig:
    max_sweeps: int = 5
    sweep_tol: float = 1e-3
    initial_m: float = 0.3
    initial_kd: float = 0.5
    initial_depth: float = 2.0
    # specular weight and Fresnel reflectance are known material constants
    k_s: float = 0.0
    f_lambda: float = 0.04
    solver: str = "dogleg"
    init: str = "dgmc"
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    tau_shadow: float = 0.02
    spec_percentile: float = 95.0
    curv_window: int = 5
    integrator_tol: float = 1e-10
    integrator_maxiter: int = 2000
    # mean objective below which the fit is treated as exact
    psi_floor: float = 1e-20
    threads: int = 1

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")
        for name in ("sweep_tol", "initial_m", "initial_depth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.initial_kd <= 1:
            raise ValueError("initial_kd must lie in [0, 1]")
        if self.init not in INIT_METHODS:
            raise ValueError(f"init must be one of {INIT_METHODS}")
        if self.threads < 1:
            raise ValueError("threads must be positive")


@dataclass
class RonState:
    normals: np.ndarray
    albedo: np.ndarray
    depth: np.ndarray
    m: float
    iteration: int = 0
    objective_history: list = field(default_factory=list)
    # per-pixel objective and solver status of the last normal solve
    psi: np.ndarray | None = None
    status: np.ndarray | None = None
    mask: np.ndarray | None = None
    albedo_flags: np.ndarray | None = None
    stop_reason: str = ""


def update_roughness(depth, mask=None) -> float:
    """RMS deviation of the depth about its mean over ``mask`` (floored)."""
    z = np.asarray(depth, dtype=float)
    m = np.isfinite(z) if mask is None else np.asarray(mask, bool) & np.isfinite(z)
    if not m.any():
        raise EmptyDomain("no valid depth samples")
    v = z[m]
    return max(M_FLOOR, float(np.sqrt(np.mean((v - v.mean()) ** 2))))


def _stack(images):
    ims = [np.asarray(im, dtype=float) for im in images]
    check_same_shape(*ims)
    return np.stack([im if im.ndim == 3 else im[..., None] for im in ims], axis=-2)


def update_albedo(images, normals, lights: LightSet, camera: CameraIntrinsics, depth, m: float,
                  k_s: float = 0.0, f_lambda: float = 0.04, previous=None, mask=None):
    """Per-channel closed-form albedo with the specular part removed.

    Returns ``(albedo (H, W, 3), flags)``; ``flags`` marks pixels whose
    shading vanishes in every image, which keep ``previous``.
    """
    I = _stack(images)  # (H, W, k, C)
    H, W, k, C = I.shape
    N = np.asarray(normals, dtype=float)
    if N.shape != (H, W, 3):
        raise DimensionError("normals must match the images")
    mask = np.ones((H, W), bool) if mask is None else np.asarray(mask, bool)
    prev = np.full((H, W, 3), 0.5) if previous is None else np.asarray(previous, float)
    mu, nu = geo.image_grid(camera, (H, W))
    z = np.where(np.isfinite(depth), depth, np.nanmean(depth)) if np.ndim(depth) else depth
    z = np.broadcast_to(z, (H, W))
    S = geo.surface_point(mu, nu, z, camera.f)
    V = geo.shading_view(mu, nu, camera.f)
    L, Pi = pixel_lighting(lights, S.reshape(-1, 3))
    L = L.reshape(H, W, k, 3)
    Pi = Pi.reshape(H, W, k)
    s = np.maximum(0.0, np.einsum("hwc,hwkc->hwk", N, L)) * Pi
    q = Pi * specular_lobe(N[..., None, :], V[..., None, :], L, m, f_lambda)
    den = np.sum(s * s, axis=-1)
    num = np.einsum("hwkc,hwk->hwc", I - k_s * q[..., None], s)
    ok = den >= DARK
    kd = np.clip(num / np.where(ok, den, 1.0)[..., None], 0.0, 1.0)
    if C == 1:
        kd = np.repeat(kd, 3, axis=-1)
    out = np.where((ok & mask)[..., None], kd, prev)
    return out, mask & ~ok


def _solve_chunks(name, system, x0, cfg, threads):
    P = x0.shape[0]
    if threads <= 1 or P < 2 * threads:
        r = solve(name, system, x0, cfg)
        return r.x_star, r.final_objective, r.status
    bounds = np.linspace(0, P, threads + 1).astype(int)
    chunks = [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        reps = list(ex.map(lambda c: solve(name, system.take(c), x0[c], cfg), chunks))
    return (np.concatenate([r.x_star for r in reps]),
            np.concatenate([r.final_objective for r in reps]),
            np.concatenate([r.status for r in reps]))


def solve_normals(images, lights: LightSet, camera: CameraIntrinsics, material: MaterialParams,
                  depth, x0, valid, solver: str = "dogleg", cfg: SolverConfig | None = None,
                  albedo=None, threads: int = 1):
    """Per-pixel gradient solve on ``valid`` pixels.

    ``x0`` holds initial gradients ``(H, W, 2)``.  Returns gradients,
    per-pixel objective and status grids; invalid pixels are NaN / None.
    """
    valid = np.asarray(valid, bool)
    H, W = valid.shape
    rows, cols = np.nonzero(valid)
    if rows.size == 0:
        raise EmptyDomain("no pixels to solve")
    system = build_pixel_system((rows, cols), images, lights, camera, material, depth, albedo)
    X0 = np.asarray(x0, dtype=float)[rows, cols]
    X, psi, status = _solve_chunks(solver, system, X0, cfg or SolverConfig(), threads)
    G = np.full((H, W, 2), np.nan)
    G[rows, cols] = X
    Psi = np.full((H, W), np.nan)
    Psi[rows, cols] = psi
    St = np.full((H, W), None, dtype=object)
    St[rows, cols] = status
    return G, Psi, St


def pixel_objective(images, lights, camera, material, depth, gradients, valid, albedo=None):
    rows, cols = np.nonzero(valid)
    system = build_pixel_system((rows, cols), images, lights, camera, material, depth, albedo)
    return system.objective(np.asarray(gradients)[rows, cols])


def initial_gradients(method: str, images, lights, camera, depth, mask, cfg: RonConfig):
    H, W = np.shape(depth)
    if method == "flat":
        return np.zeros((H, W, 2))
    if method == "lambertian":
        return lambertian_gradients(images, lights, camera, depth)
    if method == "dgmc":
        return dgmc_initialization(images, lights, camera, depth, mask, cfg.spec_percentile,
                                   cfg.curv_window).seeds
    raise ValueError(f"unknown init {method!r}")


def _normals(G, depth, camera, valid):
    mu, nu = geo.image_grid(camera, valid.shape)
    z = np.where(valid, depth, 1.0)
    g = np.where(valid[..., None], G, 0.0)
    N = geo.unit_normal_from_gradient(mu, nu, z, g[..., 0], g[..., 1], camera.f)
    return np.where(valid[..., None], N, np.nan)


def run_ron(images, lights: LightSet, camera: CameraIntrinsics, cfg: RonConfig | None = None,
            mask=None, callback=None) -> RonState:
    """Reconstruct normals, albedo, depth and roughness from ``images``."""
    cfg = cfg or RonConfig()
    if len(images) < 3:
        raise TooFewLights(f"need at least 3 images, got {len(images)}")
    if len(images) != len(lights):
        raise DimensionError("one light per image required")
    validate_light_set(lights, reference_depth=cfg.initial_depth)
    H, W = check_same_shape(*images)
    mask = np.ones((H, W), bool) if mask is None else np.asarray(mask, bool)
    valid = mask & ~shadow_mask(images, cfg.tau_shadow)
    if not valid.any():
        raise EmptyDomain("every pixel is masked or shadowed")

    z0 = cfg.initial_depth
    depth = np.full((H, W), z0)
    albedo = np.full((H, W, 3), cfg.initial_kd)
    m = cfg.initial_m

    def material(m_):
        return MaterialParams((0.5, 0.5, 0.5), cfg.k_s, m_, cfg.f_lambda)

    def normal_pass(depth, x0, albedo, m_):
        return solve_normals(images, lights, camera, material(m_), depth, x0, valid,
                             cfg.solver, cfg.solver_cfg, albedo, cfg.threads)

    x0 = initial_gradients(cfg.init, images, lights, camera, depth, valid, cfg)
    G, Psi, St = normal_pass(depth, x0, albedo, m)
    state = RonState(_normals(G, depth, camera, valid), albedo, np.where(valid, depth, np.nan),
                     m, 0, [float(np.mean(Psi[valid]))], Psi, St, valid)
    log.info("initial solve: mean objective %.3e", state.objective_history[0])

    for sweep in range(1, cfg.max_sweeps + 1):
        prev = state
        albedo, flags = update_albedo(images, prev.normals, lights, camera, depth, prev.m,
                                      cfg.k_s, cfg.f_lambda, prev.albedo, valid)
        depth_new = integrate_normals(np.where(valid[..., None], prev.normals, 0.0), camera,
                                      valid, mean_depth=z0, tol=cfg.integrator_tol,
                                      max_iter=cfg.integrator_maxiter)
        depth_new = np.where(valid, depth_new, z0)
        # keep each normal while its depth moves: gradients scale with depth
        x0 = np.where(valid[..., None], G * (depth_new / depth)[..., None], 0.0)
        depth = depth_new

        # the depth-derived roughness is accepted only if it lowers the
        # objective before the normals adapt to it
        m_new = update_roughness(depth, valid)
        if m_new != prev.m:
            psi_old = np.mean(pixel_objective(images, lights, camera, material(prev.m), depth,
                                              x0, valid, albedo))
            psi_new = np.mean(pixel_objective(images, lights, camera, material(m_new), depth,
                                              x0, valid, albedo))
            if not psi_new < psi_old:
                m_new = prev.m
        G, Psi, St = normal_pass(depth, x0, albedo, m_new)
        obj = float(np.mean(Psi[valid]))
        log.info("sweep %d: mean objective %.3e, m = %.4g", sweep, obj, m_new)
        if not obj <= prev.objective_history[-1]:
            prev.stop_reason = "objective increased"
            state = prev
            break
        state = RonState(_normals(G, depth, camera, valid), albedo,
                         np.where(valid, depth, np.nan), m_new, sweep,
                         prev.objective_history + [obj], Psi, St, valid, flags)
        if callback is not None:
            callback(state)
        if obj <= cfg.psi_floor:
            state.stop_reason = "objective floor"
            break
        gain = prev.objective_history[-1] - obj
        if gain <= cfg.sweep_tol * prev.objective_history[-1]:
            state.stop_reason = "converged"
            break
    else:
        state.stop_reason = "max sweeps"
    return state


def status_counts(status) -> dict:
    s = [v for v in np.ravel(status) if v is not None]
    return {st.value: int(sum(1 for v in s if v == st)) for st in Status}
