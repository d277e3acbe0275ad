"""Perspective Cook-Torrance and Lambertian irradiance.

The array functions (``beckmann``, ``cook_torrance`` ...) broadcast over any
leading shape with vectors on the last axis.  :class:`ShadingContext` wraps a
single configuration for the scalar API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MaterialParams

# cosines below this zero the specular lobe (its denominator vanishes)
GRAZING_COS = 1e-4


def _dot(a, b):
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def halfway(L, V):
    return _unit(np.asarray(L, float) + np.asarray(V, float))


def beckmann(cos_alpha, m):
    """Beckmann facet distribution; zero for back-facing facets."""
    c = np.asarray(cos_alpha, dtype=float)
    ok = c > 0
    cs = np.where(ok, c, 1.0)
    c2 = cs * cs
    tan2 = (1.0 - c2) / c2
    d = np.exp(-tan2 / (m * m)) / (np.pi * m * m * c2 * c2)
    return np.where(ok, d, 0.0)


def beckmann_dc(cos_alpha, m):
    """Derivative of :func:`beckmann` with respect to ``cos_alpha``."""
    c = np.asarray(cos_alpha, dtype=float)
    ok = c > 0
    cs = np.where(ok, c, 1.0)
    d = beckmann(cs, m)
    return np.where(ok, d * (2.0 / (cs**3 * m * m) - 4.0 / cs), 0.0)


def schlick(h_dot_v, f_lambda):
    return f_lambda + (1.0 - f_lambda) * (1.0 - np.asarray(h_dot_v, dtype=float)) ** 5


def masking(n_dot_h, n_dot_v, n_dot_l, v_dot_h):
    """Geometric attenuation ``min(1, 2(H.N)(V.N)/Q, 2(H.N)(L.N)/Q)``."""
    q = np.asarray(v_dot_h, dtype=float)
    ok = q > 0
    qs = np.where(ok, q, 1.0)
    t = 2.0 * n_dot_h * n_dot_v / qs
    r = 2.0 * n_dot_h * n_dot_l / qs
    g = np.minimum(1.0, np.minimum(t, r))
    return np.where(ok, np.clip(g, 0.0, 1.0), 0.0)


def specular_lobe(N, V, L, m, f_lambda):
    """Specular term per unit ``k_s`` and unit light: ``G D F / (4 (V.N)(L.N))``."""
    H = halfway(L, V)
    nh, nv, nl, vh = _dot(N, H), _dot(N, V), _dot(N, L), _dot(V, H)
    active = (nv > GRAZING_COS) & (nl > GRAZING_COS) & (nh > 0) & (vh > 0)
    nv_s = np.where(active, nv, 1.0)
    nl_s = np.where(active, nl, 1.0)
    val = masking(nh, nv, nl, vh) * beckmann(nh, m) * schlick(vh, f_lambda) / (4.0 * nv_s * nl_s)
    return np.where(active, val, 0.0)


def lambertian(N, L, Pi, k_d):
    """Diffuse irradiance ``k_d max(0, L.N) Pi``."""
    return np.asarray(k_d) * np.maximum(0.0, _dot(N, L)) * Pi


def cook_torrance(N, V, L, Pi, k_d, k_s, m, f_lambda):
    """Full irradiance: Lambertian base plus the weighted specular lobe."""
    return lambertian(N, L, Pi, k_d) + k_s * Pi * specular_lobe(N, V, L, m, f_lambda)


def cook_torrance_dn(N, V, L, Pi, k_d, k_s, m, f_lambda):
    """Gradient of :func:`cook_torrance` with respect to the unit normal ``N``.

    ``N`` is treated as a free 3-vector here; projection onto the tangent
    plane happens in the chain rule of the caller.
    """
    N, V, L = (np.asarray(a, dtype=float) for a in (N, V, L))
    H = halfway(L, V)
    nh, nv, nl, vh = _dot(N, H), _dot(N, V), _dot(N, L), _dot(V, H)
    Pi = np.asarray(Pi, dtype=float)

    grad = (np.asarray(k_d) * Pi * (nl > 0))[..., None] * L

    active = (nv > GRAZING_COS) & (nl > GRAZING_COS) & (nh > 0) & (vh > 0)
    nv_s = np.where(active, nv, 1.0)
    nl_s = np.where(active, nl, 1.0)
    nh_s = np.where(active, nh, 1.0)
    vh_s = np.where(active, vh, 1.0)
    t = 2.0 * nh_s * nv_s / vh_s
    r = 2.0 * nh_s * nl_s / vh_s
    G = np.minimum(1.0, np.minimum(t, r))
    # gradient of whichever branch of the min is active
    use_t = (t < 1.0) & (t <= r)
    use_r = (r < 1.0) & (r < t)
    dG = (
        np.where(use_t, 2.0 / vh_s, 0.0)[..., None] * (nv_s[..., None] * H + nh_s[..., None] * V)
        + np.where(use_r, 2.0 / vh_s, 0.0)[..., None] * (nl_s[..., None] * H + nh_s[..., None] * L)
    )
    D = beckmann(nh_s, m)
    dD = beckmann_dc(nh_s, m)[..., None] * H
    inv = 1.0 / (4.0 * nv_s * nl_s)
    dinv = -inv[..., None] * (V / nv_s[..., None] + L / nl_s[..., None])
    F = schlick(vh_s, f_lambda)
    spec_grad = (
        dG * (D * inv)[..., None] + (G * inv)[..., None] * dD + (G * D)[..., None] * dinv
    ) * (k_s * Pi * F)[..., None]
    return grad + np.where(active[..., None], spec_grad, 0.0)


@dataclass(frozen=True)
class ShadingContext:
    """One shading configuration: unit N, V, L, attenuation and material."""

    N: tuple
    V: tuple
    L: tuple
    Pi: float
    material: MaterialParams

    def __post_init__(self):
        for name in ("N", "V", "L"):
            v = np.asarray(getattr(self, name), dtype=float)
            if abs(np.linalg.norm(v) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a unit vector")
            object.__setattr__(self, name, tuple(float(c) for c in v))

    @property
    def H(self) -> np.ndarray:
        return halfway(self.L, self.V)

    @property
    def cos_alpha(self) -> float:
        return float(_dot(self.H, self.N))

    @property
    def back_facet(self) -> bool:
        return self.cos_alpha <= 0

    @property
    def degenerate_half_angle(self) -> bool:
        return float(_dot(self.V, self.H)) <= 0


def beckmann_D(ctx: ShadingContext) -> float:
    return float(beckmann(ctx.cos_alpha, ctx.material.m))


def fresnel_F(ctx: ShadingContext) -> float:
    hv = float(np.clip(_dot(ctx.H, ctx.V), 0.0, 1.0))
    return float(schlick(hv, ctx.material.f_lambda))


def geometric_G(ctx: ShadingContext) -> float:
    H = ctx.H
    return float(masking(_dot(ctx.N, H), _dot(ctx.N, ctx.V), _dot(ctx.N, ctx.L), _dot(ctx.V, H)))


def eval_cook_torrance(ctx: ShadingContext, channel: int = 0) -> float:
    mat = ctx.material
    return float(
        cook_torrance(ctx.N, ctx.V, ctx.L, ctx.Pi, mat.k_d[channel], mat.k_s, mat.m, mat.f_lambda)
    )


def eval_lambertian(ctx: ShadingContext, channel: int = 0) -> float:
    return float(lambertian(ctx.N, ctx.L, ctx.Pi, ctx.material.k_d[channel]))


def lambertian_inversion(intensities, L, Pi=1.0):
    """Classical three-light Lambertian inversion.

    ``intensities`` is ``(..., k)`` and ``L`` is ``(..., k, 3)`` (or ``(k, 3)``
    shared by every pixel) with ``Pi`` broadcasting to ``(..., k)``.  Solves
    ``Pi_h L_h . b = I_h`` in the least-squares sense and returns the unit
    normal and the albedo ``|b|``.
    """
    I = np.asarray(intensities, dtype=float)
    L = np.asarray(L, dtype=float)
    A = np.broadcast_to(L * np.asarray(Pi, dtype=float)[..., None], I.shape + (3,))
    if I.shape[-1] == 3:
        b = np.linalg.solve(A, I[..., None])[..., 0]
    else:
        At = np.swapaxes(A, -1, -2)
        b = np.linalg.solve(At @ A, (At @ I[..., None]))[..., 0]
    rho = np.linalg.norm(b, axis=-1)
    safe = np.where(rho > 0, rho, 1.0)
    n = b / safe[..., None]
    n = np.where((rho > 0)[..., None], n, np.array([0.0, 0.0, 1.0]))
    return n, rho
