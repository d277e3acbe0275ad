"""Small dense nonlinear least-squares engines.

All solvers minimise ``Psi(X) = 0.5 |F(X)|^2`` and work on a *batch* of
independent systems at once: ``X`` has shape ``(P, n)`` and the residual maps
it to ``(P, m)``.  Rows never interact, so a batch of one pixel gives exactly
the same iterates as that pixel solved inside a large batch.  Passing a 1-D
starting point returns a report with scalar fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping

import numpy as np

MACHINE_EPS = np.finfo(float).eps


class Status(str, Enum):
    CONVERGED = "Converged"
    MAXITER = "MaxIter"
    STALLED = "Stalled"
    TRUST_REGION_COLLAPSE = "TrustRegionCollapse"


class StallSignal(Exception):
    """Line search found no decrease within its budget."""


@dataclass(frozen=True)
class ResidualSystem:
    """Batched residual map ``F`` with optional analytic Jacobian.

    ``residual(X, **data)`` and ``jacobian(X, **data)`` receive ``X`` of shape
    ``(P, n)`` and the per-row arrays in ``data`` (leading axis ``P``).
    Without ``jacobian`` a central-difference Jacobian is used.
    """

    residual: Callable[..., np.ndarray]
    dim_x: int
    dim_f: int
    jacobian: Callable[..., np.ndarray] | None = None
    data: Mapping[str, np.ndarray] = field(default_factory=dict)

    def F(self, X) -> np.ndarray:
        return self.residual(np.asarray(X, dtype=float), **self.data)

    def J(self, X) -> np.ndarray:
        if self.jacobian is None:
            return fd_jacobian(self, X)
        return self.jacobian(np.asarray(X, dtype=float), **self.data)

    def objective(self, X) -> np.ndarray:
        F = self.F(np.atleast_2d(X))
        psi = 0.5 * np.sum(F * F, axis=-1)
        return psi if np.ndim(X) == 2 else psi[0]

    def gradient(self, X) -> np.ndarray:
        X2 = np.atleast_2d(X)
        g = np.einsum("pmn,pm->pn", self.J(X2), self.F(X2))
        return g if np.ndim(X) == 2 else g[0]

    def take(self, rows) -> "ResidualSystem":
        if not self.data:
            return self
        return replace(self, data={k: v[rows] for k, v in self.data.items()})


@dataclass
class SolverConfig:
    """Tolerances and budgets.  ``None`` tolerances pick each solver's default."""

    eps1: float | None = None
    eps2: float | None = None
    eps3: float | None = None
    k_max: int = 200
    tau: float = 9e-2
    delta0: float = 5e-1
    theta_max: int = 400

    def __post_init__(self):
        for name in ("eps1", "eps2", "eps3"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.k_max <= 0 or self.tau <= 0 or self.delta0 <= 0 or self.theta_max <= 0:
            raise ValueError("solver budgets and seeds must be positive")

    def eps(self, name: str, default: float) -> float:
        v = getattr(self, name)
        return default if v is None else v


@dataclass
class SolverReport:
    x_star: np.ndarray
    iterations: np.ndarray | int
    final_objective: np.ndarray | float
    status: np.ndarray | Status
    hessian: np.ndarray | None = None

    @property
    def converged(self):
        return np.asarray(self.status) == Status.CONVERGED


def fd_jacobian(sys: ResidualSystem, X, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with relative step ``h * max(1, |x_j|)``."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    cols = []
    for j in range(X2.shape[1]):
        step = h * np.maximum(1.0, np.abs(X2[:, j]))
        Xp, Xm = X2.copy(), X2.copy()
        Xp[:, j] += step
        Xm[:, j] -= step
        cols.append((sys.F(Xp) - sys.F(Xm)) / (2 * step[:, None]))
    J = np.stack(cols, axis=-1)
    return J[0] if single else J


def _as_batch(x0):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim not in (1, 2):
        raise ValueError("x0 must be a vector or a (P, n) batch")
    return np.array(np.atleast_2d(x0)), x0.ndim == 1


def _report(X, iters, psi, status, single, hessian=None):
    if single:
        return SolverReport(X[0], int(iters[0]), float(psi[0]), Status(status[0]),
                            None if hessian is None else hessian[0])
    return SolverReport(X, iters, psi, status, hessian)


def _status_array(P):
    # np.full mangles str-valued enum members in object arrays
    status = np.empty(P, dtype=object)
    status[:] = Status.MAXITER
    return status


def _psi(F):
    psi = 0.5 * np.sum(F * F, axis=-1)
    return np.where(np.isfinite(psi), psi, np.inf)


def _jtf(J, F):
    return np.einsum("pmn,pm->pn", J, F)


def _line_search_batch(sys, X, psi, g, d, budget, c1=1e-4):
    """Armijo backtracking on every row; returns new points and trial counts."""
    slope = np.sum(g * d, axis=-1)
    ascent = slope >= 0
    if np.any(ascent):
        d = np.where(ascent[:, None], -g, d)
        slope = np.where(ascent, -np.sum(g * g, axis=-1), slope)
    P = X.shape[0]
    t = np.ones(P)
    done = np.zeros(P, bool)
    used = np.zeros(P, int)
    Xn, Fn = X.copy(), np.zeros((P, sys.dim_f))
    psin = psi.copy()
    budget = np.broadcast_to(np.asarray(budget), (P,))
    while True:
        todo = np.flatnonzero(~done & (used < budget))
        if todo.size == 0:
            break
        Xt = X[todo] + t[todo, None] * d[todo]
        Ft = sys.take(todo).F(Xt)
        pt = _psi(Ft)
        used[todo] += 1
        ok = (pt < psi[todo]) & (pt <= psi[todo] + c1 * t[todo] * slope[todo])
        hit = todo[ok]
        Xn[hit], Fn[hit], psin[hit] = Xt[ok], Ft[ok], pt[ok]
        done[hit] = True
        t[todo[~ok]] *= 0.5
    return Xn, Fn, psin, used, done


def line_search(sys: ResidualSystem, x, d, budget: int = 30, c1: float = 1e-4):
    """Backtracking Armijo search along ``d`` from ``x``.

    A non-descent ``d`` is replaced by the steepest-descent direction.
    Returns ``(x_next, trials_used)``; raises :class:`StallSignal` when no
    step in ``1, 1/2, 1/4, ...`` gives sufficient decrease within ``budget``.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    D = np.atleast_2d(np.asarray(d, dtype=float))
    F = sys.F(X)
    g = _jtf(sys.J(X), F)
    Xn, _, _, used, ok = _line_search_batch(sys, X, _psi(F), g, D, budget, c1)
    if not ok[0]:
        raise StallSignal(f"no decrease within {budget} trials")
    return Xn[0], int(used[0])


def solve_bfgs(sys: ResidualSystem, x0, cfg: SolverConfig | None = None, callback=None):
    """Quasi-Newton minimisation of Psi with BFGS Hessian updates.

    The search direction is ``-B^{-1} grad Psi`` with ``grad Psi = J^T F``;
    the update is skipped unless ``Theta.Y > sqrt(eps) |Theta| |Y|``, which
    keeps ``B`` symmetric positive definite.  ``theta_max`` caps the total
    number of line-search trials per row.
    """
    cfg = cfg or SolverConfig()
    eps = cfg.eps("eps1", 1e-12)
    X, single = _as_batch(x0)
    P, n = X.shape
    F = sys.F(X)
    psi = _psi(F)
    g = _jtf(sys.J(X), F)
    B = np.broadcast_to(np.eye(n), (P, n, n)).copy()
    theta = np.zeros(P, int)
    iters = np.zeros(P, int)
    status = _status_array(P)
    active = np.linalg.norm(g, axis=1) > eps
    status[~active] = Status.CONVERGED
    guard = np.sqrt(MACHINE_EPS)

    for _ in range(cfg.k_max):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sub = sys.take(idx)
        d = np.linalg.solve(B[idx], -g[idx][..., None])[..., 0]
        Xn, Fn, psin, used, ok = _line_search_batch(
            sub, X[idx], psi[idx], g[idx], d, cfg.theta_max - theta[idx]
        )
        theta[idx] += used
        iters[idx] += 1
        stalled = idx[~ok]
        status[stalled] = Status.STALLED
        active[stalled] = False
        j = idx[ok]
        if j.size:
            Xn, Fn, psin = Xn[ok], Fn[ok], psin[ok]
            gn = _jtf(sys.take(j).J(Xn), Fn)
            Th = Xn - X[j]
            Y = gn - g[j]
            ty = np.sum(Th * Y, axis=1)
            upd = ty > guard * np.linalg.norm(Th, axis=1) * np.linalg.norm(Y, axis=1)
            if np.any(upd):
                u = j[upd]
                Bu = B[u]
                U = np.einsum("pij,pj->pi", Bu, Th[upd])
                tu = np.sum(Th[upd] * U, axis=1)
                B[u] = (
                    Bu
                    + np.einsum("pi,pj->pij", Y[upd], Y[upd]) / ty[upd][:, None, None]
                    - np.einsum("pi,pj->pij", U, U) / tu[:, None, None]
                )
            X[j], F[j], psi[j], g[j] = Xn, Fn, psin, gn
            conv = j[np.linalg.norm(gn, axis=1) <= eps]
            status[conv] = Status.CONVERGED
            active[conv] = False
        out = idx[theta[idx] >= cfg.theta_max]
        out = out[active[out]]
        status[out] = Status.STALLED
        active[out] = False
        if callback is not None:
            callback(X, psi)
    return _report(X, iters, psi, status, single, hessian=B)


def solve_lm(sys: ResidualSystem, x0, cfg: SolverConfig | None = None, callback=None):
    """Levenberg-Marquardt with gain-ratio damping control.

    Steps solve ``(J^T J + lambda I) d = -J^T F``; ``lambda`` starts at
    ``tau * max diag(J^T J)``, shrinks by ``max(1/3, 1 - (2 rho - 1)^3)`` on
    acceptance and grows by a doubling factor on rejection.
    """
    cfg = cfg or SolverConfig()
    eps1 = cfg.eps("eps1", 1e-15)
    eps2 = cfg.eps("eps2", 1e-15)
    X, single = _as_batch(x0)
    P, n = X.shape
    F = sys.F(X)
    J = sys.J(X)
    psi = _psi(F)
    g = _jtf(J, F)
    A = np.einsum("pmi,pmj->pij", J, J)
    lam = cfg.tau * np.max(np.diagonal(A, axis1=1, axis2=2), axis=1)
    lam = np.where(lam > 0, lam, cfg.tau)
    nu = np.full(P, 2.0)
    iters = np.zeros(P, int)
    status = _status_array(P)
    active = np.max(np.abs(g), axis=1) > eps1
    status[~active] = Status.CONVERGED
    eye = np.eye(n)

    for _ in range(cfg.k_max):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        d = np.linalg.solve(A[idx] + lam[idx, None, None] * eye, -g[idx][..., None])[..., 0]
        small = np.linalg.norm(d, axis=1) <= eps2 * (np.linalg.norm(X[idx], axis=1) + eps2)
        status[idx[small]] = Status.CONVERGED
        active[idx[small]] = False
        j, d = idx[~small], d[~small]
        if j.size == 0:
            continue
        iters[j] += 1
        Xn = X[j] + d
        Fn = sys.take(j).F(Xn)
        psin = _psi(Fn)
        pred = 0.5 * np.sum(d * (lam[j, None] * d - g[j]), axis=1)
        rho = np.where(pred > 0, (psi[j] - psin) / np.where(pred > 0, pred, 1.0), -1.0)
        acc = rho > 0
        ja = j[acc]
        if ja.size:
            X[ja], F[ja], psi[ja] = Xn[acc], Fn[acc], psin[acc]
            Jn = sys.take(ja).J(X[ja])
            J[ja] = Jn
            g[ja] = _jtf(Jn, F[ja])
            A[ja] = np.einsum("pmi,pmj->pij", Jn, Jn)
            lam[ja] *= np.maximum(1.0 / 3.0, 1.0 - (2.0 * rho[acc] - 1.0) ** 3)
            nu[ja] = 2.0
            conv = ja[np.max(np.abs(g[ja]), axis=1) <= eps1]
            status[conv] = Status.CONVERGED
            active[conv] = False
        jr = j[~acc]
        lam[jr] *= nu[jr]
        nu[jr] *= 2.0
        if callback is not None:
            callback(X, psi)
    return _report(X, iters, psi, status, single)


def dogleg_step(J, F, g, Delta):
    """Dog-leg step inside the trust radius for every row.

    Returns ``(h, branch, predicted_reduction, alpha, beta)`` with ``branch``
    0 for Gauss-Newton, 1 for scaled steepest descent and 2 for the blend.
    """
    Jg = np.einsum("pmn,pn->pm", J, g)
    gg = np.sum(g * g, axis=1)
    JgJg = np.sum(Jg * Jg, axis=1)
    alpha = np.where(JgJg > 0, gg / np.where(JgJg > 0, JgJg, 1.0), 0.0)
    h_sd = -g
    a = alpha[:, None] * h_sd
    h_gn = -np.einsum("pnm,pm->pn", np.linalg.pinv(J), F)
    n_gn = np.linalg.norm(h_gn, axis=1)
    n_a = np.linalg.norm(a, axis=1)
    psi = 0.5 * np.sum(F * F, axis=1)

    gn_branch = n_gn <= Delta
    sd_branch = ~gn_branch & (n_a >= Delta)
    blend = ~gn_branch & ~sd_branch

    ba = h_gn - a
    c = np.sum(a * ba, axis=1)
    bb = np.sum(ba * ba, axis=1)
    rest = Delta**2 - n_a**2
    root = np.sqrt(np.maximum(c * c + bb * rest, 0.0))
    bb_s = np.where(bb > 0, bb, 1.0)
    beta = np.where(c <= 0, (-c + root) / bb_s, rest / np.where(c + root > 0, c + root, 1.0))
    beta = np.where(blend, beta, 0.0)

    g_norm = np.sqrt(gg)
    h = np.where(gn_branch[:, None], h_gn, 0.0)
    h = h + np.where(sd_branch[:, None], Delta[:, None] * h_sd / np.where(g_norm > 0, g_norm, 1.0)[:, None], 0.0)
    h = h + np.where(blend[:, None], a + beta[:, None] * ba, 0.0)

    # model reduction L(0) - L(h); the Gauss-Newton case uses the exact
    # linear-model residual, which equals Psi when that model is consistent
    r_gn = F + np.einsum("pmn,pn->pm", J, h_gn)
    pred_gn = psi - 0.5 * np.sum(r_gn * r_gn, axis=1)
    alpha_s = np.where(alpha > 0, alpha, 1.0)
    pred_sd = Delta * (2.0 * n_a - Delta) / (2.0 * alpha_s)
    pred_bl = 0.5 * alpha * (1.0 - beta) ** 2 * gg + beta * (2.0 - beta) * psi
    pred = np.where(gn_branch, pred_gn, np.where(sd_branch, pred_sd, pred_bl))
    branch = np.where(gn_branch, 0, np.where(sd_branch, 1, 2))
    return h, branch, pred, alpha, beta


def solve_dogleg(sys: ResidualSystem, x0, cfg: SolverConfig | None = None, callback=None,
                 branch_log: list | None = None):
    """Powell's dog-leg trust-region method.

    The radius grows to ``max(Delta, 3 |h|)`` when the gain ratio exceeds
    0.75 and halves below 0.25.  Steps are kept only if they decrease Psi.
    """
    cfg = cfg or SolverConfig()
    eps1 = cfg.eps("eps1", 1e-12)
    eps2 = cfg.eps("eps2", 1e-12)
    eps3 = cfg.eps("eps3", 1e-12)
    X, single = _as_batch(x0)
    P, n = X.shape
    F = sys.F(X)
    J = sys.J(X)
    psi = _psi(F)
    g = _jtf(J, F)
    Delta = np.full(P, float(cfg.delta0))
    iters = np.zeros(P, int)
    status = _status_array(P)
    active = (np.max(np.abs(F), axis=1) > eps1) & (np.max(np.abs(g), axis=1) > eps2)
    status[~active] = Status.CONVERGED

    for _ in range(cfg.k_max):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        h, branch, pred, _, _ = dogleg_step(J[idx], F[idx], g[idx], Delta[idx])
        if branch_log is not None:
            branch_log.append((idx.copy(), branch, np.linalg.norm(h, axis=1)))
        xnorm = np.linalg.norm(X[idx], axis=1)
        hnorm = np.linalg.norm(h, axis=1)
        small = hnorm <= eps3 * (xnorm + eps3)
        status[idx[small]] = Status.CONVERGED
        active[idx[small]] = False
        keep = ~small
        j, h, pred, hnorm = idx[keep], h[keep], pred[keep], hnorm[keep]
        if j.size == 0:
            continue
        iters[j] += 1
        Xn = X[j] + h
        Fn = sys.take(j).F(Xn)
        psin = _psi(Fn)
        rho = np.where(pred > 0, (psi[j] - psin) / np.where(pred > 0, pred, 1.0), -1.0)
        acc = (rho > 0) & (psin < psi[j])
        ja = j[acc]
        if ja.size:
            X[ja], F[ja], psi[ja] = Xn[acc], Fn[acc], psin[acc]
            Jn = sys.take(ja).J(X[ja])
            J[ja] = Jn
            g[ja] = _jtf(Jn, F[ja])
        Delta[j] = np.where(rho > 0.75, np.maximum(Delta[j], 3.0 * hnorm),
                            np.where(rho < 0.25, Delta[j] / 2.0, Delta[j]))
        conv = j[(np.max(np.abs(F[j]), axis=1) <= eps1) | (np.max(np.abs(g[j]), axis=1) <= eps2)]
        status[conv] = Status.CONVERGED
        active[conv] = False
        collapse = j[Delta[j] <= eps3 * (np.linalg.norm(X[j], axis=1) + eps3)]
        collapse = collapse[active[collapse]]
        status[collapse] = Status.TRUST_REGION_COLLAPSE
        active[collapse] = False
        if callback is not None:
            callback(X, psi)
    return _report(X, iters, psi, status, single)


SOLVERS = {"bfgs": solve_bfgs, "lm": solve_lm, "dogleg": solve_dogleg}


def solve(name: str, sys: ResidualSystem, x0, cfg: SolverConfig | None = None):
    try:
        fn = SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
    return fn(sys, x0, cfg)
