"""Minimization of the discrete energy sum_T |T| F(Du_T) over nodal fields
constrained to lie above an obstacle, with fixed boundary values.

The solver is projected gradient with Armijo backtracking (spectral trial
steps), finished by nodewise projected Gauss-Seidel sweeps that push the
stationarity residual to roundoff on the meshes used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .integrand import IntegrandSpec, eval_integrand, grad_integrand
from .mesh import Mesh, cell_gradient, hat_pairing, node_cell_incidence


def normalize_datum(mesh: Mesh, u0, psi) -> np.ndarray:
    """Nodewise max(u0, psi): the admissible replacement boundary datum.

    In 1D the energy of the result is bounded by the sum of the two input
    energies for radial monotone integrands; in 2D the P1 interpolation of
    the max can mix the two gradients inside a cell, so the bound is exact
    only for quadratic growth.
    """
    u0 = np.asarray(u0, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if u0.shape != (mesh.n_nodes,) or psi.shape != (mesh.n_nodes,):
        raise ValueError("datum and obstacle must be nodal fields on the same mesh")
    return np.maximum(u0, psi)


@dataclass(frozen=True, eq=False)
class ObstacleProblem:
    mesh: Mesh
    integrand: IntegrandSpec
    psi: np.ndarray
    u0: np.ndarray
    free_nodes: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.integrand.dim != self.mesh.dim:
            raise ValueError("integrand dimension must match the mesh")
        psi = np.asarray(self.psi, dtype=float)
        u0 = np.asarray(self.u0, dtype=float)
        bnd = self.mesh.boundary_nodes
        if np.any(u0[bnd] < psi[bnd] - 1e-14):
            raise ValueError("infeasible problem: obstacle exceeds the boundary datum "
                             "on the boundary")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "u0", normalize_datum(self.mesh, u0, psi))
        if self.free_nodes is None:
            object.__setattr__(self, "free_nodes", self.mesh.interior_nodes)


@dataclass
class Solution:
    u: np.ndarray
    energy: float
    iterations: int
    residual: float
    converged: bool
    trace: list = field(default_factory=list, repr=False)


@dataclass
class SolveOptions:
    max_iters: int = 2_000
    tol: float | None = None       # None: 1e-8 for p=q=2, 1e-6 otherwise
    step0: float = 1.0
    armijo: float = 1e-4
    backtrack: float = 0.5
    cg_subspace: bool = True
    cg_max_iters: int = 1_500
    polish_sweeps: int = 30
    gap_check_every: int = 0       # 0 disables the duality-gap stop
    gap_tol: float = 1e-10

    def resolved_tol(self, F: IntegrandSpec) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-8 if (F.p == 2.0 and F.q == 2.0) else 1e-6


def energy(problem: ObstacleProblem, u) -> float:
    """sum_T |T| F(Du_T)."""
    du = cell_gradient(problem.mesh, u)
    return float(problem.mesh.cell_measure @ eval_integrand(problem.integrand, du))


def energy_gradient(problem: ObstacleProblem, u) -> np.ndarray:
    """Nodal gradient of the discrete energy; zero at boundary nodes."""
    du = cell_gradient(problem.mesh, u)
    g = hat_pairing(problem.mesh, grad_integrand(problem.integrand, du))
    g[problem.mesh.boundary_nodes] = 0.0
    return g


def project(problem: ObstacleProblem, u) -> np.ndarray:
    """Clamp free nodes to the obstacle and reset boundary values."""
    out = np.maximum(np.asarray(u, dtype=float), problem.psi)
    bnd = problem.mesh.boundary_nodes
    out[bnd] = problem.u0[bnd]
    return out


def _residual(problem: ObstacleProblem, u, g) -> float:
    return float(np.max(np.abs(project(problem, u - g) - u)))


def solve(problem: ObstacleProblem, opts: SolveOptions | None = None) -> Solution:
    """Projected-gradient descent from project(u0).

    Each outer iteration takes a projected-gradient step (spectral trial
    length, monotone Armijo backtracking) and then an optional subspace
    acceleration step: truncated CG on the quadratic model restricted to the
    currently inactive nodes, with Hessian action taken from gradient
    differences.  Both steps pass the same Armijo test, so the energy is
    non-increasing.  Stops on the projected-gradient residual (or the
    duality gap when enabled), then polishes with projected Gauss-Seidel
    sweeps.
    """
    if opts is None:
        opts = SolveOptions()
    tol = opts.resolved_tol(problem.integrand)
    u = project(problem, problem.u0)
    g = energy_gradient(problem, u)
    E = energy(problem, u)
    alpha = opts.step0
    trace = []
    it = 0
    stalled = 0
    for it in range(opts.max_iters):
        res = _residual(problem, u, g)
        trace.append((it, E, res))
        if res <= tol or stalled >= 3:
            break
        if opts.gap_check_every and it and it % opts.gap_check_every == 0:
            from .duality import duality_gap
            cert = duality_gap(problem, u)
            if abs(cert.gap) <= opts.gap_tol * (1.0 + abs(E)):
                break
        E_before = E
        # projected-gradient step
        d = project(problem, u - alpha * g) - u
        gtd = float(g @ d)
        lam = 1.0
        while lam > 1e-18:
            cand = u + lam * d
            E_cand = energy(problem, cand)
            if E_cand <= E + opts.armijo * lam * gtd:
                g_new = energy_gradient(problem, cand)
                s = cand - u
                y = g_new - g
                sy = float(s @ y)
                alpha = (min(max(float(s @ s) / sy, 1e-12), 1e12)
                         if sy > 0 else alpha * 2.0)
                u, g, E = cand, g_new, E_cand
                break
            lam *= opts.backtrack
        # subspace acceleration on the inactive set
        if opts.cg_subspace:
            u, g, E = _subspace_step(problem, u, g, E, opts,
                                     forcing=min(0.1, max(res, 1e-14)))
        stalled = stalled + 1 if E >= E_before - 1e-18 * (1.0 + abs(E)) else 0
    res = _residual(problem, u, g)
    if res > tol and opts.polish_sweeps:
        u, E, res, extra = _gauss_seidel_polish(problem, u, tol, opts.polish_sweeps)
        it += extra
        trace.append((it, E, res))
    return Solution(u=u, energy=E, iterations=it, residual=res,
                    converged=bool(res <= tol), trace=trace)


def _free_mask(problem: ObstacleProblem, u, g) -> np.ndarray:
    scale = 1.0 + float(np.max(np.abs(problem.psi)))
    at_obstacle = (u - problem.psi) <= 1e-12 * scale
    mask = np.zeros(len(u), dtype=bool)
    mask[problem.free_nodes] = True
    mask &= ~(at_obstacle & (g > 0.0))
    return mask


def _hessian_action(problem: ObstacleProblem, u, g, exact_quadratic: bool):
    if exact_quadratic:
        def hv(v):
            return energy_gradient(problem, u + v) - g
    else:
        unorm = 1.0 + float(np.max(np.abs(u)))

        def hv(v):
            vnorm = float(np.max(np.abs(v)))
            if vnorm == 0.0:
                return np.zeros_like(v)
            eps = 1e-6 * unorm / vnorm
            return (energy_gradient(problem, u + eps * v)
                    - energy_gradient(problem, u - eps * v)) / (2.0 * eps)
    return hv


def _subspace_step(problem: ObstacleProblem, u, g, E, opts: SolveOptions, forcing: float):
    free = _free_mask(problem, u, g)
    nf = int(free.sum())
    if nf == 0:
        return u, g, E
    exact = problem.integrand.family == "power" and problem.integrand.p == 2.0
    hv = _hessian_action(problem, u, g, exact)
    b = np.where(free, -g, 0.0)
    x = np.zeros_like(u)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    if rr == 0.0:
        return u, g, E
    rtol2 = (forcing ** 2) * rr
    for _ in range(min(2 * nf, opts.cg_max_iters)):
        Ap = np.where(free, hv(p), 0.0)
        pAp = float(p @ Ap)
        if pAp <= 1e-18 * float(p @ p):
            break
        a = rr / pAp
        x += a * p
        r -= a * Ap
        rr_new = float(r @ r)
        if rr_new <= rtol2:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    if not np.any(x):
        return u, g, E
    t = 1.0
    while t > 1e-14:
        cand = project(problem, u + t * x)
        gtd = float(g @ (cand - u))
        if gtd < 0.0:
            E_cand = energy(problem, cand)
            if E_cand <= E + opts.armijo * gtd:
                return cand, energy_gradient(problem, cand), E_cand
        t *= 0.5
    return u, g, E


def _gauss_seidel_polish(problem: ObstacleProblem, u, tol, max_sweeps):
    """Sequential nodewise exact minimization (projected nonlinear
    Gauss-Seidel).  Each free node solves a scalar convex problem on its
    cell patch by safeguarded Newton."""
    mesh = problem.mesh
    F = problem.integrand
    indptr, cell_ids, local = node_cell_incidence(mesh)
    u = u.copy()
    du = cell_gradient(mesh, u)
    free = problem.free_nodes
    for sweep in range(max_sweeps):
        max_move = 0.0
        for i in free:
            sl = slice(indptr[i], indptr[i + 1])
            cs = cell_ids[sl]
            phi_g = mesh.basis_grads[cs, local[sl], :]      # (k, dim)
            meas = mesh.cell_measure[cs]
            base = du[cs]

            def resid(t):
                return float(np.sum(meas[:, None] * grad_integrand(F, base + t * phi_g)
                                    * phi_g))

            t = _scalar_stationary_point(resid)
            t = max(t, problem.psi[i] - u[i])
            if t != 0.0:
                u[i] += t
                du[cs] = base + t * phi_g
                max_move = max(max_move, abs(t))
        g = energy_gradient(problem, u)
        res = _residual(problem, u, g)
        if res <= tol or max_move == 0.0:
            return u, energy(problem, u), res, sweep + 1
    g = energy_gradient(problem, u)
    return u, energy(problem, u), _residual(problem, u, g), max_sweeps


def _scalar_stationary_point(resid, t0: float = 0.0) -> float:
    """Root of a nondecreasing scalar residual; Newton with bisection fallback."""
    r0 = resid(t0)
    if r0 == 0.0:
        return t0
    # bracket the root
    step = 1.0
    if r0 > 0:
        lo, hi = t0 - step, t0
        while resid(lo) > 0:
            step *= 2.0
            lo -= step
            if step > 1e12:
                return t0
    else:
        lo, hi = t0, t0 + step
        while resid(hi) < 0:
            step *= 2.0
            hi += step
            if step > 1e12:
                return t0
    t = 0.5 * (lo + hi)
    for _ in range(100):
        r = resid(t)
        if r > 0:
            hi = t
        else:
            lo = t
        h = 1e-7 * (1.0 + abs(t))
        dr = (resid(t + h) - resid(t - h)) / (2.0 * h)
        t_new = t - r / dr if dr > 0 else 0.5 * (lo + hi)
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-16 * (1.0 + abs(t)):
            return t_new
        t = t_new
    return t


# ---------------------------------------------------------------------------
# brute-force oracle

def oracle_solve(problem: ObstacleProblem, newton_iters: int = 60) -> Solution:
    """Ground-truth solve by enumerating every active set (<= 12 free nodes).

    For each active set the equality-constrained convex problem is solved by
    damped Newton on the inactive coordinates, with gradient and Hessian
    taken from finite differences of the energy, independent of the assembled
    gradient used by :func:`solve`.  The feasible candidate with valid
    multiplier signs and minimal energy wins.
    """
    free = problem.free_nodes
    m = len(free)
    if m > 12:
        raise NotImplementedError("oracle enumeration supports at most 12 free nodes")
    psi = problem.psi
    best = None
    base = project(problem, problem.u0)
    for k in range(m + 1):
        for active in combinations(range(m), k):
            active = np.array(active, dtype=int)
            inactive = np.setdiff1d(np.arange(m), active)
            u = base.copy()
            u[free[active]] = psi[free[active]]
            u = _newton_on_subset(problem, u, free[inactive], newton_iters)
            if u is None:
                continue
            if np.any(u[free] < psi[free] - 1e-9):
                continue
            g = _fd_gradient(problem, u, free)
            if len(inactive) and np.any(np.abs(g[inactive]) > 1e-6):
                continue
            if len(active) and np.any(g[active] < -1e-6):
                continue
            E = energy(problem, u)
            if best is None or E < best[0]:
                best = (E, u)
    if best is None:
        raise RuntimeError("oracle found no KKT-consistent active set")
    E, u = best
    g = energy_gradient(problem, u)
    return Solution(u=u, energy=E, iterations=-1, residual=_residual(problem, u, g),
                    converged=True)


def _fd_gradient(problem, u, nodes, h: float = 1e-6):
    g = np.empty(len(nodes))
    for j, i in enumerate(nodes):
        up = u.copy()
        um = u.copy()
        up[i] += h
        um[i] -= h
        g[j] = (energy(problem, up) - energy(problem, um)) / (2.0 * h)
    return g


def _newton_on_subset(problem, u, nodes, max_iters):
    if len(nodes) == 0:
        return u
    u = u.copy()
    for _ in range(max_iters):
        g = _fd_gradient(problem, u, nodes)
        if np.max(np.abs(g)) <= 1e-10:
            return u
        H = _fd_hessian(problem, u, nodes)
        try:
            step = np.linalg.solve(H + 1e-12 * np.eye(len(nodes)), g)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        E = energy(problem, u)
        while lam > 1e-12:
            cand = u.copy()
            cand[nodes] -= lam * step
            if energy(problem, cand) <= E - 1e-10 * lam * float(g @ step):
                u = cand
                break
            lam *= 0.5
        else:
            return u
    return u


def _fd_hessian(problem, u, nodes, h: float = 1e-5):
    n = len(nodes)
    H = np.empty((n, n))
    E0 = energy(problem, u)
    for a in range(n):
        for b in range(a, n):
            upp = u.copy(); upp[nodes[a]] += h; upp[nodes[b]] += h
            upm = u.copy(); upm[nodes[a]] += h; upm[nodes[b]] -= h
            ump = u.copy(); ump[nodes[a]] -= h; ump[nodes[b]] += h
            umm = u.copy(); umm[nodes[a]] -= h; umm[nodes[b]] -= h
            if a == b:
                up = u.copy(); up[nodes[a]] += h
                um = u.copy(); um[nodes[a]] -= h
                H[a, a] = (energy(problem, up) - 2.0 * E0 + energy(problem, um)) / h ** 2
            else:
                H[a, b] = H[b, a] = (energy(problem, upp) - energy(problem, upm)
                                     - energy(problem, ump) + energy(problem, umm)) / (4.0 * h ** 2)
    return H
