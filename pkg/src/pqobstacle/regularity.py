"""Regularity toolkit: discrete harmonic extension, difference-quotient
decay of the gradient gauge, Besov-exponent fitting, the improvement
recurrence for integrability exponents, and an energy-gap probe across
refinements.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .integrand import vp_map
from .mesh import (Mesh, boundary_edges, cell_gradient, format_float,
                   lumped_node_weights, node_neighbors)
from .primal import ObstacleProblem, SolveOptions, energy, project, solve


# ---------------------------------------------------------------------------
# harmonic extension

def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    nv = mesh.dim + 1
    G = mesh.basis_grads
    local = np.einsum("cvd,cwd->cvw", G, G) * mesh.cell_measure[:, None, None]
    rows = np.repeat(mesh.cells, nv, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nv)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.n_nodes, mesh.n_nodes))
    return A.tocsr()


def harmonic_extension(mesh: Mesh, boundary) -> np.ndarray:
    """Discrete harmonic field matching the given boundary values.

    `boundary` is a full-length nodal array whose boundary entries are used.
    The result's gradient pairs to zero against every interior hat, and on
    these non-obtuse triangulations the discrete maximum principle holds.
    """
    boundary = np.asarray(boundary, dtype=float)
    if boundary.shape != (mesh.n_nodes,):
        raise ValueError("boundary data must be a full nodal field")
    if not np.all(np.isfinite(boundary[mesh.boundary_nodes])):
        raise ValueError("boundary values must be finite")
    A = stiffness_matrix(mesh)
    interior = mesh.interior_nodes
    bnd = mesh.boundary_nodes
    u = np.zeros(mesh.n_nodes)
    u[bnd] = boundary[bnd]
    rhs = -A[interior][:, bnd] @ u[bnd]
    u[interior] = spla.spsolve(A[interior][:, interior].tocsc(), rhs)
    return u


def extension_norm_check(meshes, boundary_fn, p: float, q: float) -> dict:
    """Ratio of the extension's gradient q-norm to the boundary p-norms
    across refinements; bounded ratios support the extension estimate.

    Requires q <= p*n/(n-1) with n = 2 (planar meshes with 1D boundary).
    """
    n = 2
    if q > p * n / (n - 1) + 1e-12:
        raise ValueError(f"q must not exceed p*n/(n-1) = {p * n / (n - 1)}")
    ratios = []
    for mesh in meshes:
        if mesh.dim != 2:
            raise ValueError("extension norms need planar meshes")
        f = np.asarray(boundary_fn(*mesh.nodes.T), dtype=float)
        h = harmonic_extension(mesh, f)
        dh = cell_gradient(mesh, h)
        grad_q = float((mesh.cell_measure @ np.linalg.norm(dh, axis=1) ** q) ** (1.0 / q))
        edges = boundary_edges(mesh)
        lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
        slopes = (f[edges[:, 1]] - f[edges[:, 0]]) / lengths
        tang_p = float((lengths @ np.abs(slopes) ** p) ** (1.0 / p))
        val_p = float((lengths @ (0.5 * (np.abs(f[edges[:, 0]]) ** p
                                         + np.abs(f[edges[:, 1]]) ** p))) ** (1.0 / p))
        denom = tang_p * val_p
        ratios.append(grad_q / denom if denom > 0 else float("inf"))
    growth = [b / a for a, b in zip(ratios, ratios[1:])]
    bounded = (not growth) or growth[-1] <= 1.10
    return {"ratios": ratios, "growth": growth, "bounded": bounded}


# ---------------------------------------------------------------------------
# difference quotients and Besov fit

@dataclass
class DifferenceQuotientTable:
    rows: list  # (direction, h, dq_norm)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("direction,h,dq_norm\n")
        for d, h, v in self.rows:
            buf.write(f"{d},{format_float(h)},{format_float(v)}\n")
        return buf.getvalue()

    @property
    def h_values(self):
        return sorted({h for _, h, _ in self.rows})


def _inner_cell_mask(mesh: Mesh, inner_margin: float):
    margins = []
    mask = np.ones(mesh.n_cells, dtype=bool)
    for d in range(mesh.dim):
        res = mesh.resolution[d]
        m = int(round(inner_margin * res))
        if 2 * m >= res:
            raise ValueError("inner margin leaves no cells")
        margins.append(m)
        idx = mesh.cell_multi[:, d]
        mask &= (idx >= m) & (idx < res - m)
    return mask, margins


def difference_quotient_table(mesh: Mesh, u, p: float, inner_margin: float = 0.25,
                              h_steps=(2, 4, 8, 16)) -> DifferenceQuotientTable:
    """Integrals of |tau_h V_p(Du)|^2 over the inner box, per direction and
    per cell-aligned step h."""
    mask, margins = _inner_cell_mask(mesh, inner_margin)
    du = cell_gradient(mesh, u)
    vp = vp_map(p, du)
    rows = []
    for d in range(mesh.dim):
        stride = _cell_axis_stride(mesh, d)
        for steps in h_steps:
            steps = int(steps)
            if steps > margins[d]:
                raise ValueError(f"step {steps} exceeds the inner margin "
                                 f"({margins[d]} cells) along axis {d}")
            base = np.flatnonzero(mask)
            diff = vp[base + steps * stride] - vp[base]
            val = float(mesh.cell_measure[base] @ np.sum(diff * diff, axis=1))
            rows.append((d, steps * mesh.spacing[d], val))
    return DifferenceQuotientTable(rows=rows)


def _cell_axis_stride(mesh: Mesh, direction: int) -> int:
    if mesh.dim == 1:
        return 1
    return 2 if direction == 0 else 2 * mesh.resolution[0]


@dataclass
class BesovFit:
    alpha: float
    slope: float
    residual: float
    n_points: int
    all_zero: bool = False


def besov_fit(table: DifferenceQuotientTable) -> BesovFit:
    """Least-squares slope of log(dq_norm) against log(h); the Besov
    smoothness estimate is half the slope (the table is an L^2 square)."""
    hs = table.h_values
    if len(hs) < 3 or max(hs) < 4.0 * min(hs) - 1e-12:
        raise ValueError("need at least 3 step sizes spanning a factor of 4")
    pts = [(math.log(h), math.log(v)) for _, h, v in table.rows if v > 0.0]
    if not pts:
        return BesovFit(alpha=float("inf"), slope=float("inf"), residual=0.0,
                        n_points=0, all_zero=True)
    x = np.array([a for a, _ in pts])
    y = np.array([b for _, b in pts])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return BesovFit(alpha=float(coef[0]) / 2.0, slope=float(coef[0]),
                    residual=resid, n_points=len(pts))


# ---------------------------------------------------------------------------
# exponent arithmetic

def exponent_iteration(n: int, p: float, q: float, J: int):
    """Integrability-improvement recurrence p_0 = p,
    p_j = n p / (n (1 + 1/p_{j-1} - 1/q) - 1), with its closed-form limit
    n(p-1)/(n-1-n/q) (inf at the degenerate denominator)."""
    if n < 2:
        raise ValueError("the recurrence needs ambient dimension n >= 2")
    if not (1.0 < p <= q):
        raise ValueError("need 1 < p <= q")
    if not q < n * p / (n - 1):
        raise ValueError("need q < n*p/(n-1)")
    if J < 1:
        raise ValueError("need at least one iterate")
    seq = [float(p)]
    for _ in range(J):
        seq.append(n * p / (n * (1.0 + 1.0 / seq[-1] - 1.0 / q) - 1.0))
    denom = n - 1.0 - n / q
    limit = float("inf") if denom <= 0.0 else n * (p - 1.0) / denom
    return np.array(seq), limit


def pbar(n: int, p: float, q: float) -> float:
    """Limiting integrability exponent in the supercritical regime
    n p/(n-1) <= q < p* (p* = n p/(n-p) for p < n, else unbounded)."""
    if n < 2:
        raise ValueError("need ambient dimension n >= 2")
    if q < n * p / (n - 1) - 1e-12:
        raise ValueError("q below n*p/(n-1): use the recurrence regime instead")
    if p < n and q >= n * p / (n - p):
        raise ValueError("q must stay below the Sobolev exponent n*p/(n-p)")
    return n * p / (n - (p / (p - 1.0)) * (1.0 - n * (1.0 / p - 1.0 / q)))


def predicted_integrability(n: int, p: float, alpha: float, beta: float) -> float:
    """t = p*n/(n - p*beta), the integrability gained from a Besov exponent
    alpha sampled at rate beta < alpha."""
    if not (0.0 < beta < alpha < 1.0):
        raise ValueError("need 0 < beta < alpha < 1")
    if p * beta >= n:
        raise ValueError("need p*beta < n")
    return p * n / (n - p * beta)


def embedding_check(mesh: Mesh, u, p: float, q: float, h_steps=(2, 4, 8, 16)) -> dict:
    """Ratios ||tau_h u||_{L^q(inner)} / (h^alpha ||Du||_{L^p}) with
    alpha = 1 - n(1/p - 1/q); bounded ratios reflect the Sobolev-Besov
    embedding."""
    if q <= p:
        raise ValueError("need q > p")
    n = mesh.dim
    alpha = 1.0 - n * (1.0 / p - 1.0 / q)
    if alpha <= 0.0:
        raise ValueError(f"embedding exponent alpha = {alpha} must be positive")
    u = np.asarray(u, dtype=float)
    du = cell_gradient(mesh, u)
    grad_p = float((mesh.cell_measure @ np.linalg.norm(du, axis=1) ** p) ** (1.0 / p))
    weights = lumped_node_weights(mesh)
    max_steps = int(max(h_steps))
    inner = np.ones(mesh.n_nodes, dtype=bool)
    for d in range(n):
        idx = mesh.node_multi[:, d]
        inner &= (idx >= max_steps) & (idx <= mesh.resolution[d] - max_steps)
    ratios = []
    for d in range(n):
        stride = 1 if (n == 1 or d == 0) else mesh.resolution[0] + 1
        for steps in h_steps:
            steps = int(steps)
            base = np.flatnonzero(inner)
            tau = u[base + steps * stride] - u[base]
            h = steps * mesh.spacing[d]
            norm_q = float((weights[base] @ np.abs(tau) ** q) ** (1.0 / q))
            ratios.append((d, h, norm_q / (h ** alpha * grad_p) if grad_p > 0 else 0.0))
    max_ratio = max(r for _, _, r in ratios)
    return {"alpha": alpha, "ratios": ratios, "max_ratio": max_ratio,
            "ok": math.isfinite(max_ratio)}


# ---------------------------------------------------------------------------
# refinement gap probe

def jacobi_average(mesh: Mesh, u) -> np.ndarray:
    """One nodal averaging pass: interior values move half-way to their
    neighbour mean; boundary values stay."""
    indptr, indices = node_neighbors(mesh)
    u = np.asarray(u, dtype=float)
    out = u.copy()
    for i in mesh.interior_nodes:
        nb = indices[indptr[i]:indptr[i + 1]]
        out[i] = 0.5 * (u[i] + u[nb].mean())
    return out


def eval_p1(mesh: Mesh, values, points) -> np.ndarray:
    """Evaluate the P1 interpolant of a nodal field at arbitrary points."""
    values = np.asarray(values, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.dim == 1:
        return np.interp(points[:, 0], mesh.nodes[:, 0], values)
    (lx0, _), (ly0, _) = mesh.bounds
    hx, hy = mesh.spacing
    nx, ny = mesh.resolution
    fx = np.clip((points[:, 0] - lx0) / hx, 0.0, nx - 1e-12)
    fy = np.clip((points[:, 1] - ly0) / hy, 0.0, ny - 1e-12)
    i = np.minimum(fx.astype(int), nx - 1)
    j = np.minimum(fy.astype(int), ny - 1)
    x = fx - i
    y = fy - j

    def nid(a, b):
        return b * (nx + 1) + a

    v00 = values[nid(i, j)]
    v10 = values[nid(i + 1, j)]
    v11 = values[nid(i + 1, j + 1)]
    v01 = values[nid(i, j + 1)]
    lower = x >= y  # triangle (00, 10, 11), else (00, 11, 01)
    out = np.where(lower,
                   v00 + x * (v10 - v00) + y * (v11 - v10),
                   v00 + y * (v01 - v00) + x * (v11 - v01))
    return out


def lavrentiev_probe(problem: ObstacleProblem, refinement_levels,
                     solve_opts: SolveOptions | None = None) -> dict:
    """Relative gap between the finest-level minimum and the best smoothed
    lift of coarse-level solutions.

    Coarse levels must nest into the problem's mesh (resolutions dividing
    the fine ones); obstacle and datum transfer by sampling the fine nodal
    fields at the coincident coarse nodes.  A persistent positive gap across
    refinements flags a potential smooth-vs-energy-class discrepancy.
    """
    from .mesh import make_mesh

    levels = sorted(int(r) for r in refinement_levels)
    mesh = problem.mesh
    fine_res = mesh.resolution[0]
    if any(fine_res % r for r in levels):
        raise ValueError("refinement levels must divide the fine resolution")
    insufficient = len(levels) < 2
    fine_sol = solve(problem, solve_opts)
    candidates = []
    for res in levels:
        if res == fine_res:
            coarse_mesh, coarse_problem, coarse_u = mesh, problem, fine_sol.u
        else:
            coarse_mesh = make_mesh(mesh.dim, mesh.bounds, [res] * mesh.dim)
            psi_c = eval_p1(mesh, problem.psi, coarse_mesh.nodes)
            u0_c = eval_p1(mesh, problem.u0, coarse_mesh.nodes)
            coarse_problem = ObstacleProblem(coarse_mesh, problem.integrand, psi_c, u0_c)
            coarse_u = solve(coarse_problem, solve_opts).u
        lifted = eval_p1(coarse_mesh, coarse_u, mesh.nodes)
        smoothed = jacobi_average(mesh, lifted)
        candidates.append(energy(problem, project(problem, smoothed)))
    best_smoothed = min(candidates)
    gap = (best_smoothed - fine_sol.energy) / max(1.0, abs(fine_sol.energy))
    return {"gap": float(gap), "fine_energy": fine_sol.energy,
            "smoothed_energy": float(best_smoothed),
            "insufficient_levels": insufficient}


# ---------------------------------------------------------------------------
# aggregate report

@dataclass
class RegularityReport:
    h_values: list
    dq_rows: list
    fitted_alpha: float
    fit_residual: float
    exponent_sequence: list = field(default_factory=list)
    exponent_limit: float | None = None
    pbar: float | None = None
    embedding_ok: bool | None = None
    max_embedding_ratio: float | None = None
    lavrentiev_gap: float | None = None
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        def enc(x):
            if x is None:
                return None
            if isinstance(x, float) and math.isinf(x):
                return "inf"
            return x

        doc = {"h_values": self.h_values,
               "dq_rows": [[d, h, v] for d, h, v in self.dq_rows],
               "fitted_alpha": enc(self.fitted_alpha),
               "fit_residual": self.fit_residual,
               "exponent_sequence": list(self.exponent_sequence),
               "exponent_limit": enc(self.exponent_limit),
               "pbar": enc(self.pbar),
               "embedding_ok": self.embedding_ok,
               "max_embedding_ratio": self.max_embedding_ratio,
               "lavrentiev_gap": self.lavrentiev_gap,
               "notes": self.notes}
        return json.dumps(doc, sort_keys=True)
