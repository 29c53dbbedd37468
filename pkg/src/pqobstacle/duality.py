"""Dual fields, the discrete obstacle pairing, and duality-gap certificates.

The dual field sigma = F'(Du) is cellwise constant; its hat pairings m_i
act as -div sigma on the nodal hats, so the divergence-sign, pairing, dual
objective, and variational-inequality checks are all exact linear algebra
on the P1 complex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .integrand import conjugate, eval_integrand, grad_integrand
from .mesh import Mesh, cell_gradient, hat_pairing, integrate_cells
from .primal import ObstacleProblem, energy

_CLAMP = 1e-14


@dataclass
class DualCertificate:
    sigma: np.ndarray
    m: np.ndarray
    pairing: float
    dual_objective: float
    gap: float
    div_violation: float
    fy_residual_max: float
    complementarity_max: float

    def to_json(self) -> str:
        doc = {"gap": self.gap,
               "dual_objective": self.dual_objective,
               "pairing": self.pairing,
               "div_violation": self.div_violation,
               "fy_residual_max": self.fy_residual_max,
               "complementarity_max": self.complementarity_max}
        return json.dumps(doc, sort_keys=True)


@dataclass
class DivergenceReport:
    m: np.ndarray
    div_violation: float
    ok: bool


def dual_field(problem: ObstacleProblem, u) -> np.ndarray:
    """sigma_T = F'(Du|_T) per cell."""
    return grad_integrand(problem.integrand, cell_gradient(problem.mesh, u))


def check_divergence_sign(mesh: Mesh, sigma, tol: float = 1e-8) -> DivergenceReport:
    """ok iff m_i >= -tol at every interior node, i.e. -div sigma acts
    nonnegatively on the nonneg nodal hats."""
    m = hat_pairing(mesh, sigma)
    interior = mesh.interior_nodes
    viol = float(np.maximum(-m[interior], 0.0).max(initial=0.0))
    if viol < _CLAMP:
        viol = 0.0
    return DivergenceReport(m=m, div_violation=viol, ok=bool(viol <= tol))


def pairing(mesh: Mesh, sigma, psi, u0) -> float:
    """sum_interior (psi_i - u0_i) m_i + int <sigma, Du0>.

    For fields z agreeing with u0 on the boundary this reduces to
    int <sigma, Dz> exactly (discrete integration by parts).
    """
    m = hat_pairing(mesh, sigma)
    interior = mesh.interior_nodes
    du0 = cell_gradient(mesh, u0)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 1:
        sigma = sigma[:, None]
    return float((psi - u0)[interior] @ m[interior]
                 + integrate_cells(mesh, np.sum(sigma * du0, axis=1)))


def dual_objective(problem: ObstacleProblem, sigma, tol: float = 1e-10) -> float:
    """pairing(sigma, psi, u0) - sum_T |T| F*(sigma_T)."""
    fstar = conjugate(problem.integrand, np.asarray(sigma, dtype=float), tol=tol)
    return (pairing(problem.mesh, sigma, problem.psi, problem.u0)
            - integrate_cells(problem.mesh, np.atleast_1d(fstar)))


def duality_gap(problem: ObstacleProblem, u, tol: float = 1e-10) -> DualCertificate:
    """Certificate at sigma = F'(Du).

    gap = energy(u) - dual_objective(sigma) splits into the cellwise
    Fenchel-Young defect (always >= 0) plus the nodal complementarity sum
    (u - psi) . m, so it certifies optimality only together with a small
    div_violation; at a discrete minimizer both pieces vanish.
    """
    mesh = problem.mesh
    du = cell_gradient(mesh, u)
    sigma = grad_integrand(problem.integrand, du)
    m = hat_pairing(mesh, sigma)
    interior = mesh.interior_nodes
    E = energy(problem, u)
    dobj = dual_objective(problem, sigma, tol=tol)
    gap = E - dobj
    if abs(gap) < _CLAMP * (1.0 + abs(E)):
        gap = 0.0
    fy = (eval_integrand(problem.integrand, du)
          + conjugate(problem.integrand, sigma, tol=tol)
          - np.sum(sigma * du, axis=1))
    comp = np.abs((u - problem.psi)[interior] * m[interior])
    viol = float(np.maximum(-m[interior], 0.0).max(initial=0.0))
    if viol < _CLAMP:
        viol = 0.0
    return DualCertificate(sigma=sigma, m=m,
                           pairing=pairing(mesh, sigma, problem.psi, problem.u0),
                           dual_objective=dobj, gap=gap, div_violation=viol,
                           fy_residual_max=float(np.max(np.abs(fy))),
                           complementarity_max=float(comp.max(initial=0.0)))


def check_vi(problem: ObstacleProblem, u, z, tol: float = 1e-12) -> float:
    """int <F'(Du), Dz - Du> for an admissible competitor z.

    Nonnegative (up to the solver residual) when u is the discrete
    minimizer.
    """
    z = np.asarray(z, dtype=float)
    bnd = problem.mesh.boundary_nodes
    if np.any(z < problem.psi - 1e-12):
        raise ValueError("competitor lies below the obstacle")
    if np.any(np.abs(z[bnd] - problem.u0[bnd]) > 1e-12):
        raise ValueError("competitor does not match the boundary datum")
    sigma = dual_field(problem, u)
    dz = cell_gradient(problem.mesh, z)
    du = cell_gradient(problem.mesh, u)
    return float(integrate_cells(problem.mesh, np.sum(sigma * (dz - du), axis=1)))
