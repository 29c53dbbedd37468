"""Run configuration: a single JSON document describing the domain, the
integrand, obstacle/boundary data (presets or CSV), solver and pipeline
parameters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import integrand as itg
from .mesh import Mesh, interpolate, make_mesh, read_nodal_csv
from .primal import ObstacleProblem, SolveOptions


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    domain: dict
    integrand: dict
    obstacle: dict = field(default_factory=lambda: {"preset": "none"})
    boundary: dict = field(default_factory=lambda: {"preset": "zero"})
    solver: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    probe: dict = field(default_factory=dict)
    conjugate: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 42

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        return cls.from_dict(doc, base_dir=path.parent)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "RunConfig":
        if "domain" not in doc or "integrand" not in doc:
            raise ConfigError("config needs 'domain' and 'integrand' sections")
        cfg = cls(domain=doc["domain"], integrand=doc["integrand"],
                  obstacle=doc.get("obstacle", {"preset": "none"}),
                  boundary=doc.get("boundary", {"preset": "zero"}),
                  solver=doc.get("solver", {}), sweep=doc.get("sweep", {}),
                  probe=doc.get("probe", {}), conjugate=doc.get("conjugate", {}),
                  output=doc.get("output", {}), seed=int(doc.get("seed", 42)))
        cfg._base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        return cfg

    # -- builders ----------------------------------------------------------

    def build_mesh(self) -> Mesh:
        d = self.domain
        try:
            return make_mesh(int(d["dim"]), d["bounds"], d["resolution"])
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"bad domain section: {e}") from e

    def build_integrand(self) -> itg.IntegrandSpec:
        spec = self.integrand
        fam = spec.get("family")
        dim = int(self.domain.get("dim", 1))
        try:
            if fam == "power":
                return itg.power_integrand(float(spec["p"]), dim=dim)
            if fam == "anisotropic_log":
                return itg.anisotropic_log_integrand(float(spec["p"]), float(spec["q"]),
                                                     float(spec.get("alpha_log", 0.0)))
            if fam == "truncated_conjugate":
                return itg.truncated_power_integrand(float(spec["p"]),
                                                     float(spec["trunc_radius"]), dim=dim)
            if fam == "moreau_smoothed":
                return itg.moreau_power_integrand(float(spec["p"]),
                                                  float(spec["trunc_radius"]),
                                                  float(spec["moreau_eps"]), dim=dim)
            if fam == "tabulated":
                return load_tabulated_csv(self._resolve(spec["csv"]))
        except ConfigError:
            raise
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"bad integrand section: {e}") from e
        raise ConfigError(f"unknown integrand family {fam!r}")

    def build_field(self, mesh: Mesh, section: dict, role: str) -> np.ndarray:
        if "csv" in section:
            path = self._resolve(section["csv"])
            if not path.exists():
                raise ConfigError(f"{role} file {path} does not exist")
            return read_nodal_csv(mesh, path.read_text(encoding="utf-8"))
        preset = section.get("preset", "zero" if role == "boundary" else "none")
        if preset == "zero":
            return np.zeros(mesh.n_nodes)
        if preset == "none":
            return np.full(mesh.n_nodes, -1e6)
        if preset == "constant":
            return np.full(mesh.n_nodes, float(section.get("value", 0.0)))
        if preset == "parabola":
            return interpolate(mesh, lambda *xs: 0.25 - sum(x * x for x in xs))
        if preset == "affine":
            coeffs = [float(c) for c in section.get("coefficients", [0.0])]
            if len(coeffs) != mesh.dim + 1:
                raise ConfigError(f"affine preset needs {mesh.dim + 1} coefficients")
            return interpolate(mesh, lambda *xs: coeffs[0]
                               + sum(c * x for c, x in zip(coeffs[1:], xs)))
        raise ConfigError(f"unknown {role} preset {preset!r}")

    def build_problem(self) -> ObstacleProblem:
        mesh = self.build_mesh()
        F = self.build_integrand()
        psi = self.build_field(mesh, self.obstacle, "obstacle")
        u0 = self.build_field(mesh, self.boundary, "boundary")
        try:
            return ObstacleProblem(mesh, F, psi, u0)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def solve_options(self) -> SolveOptions:
        s = self.solver
        opts = SolveOptions()
        if "max_iters" in s:
            opts.max_iters = int(s["max_iters"])
        if "tol" in s:
            opts.tol = float(s["tol"])
        if "step0" in s:
            opts.step0 = float(s["step0"])
        if "polish_sweeps" in s:
            opts.polish_sweeps = int(s["polish_sweeps"])
        return opts

    def _resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self._base_dir / p


def load_tabulated_csv(path: Path) -> itg.IntegrandSpec:
    """CSV with header xi_0[,xi_1],F[,dF_0[,dF_1]]; decimal points, no locale."""
    lines = [ln for ln in path.read_text(encoding="utf-8").strip().splitlines() if ln]
    header = [h.strip() for h in lines[0].split(",")]
    xi_cols = [i for i, h in enumerate(header) if h.startswith("xi")]
    grad_cols = [i for i, h in enumerate(header) if h.startswith("dF")]
    if not xi_cols or "F" not in header:
        raise ConfigError("tabulated CSV needs xi_* columns and an F column")
    f_col = header.index("F")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    data = np.asarray(rows, dtype=float)
    points = data[:, xi_cols]
    values = data[:, f_col]
    grads = data[:, grad_cols] if grad_cols else None
    return itg.tabulated_integrand(points, values, grads, dim=len(xi_cols))
