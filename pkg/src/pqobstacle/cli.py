"""Command-line entry point.

Verbs: solve, sweep, probe, conjugate, report.  Every command is driven by
a JSON config (--config), writes machine-readable artifacts into --out, and
is deterministic for a fixed config and seed.  Exit codes: 0 success,
2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .duality import duality_gap
from .errors import ConvergenceError, ConvexityError
from .integrand import (conjugate_with_argmax, eval_integrand, require_convexity)
from .mesh import cell_field_csv, format_float, mesh_json, nodal_field_csv
from .primal import solve
from .regularity import (RegularityReport, besov_fit, difference_quotient_table,
                         embedding_check, exponent_iteration, lavrentiev_probe, pbar)
from .serialize import atomic_write_text, write_json
from .sweep import run_sweep

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pqobstacle",
        description="Solve discretized obstacle problems for convex (p,q)-growth "
                    "energies and certify the solutions by convex duality.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("solve", cmd_solve), ("sweep", cmd_sweep), ("probe", cmd_probe),
                     ("conjugate", cmd_conjugate), ("report", cmd_report)]:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON run configuration")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (overrides the config)")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ConvexityError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


def _load(args, need_config=True):
    if args.config is None:
        if need_config:
            raise ConfigError("--config is required for this command")
        cfg = None
    else:
        cfg = RunConfig.from_file(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
    outdir = args.out
    if outdir is None and cfg is not None:
        outdir = Path(cfg.output.get("directory", "out"))
    if outdir is None:
        raise ConfigError("an output directory is required (--out)")
    return cfg, Path(outdir)


def _build_problem(cfg):
    problem = cfg.build_problem()
    require_convexity(problem.integrand)
    return problem


def cmd_solve(args) -> int:
    cfg, outdir = _load(args)
    problem = _build_problem(cfg)
    sol = solve(problem, cfg.solve_options())
    cert = duality_gap(problem, sol.u)
    mesh = problem.mesh
    atomic_write_text(outdir / "mesh.json", mesh_json(mesh) + "\n")
    atomic_write_text(outdir / "solution.csv", nodal_field_csv(mesh, sol.u))
    atomic_write_text(outdir / "obstacle.csv", nodal_field_csv(mesh, problem.psi))
    atomic_write_text(outdir / "sigma.csv", cell_field_csv(mesh, cert.sigma))
    atomic_write_text(outdir / "certificate.json", cert.to_json() + "\n")
    atomic_write_text(outdir / "trace.csv", _trace_csv(sol.trace))
    ok = (sol.converged
          and cert.gap <= max(1e-8, 1e-6 * (1.0 + abs(sol.energy)))
          and cert.div_violation <= 1e-8
          and cert.complementarity_max <= 1e-6)
    print(f"solve: energy={sol.energy:.12g} iters={sol.iterations} "
          f"residual={sol.residual:.3e} gap={cert.gap:.3e} "
          f"{'ok' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def _trace_csv(trace) -> str:
    buf = io.StringIO()
    buf.write("iteration,energy,residual\n")
    for it, e, r in trace:
        buf.write(f"{it},{format_float(e)},{format_float(r)}\n")
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cfg, outdir = _load(args)
    problem = _build_problem(cfg)
    sw = cfg.sweep
    k_list = sw.get("k_list")
    if not k_list:
        raise ConfigError("sweep.k_list must be a nonempty increasing list")
    report = run_sweep(problem, k_list,
                       box_radius=float(sw.get("box_radius", 10.0)),
                       r_scale=float(sw.get("r_scale", 1.0)),
                       moreau=bool(sw.get("moreau", False)),
                       solve_opts=cfg.solve_options(), seed=cfg.seed)
    atomic_write_text(outdir / "sweep.csv", report.to_csv())
    write_json(outdir / "sweep_verdicts.json", report.verdicts)
    ok = report.verdicts["all_ok"]
    print(f"sweep: {len(report.records)} records, "
          f"stabilization_index={report.stabilization_index}, "
          f"{'ok' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_probe(args) -> int:
    cfg, outdir = _load(args)
    problem = _build_problem(cfg)
    pr = cfg.probe
    inner_margin = float(pr.get("inner_margin", 0.25))
    h_steps = [int(s) for s in pr.get("h_steps", (2, 4, 8, 16))]
    sol = solve(problem, cfg.solve_options())
    F = problem.integrand
    try:
        table = difference_quotient_table(problem.mesh, sol.u, F.p,
                                          inner_margin=inner_margin, h_steps=h_steps)
        fit = besov_fit(table)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    notes = []
    seq, limit, pb = [], None, None
    n = problem.mesh.dim
    if n < 2:
        notes.append("exponent recurrence needs ambient dimension >= 2; skipped")
    elif F.q < n * F.p / (n - 1):
        arr, limit = exponent_iteration(n, F.p, F.q, int(pr.get("iterations", 200)))
        seq = [float(x) for x in arr]
    else:
        try:
            pb = pbar(n, F.p, F.q)
            notes.append("supercritical regime: recurrence skipped, limiting "
                         "exponent reported")
        except ValueError as e:
            raise ConfigError(str(e)) from e
    emb = None
    if F.q > F.p and n * (1.0 / F.p - 1.0 / F.q) < 1.0:
        emb = embedding_check(problem.mesh, sol.u, F.p, F.q, h_steps=h_steps)
    else:
        notes.append("embedding ratios need q > p with positive exponent; skipped")
    lav = None
    if pr.get("levels"):
        lav = lavrentiev_probe(problem, pr["levels"], cfg.solve_options())
        if lav["insufficient_levels"]:
            notes.append("lavrentiev probe ran with fewer than 2 levels")
    report = RegularityReport(
        h_values=table.h_values, dq_rows=table.rows, fitted_alpha=fit.alpha,
        fit_residual=fit.residual, exponent_sequence=seq, exponent_limit=limit,
        pbar=pb, embedding_ok=None if emb is None else emb["ok"],
        max_embedding_ratio=None if emb is None else emb["max_ratio"],
        lavrentiev_gap=None if lav is None else lav["gap"], notes=notes)
    atomic_write_text(outdir / "difference_quotients.csv", table.to_csv())
    atomic_write_text(outdir / "regularity.json", report.to_json() + "\n")
    print(f"probe: fitted_alpha={fit.alpha:.6g} "
          f"limit={'inf' if limit is None else limit} pbar={pb}")
    return EXIT_OK


def _zeta_grid(cfg) -> np.ndarray:
    spec = cfg.conjugate
    dim = int(cfg.domain.get("dim", 1))
    if "grid" in spec:
        grid = np.asarray(spec["grid"], dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        if grid.size == 0:
            raise ConfigError("conjugate.grid must be nonempty")
        if grid.shape[1] != dim:
            raise ConfigError(f"conjugate grid points must have dim {dim}")
        return grid
    radius = float(spec.get("radius", 2.0))
    count = int(spec.get("count", 9))
    if count < 1:
        raise ConfigError("conjugate.count must be positive")
    axis = np.linspace(-radius, radius, count)
    if dim == 1:
        return axis[:, None]
    gx, gy = np.meshgrid(axis, axis, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


def cmd_conjugate(args) -> int:
    cfg, outdir = _load(args)
    F = cfg.build_integrand()
    grid = _zeta_grid(cfg)
    buf = io.StringIO()
    cols = [f"zeta_{i}" for i in range(F.dim)] + ["Fstar", "fy_residual"]
    buf.write(",".join(cols) + "\n")
    failures = 0
    for zeta in grid:
        try:
            val, xi = conjugate_with_argmax(F, zeta)
        except ConvergenceError:
            val, xi = float("inf"), None
        if xi is None or not np.isfinite(val):
            failures += 1
            row = [format_float(z) for z in zeta] + ["inf", "nan"]
        else:
            resid = float(eval_integrand(F, xi) + val - zeta @ xi)
            row = [format_float(z) for z in zeta] + [format_float(val),
                                                     format_float(resid)]
        buf.write(",".join(row) + "\n")
    atomic_write_text(outdir / "conjugate.csv", buf.getvalue())
    print(f"conjugate: {len(grid)} points, {failures} failures")
    return EXIT_NUMERICAL if failures else EXIT_OK


def cmd_report(args) -> int:
    _, outdir = _load(args, need_config=False)
    if not outdir.is_dir():
        raise ConfigError(f"output directory {outdir} does not exist")
    import json

    from . import plots

    doc = {"artifacts": [], "figures": []}

    mesh_doc = _read_json(outdir / "mesh.json")
    solution = _read_nodal(outdir / "solution.csv")
    obstacle = _read_nodal(outdir / "obstacle.csv")
    if mesh_doc is not None and solution is not None:
        nodes, u = solution
        psi = obstacle[1] if obstacle is not None else None
        plots.render_solution(mesh_doc, nodes, u, psi, outdir / "solution.png")
        doc["figures"].append("solution.png")
        doc["artifacts"].append("solution.csv")
    cert = _read_json(outdir / "certificate.json")
    if cert is not None:
        doc["certificate"] = cert
        doc["artifacts"].append("certificate.json")
    sweep_rows = _read_csv_dicts(outdir / "sweep.csv")
    if sweep_rows:
        plots.render_sweep(sweep_rows, outdir / "sweep.png")
        doc["figures"].append("sweep.png")
        doc["artifacts"].append("sweep.csv")
        verdicts = _read_json(outdir / "sweep_verdicts.json")
        if verdicts is not None:
            doc["sweep_verdicts"] = verdicts
            doc["artifacts"].append("sweep_verdicts.json")
    reg = _read_json(outdir / "regularity.json")
    dq_rows = _read_csv_dicts(outdir / "difference_quotients.csv")
    if reg is not None:
        doc["regularity"] = reg
        doc["artifacts"].append("regularity.json")
        if dq_rows:
            alpha = reg.get("fitted_alpha")
            alpha = float("inf") if alpha == "inf" else float(alpha)
            rows = [(int(r["direction"]), float(r["h"]), float(r["dq_norm"]))
                    for r in dq_rows]
            plots.render_probe(rows, alpha, outdir / "probe.png")
            doc["figures"].append("probe.png")
            doc["artifacts"].append("difference_quotients.csv")
    if not doc["artifacts"]:
        raise ConfigError(f"no known artifacts found in {outdir}")
    write_json(outdir / "report.json", doc)
    print(f"report: aggregated {len(doc['artifacts'])} artifacts, "
          f"rendered {len(doc['figures'])} figures")
    return EXIT_OK


def _read_json(path: Path):
    import json
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def _read_nodal(path: Path):
    if not path.exists():
        return None
    with path.open(newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    coords = np.array([[float(r["x"])] if "y" not in r else [float(r["x"]), float(r["y"])]
                       for r in rows])
    values = np.array([float(r["value"]) for r in rows])
    return coords, values


def _read_csv_dicts(path: Path):
    if not path.exists():
        return None
    with path.open(newline="", encoding="utf-8") as f:
        rows = []
        for r in csv.DictReader(f):
            rows.append({k: _maybe_num(v) for k, v in r.items()})
    return rows


def _maybe_num(v):
    try:
        f = float(v)
    except ValueError:
        return v
    return int(f) if f == int(f) and "." not in v and "e" not in v.lower() else f


if __name__ == "__main__":
    sys.exit(main())
