"""Figure rendering for the report command (Agg backend, fixed metadata so
repeated runs produce identical bytes)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = {"dpi": 150, "metadata": {"Software": "pqobstacle"}}


def render_solution(mesh_doc: dict, nodes: np.ndarray, u: np.ndarray,
                    psi: np.ndarray | None, out_path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.6), constrained_layout=True)
    if mesh_doc["dim"] == 1:
        x = nodes[:, 0]
        order = np.argsort(x)
        ax.plot(x[order], u[order], "k-", lw=1.6, label="solution")
        if psi is not None:
            ax.plot(x[order], psi[order], "r--", lw=1.0, label="obstacle")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.legend(loc="best", fontsize=8)
    else:
        tri = mtri.Triangulation(nodes[:, 0], nodes[:, 1])
        im = ax.tripcolor(tri, u, shading="gouraud")
        fig.colorbar(im, ax=ax, label="u")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_aspect("equal")
    ax.set_title("solution")
    fig.savefig(out_path, **_SAVE)
    plt.close(fig)


def render_sweep(rows: list, out_path) -> None:
    ks = [r["k"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2), constrained_layout=True)
    axes[0].plot(ks, [r["energy_Fk"] for r in rows], "o-", label="regularized")
    axes[0].plot(ks, [r["energy_F"] for r in rows], "s--", label="original")
    axes[0].set_xlabel("k")
    axes[0].set_ylabel("energy")
    axes[0].legend(fontsize=8)
    axes[1].semilogy(ks, [max(r["gap_k"], 1e-17) for r in rows], "o-", label="gap")
    axes[1].semilogy(ks, [max(r["vp_dist"], 1e-17) for r in rows], "s--",
                     label="gauge dist")
    axes[1].set_xlabel("k")
    axes[1].legend(fontsize=8)
    axes[1].grid(True, alpha=0.3)
    fig.savefig(out_path, **_SAVE)
    plt.close(fig)


def render_probe(rows: list, alpha: float, out_path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6), constrained_layout=True)
    dirs = sorted({d for d, _, _ in rows})
    for d in dirs:
        hs = [h for dd, h, v in rows if dd == d and v > 0]
        vs = [v for dd, h, v in rows if dd == d and v > 0]
        ax.loglog(hs, vs, "o-", label=f"axis {d}")
    if rows and math.isfinite(alpha):
        hs = sorted({h for _, h, v in rows if v > 0})
        if hs:
            vref = max(v for _, h, v in rows if h == hs[0])
            ax.loglog(hs, [vref * (h / hs[0]) ** (2 * alpha) for h in hs], "k:",
                      label=f"slope {2 * alpha:.2f}")
    ax.set_xlabel("h")
    ax.set_ylabel("difference-quotient mass")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(out_path, **_SAVE)
    plt.close(fig)
