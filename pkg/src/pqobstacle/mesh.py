"""Structured simplicial meshes on intervals and rectangles with P1 nodal
fields, cellwise-constant gradients, and hat-function pairings.

Node and cell ordering is lexicographic (x fastest) and stable; 2D squares
are split along the lower-left to upper-right diagonal.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    bounds: tuple
    resolution: tuple
    nodes: np.ndarray          # (N, dim)
    cells: np.ndarray          # (C, dim+1) node indices
    cell_measure: np.ndarray   # (C,)
    basis_grads: np.ndarray    # (C, dim+1, dim) gradients of the nodal hats
    is_boundary: np.ndarray    # (N,) bool
    node_multi: np.ndarray     # (N, dim) structured indices
    cell_multi: np.ndarray     # (C, dim) structured square/interval indices
    cell_sub: np.ndarray       # (C,) triangle index within the square (0 in 1D)
    spacing: tuple = field(default=())

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary)

    @property
    def domain_measure(self) -> float:
        m = 1.0
        for lo, hi in self.bounds:
            m *= hi - lo
        return m


def make_mesh(dim: int, bounds, resolution) -> Mesh:
    """Uniform interval partition (1D) or triangulated rectangle grid (2D)."""
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    bounds = _normalize_bounds(dim, bounds)
    resolution = _normalize_resolution(dim, resolution)
    for (lo, hi), n in zip(bounds, resolution):
        if not hi > lo:
            raise ValueError(f"degenerate bounds ({lo}, {hi})")
        if n < 2:
            raise ValueError("resolution must be >= 2 cells per axis")
    if dim == 1:
        return _make_mesh_1d(bounds, resolution)
    return _make_mesh_2d(bounds, resolution)


def _normalize_bounds(dim, bounds):
    b = np.asarray(bounds, dtype=float)
    if b.shape == (2,):
        b = b.reshape(1, 2)
    if b.shape != (dim, 2):
        raise ValueError(f"bounds must be {dim} (lo, hi) pairs")
    return tuple((float(lo), float(hi)) for lo, hi in b)


def _normalize_resolution(dim, resolution):
    r = np.atleast_1d(np.asarray(resolution, dtype=int))
    if r.shape != (dim,):
        raise ValueError(f"resolution must give {dim} cell counts")
    return tuple(int(n) for n in r)


def _make_mesh_1d(bounds, resolution):
    (lo, hi), = bounds
    (n,) = resolution
    h = (hi - lo) / n
    xs = lo + h * np.arange(n + 1)
    nodes = xs[:, None]
    cells = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    measure = np.full(n, h)
    grads = np.empty((n, 2, 1))
    grads[:, 0, 0] = -1.0 / h
    grads[:, 1, 0] = 1.0 / h
    is_boundary = np.zeros(n + 1, dtype=bool)
    is_boundary[[0, n]] = True
    node_multi = np.arange(n + 1)[:, None]
    cell_multi = np.arange(n)[:, None]
    return Mesh(dim=1, bounds=bounds, resolution=resolution, nodes=nodes, cells=cells,
                cell_measure=measure, basis_grads=grads, is_boundary=is_boundary,
                node_multi=node_multi, cell_multi=cell_multi,
                cell_sub=np.zeros(n, dtype=int), spacing=(h,))


def _make_mesh_2d(bounds, resolution):
    (lx0, lx1), (ly0, ly1) = bounds
    nx, ny = resolution
    hx = (lx1 - lx0) / nx
    hy = (ly1 - ly0) / ny
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    nodes = np.stack([lx0 + hx * ii, ly0 + hy * jj], axis=1)
    node_multi = np.stack([ii, jj], axis=1)

    def nid(i, j):
        return j * (nx + 1) + i

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ci = ci.ravel()
    cj = cj.ravel()
    n00 = nid(ci, cj)
    n10 = nid(ci + 1, cj)
    n11 = nid(ci + 1, cj + 1)
    n01 = nid(ci, cj + 1)
    lower = np.stack([n00, n10, n11], axis=1)
    upper = np.stack([n00, n11, n01], axis=1)
    cells = np.empty((2 * nx * ny, 3), dtype=int)
    cells[0::2] = lower
    cells[1::2] = upper
    cell_multi = np.repeat(np.stack([ci, cj], axis=1), 2, axis=0)
    cell_sub = np.tile(np.array([0, 1]), nx * ny)

    p0 = nodes[cells[:, 0]]
    e1 = nodes[cells[:, 1]] - p0
    e2 = nodes[cells[:, 2]] - p0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    measure = 0.5 * np.abs(det)
    # rows of inv([[e1],[e2]]) give the gradients of the hats at vertices 1, 2
    g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    grads = np.empty((len(cells), 3, 2))
    grads[:, 1] = g1
    grads[:, 2] = g2
    grads[:, 0] = -g1 - g2

    is_boundary = (ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)
    return Mesh(dim=2, bounds=bounds, resolution=resolution, nodes=nodes, cells=cells,
                cell_measure=measure, basis_grads=grads, is_boundary=is_boundary,
                node_multi=node_multi, cell_multi=cell_multi, cell_sub=cell_sub,
                spacing=(hx, hy))


# ---------------------------------------------------------------------------
# field operations

def _check_nodal(mesh: Mesh, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"nodal field must have shape ({mesh.n_nodes},), got {u.shape}")
    return u


def _check_cell(mesh: Mesh, sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 1:
        sigma = sigma[:, None]
    if sigma.shape != (mesh.n_cells, mesh.dim):
        raise ValueError(f"cell field must have shape ({mesh.n_cells}, {mesh.dim})")
    return sigma


def cell_gradient(mesh: Mesh, u) -> np.ndarray:
    """Exact gradient of the P1 interpolant, one dim-vector per cell."""
    u = _check_nodal(mesh, u)
    return np.einsum("cv,cvd->cd", u[mesh.cells], mesh.basis_grads)


def hat_pairing(mesh: Mesh, sigma) -> np.ndarray:
    """m_i = sum_T |T| <sigma_T, grad hat_i|_T>, the action of -div sigma on
    the nodal hats (meaningful at interior nodes)."""
    sigma = _check_cell(mesh, sigma)
    contrib = mesh.cell_measure[:, None] * np.einsum("cvd,cd->cv", mesh.basis_grads, sigma)
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.cells, contrib)
    return m


def integrate_cells(mesh: Mesh, values) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_cells,):
        raise ValueError("per-cell values length mismatch")
    return float(mesh.cell_measure @ values)


def interpolate(mesh: Mesh, fn) -> np.ndarray:
    """Nodal samples of fn(x) (1D) or fn(x, y) (2D)."""
    values = np.asarray(fn(*mesh.nodes.T), dtype=float)
    values = np.broadcast_to(values, (mesh.n_nodes,)).copy()
    if not np.all(np.isfinite(values)):
        raise ValueError("interpolated field has non-finite samples")
    return values


def shifted_difference(mesh: Mesh, f, direction: int, steps: int):
    """f(. + steps cells along axis `direction`) - f, on the indices whose
    shifted counterpart exists.

    Returns (difference, base_index) where base_index selects the unshifted
    nodes/cells the difference lives on.  Works for nodal fields, per-cell
    scalars, and per-cell vectors.
    """
    if not (0 <= direction < mesh.dim):
        raise ValueError(f"direction must be in [0, {mesh.dim})")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    f = np.asarray(f, dtype=float)
    if len(f) == mesh.n_nodes and f.ndim == 1:
        multi = mesh.node_multi
        axis_len = mesh.resolution[direction] + 1
        stride = _node_stride(mesh, direction)
    elif len(f) == mesh.n_cells:
        multi = mesh.cell_multi
        axis_len = mesh.resolution[direction]
        stride = _cell_stride(mesh, direction)
    else:
        raise ValueError("field length matches neither nodes nor cells")
    if steps >= axis_len:
        raise ValueError("shift exits the mesh")
    base = np.flatnonzero(multi[:, direction] + steps <= axis_len - 1)
    return f[base + steps * stride] - f[base], base


def _node_stride(mesh: Mesh, direction: int) -> int:
    if mesh.dim == 1 or direction == 0:
        return 1
    return mesh.resolution[0] + 1


def _cell_stride(mesh: Mesh, direction: int) -> int:
    if mesh.dim == 1:
        return 1
    if direction == 0:
        return 2
    return 2 * mesh.resolution[0]


def lumped_node_weights(mesh: Mesh) -> np.ndarray:
    """Row-sum (lumped) P1 mass: weight_i = sum_{T owning i} |T|/(dim+1)."""
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, mesh.cells,
              np.broadcast_to(mesh.cell_measure[:, None] / (mesh.dim + 1),
                              mesh.cells.shape))
    return w


def node_neighbors(mesh: Mesh):
    """CSR-style (indptr, indices) adjacency over mesh edges."""
    c = mesh.cells
    if mesh.dim == 1:
        pairs = np.concatenate([c, c[:, ::-1]])
    else:
        pairs = np.concatenate([c[:, [0, 1]], c[:, [1, 2]], c[:, [0, 2]],
                                c[:, [1, 0]], c[:, [2, 1]], c[:, [2, 0]]])
    pairs = np.unique(pairs, axis=0)
    indptr = np.zeros(mesh.n_nodes + 1, dtype=int)
    np.add.at(indptr, pairs[:, 0] + 1, 1)
    indptr = np.cumsum(indptr)
    return indptr, pairs[:, 1]


def node_cell_incidence(mesh: Mesh):
    """CSR-style (indptr, cell_index, local_vertex) node-to-cell map."""
    flat_nodes = mesh.cells.ravel()
    cell_ids = np.repeat(np.arange(mesh.n_cells), mesh.dim + 1)
    local = np.tile(np.arange(mesh.dim + 1), mesh.n_cells)
    order = np.argsort(flat_nodes, kind="stable")
    indptr = np.zeros(mesh.n_nodes + 1, dtype=int)
    np.add.at(indptr, flat_nodes + 1, 1)
    indptr = np.cumsum(indptr)
    return indptr, cell_ids[order], local[order]


def boundary_edges(mesh: Mesh) -> np.ndarray:
    """Boundary edges as (E, 2) node-index pairs, counterclockwise sides."""
    if mesh.dim == 1:
        raise ValueError("1D meshes have no boundary edges")
    nx, ny = mesh.resolution

    def nid(i, j):
        return j * (nx + 1) + i

    edges = []
    for i in range(nx):
        edges.append((nid(i, 0), nid(i + 1, 0)))
        edges.append((nid(i, ny), nid(i + 1, ny)))
    for j in range(ny):
        edges.append((nid(0, j), nid(0, j + 1)))
        edges.append((nid(nx, j), nid(nx, j + 1)))
    return np.array(edges, dtype=int)


# ---------------------------------------------------------------------------
# serialization

def format_float(x: float) -> str:
    return repr(float(x))


def nodal_field_csv(mesh: Mesh, values) -> str:
    values = _check_nodal(mesh, values)
    buf = io.StringIO()
    cols = ["node_id", "x", "value"] if mesh.dim == 1 else ["node_id", "x", "y", "value"]
    buf.write(",".join(cols) + "\n")
    for i in range(mesh.n_nodes):
        coords = [format_float(c) for c in mesh.nodes[i]]
        buf.write(",".join([str(i), *coords, format_float(values[i])]) + "\n")
    return buf.getvalue()


def cell_field_csv(mesh: Mesh, sigma) -> str:
    sigma = _check_cell(mesh, sigma)
    buf = io.StringIO()
    cols = ["cell_id", "sigma_x"] if mesh.dim == 1 else ["cell_id", "sigma_x", "sigma_y"]
    buf.write(",".join(cols) + "\n")
    for i in range(mesh.n_cells):
        buf.write(",".join([str(i), *[format_float(c) for c in sigma[i]]]) + "\n")
    return buf.getvalue()


def mesh_json(mesh: Mesh) -> str:
    doc = {"dim": mesh.dim,
           "bounds": [list(b) for b in mesh.bounds],
           "resolution": list(mesh.resolution)}
    return json.dumps(doc, sort_keys=True)


def read_nodal_csv(mesh: Mesh, text: str) -> np.ndarray:
    """Parse the nodal CSV format back into a field on `mesh`."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    if header[0] != "node_id" or header[-1] != "value":
        raise ValueError("nodal CSV must have a node_id,...,value header")
    values = np.full(mesh.n_nodes, np.nan)
    for ln in lines[1:]:
        parts = ln.split(",")
        values[int(parts[0])] = float(parts[-1])
    if np.any(np.isnan(values)):
        raise ValueError("nodal CSV does not cover every node")
    return values
