"""Parametric thermal block benchmark.

Heat conduction on the unit square with four square inclusions whose
conductivities are the parameters (the fourth is frozen at 0.5, giving the
three-parameter configuration). P1 finite elements on a structured
crossed-triangle mesh, implicit Euler in time, unit influx on the left
boundary, zero Dirichlet data on the right boundary, and the output is the
average temperature over the second inclusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .foms import AffineOperator, ParametricFOM, Trajectory, solve_fom

__all__ = ["TriangleMesh", "crossed_mesh", "assemble_stiffness", "assemble_mass",
           "build_thermal", "solve_thermal", "INCLUSION_BOXES", "PARAMETER_BOX"]

# side-0.3 squares centered at (0.3,0.3), (0.7,0.3), (0.3,0.7), (0.7,0.7);
# the output subdomain is the second one
INCLUSION_BOXES = np.array([
    [0.15, 0.45, 0.15, 0.45],
    [0.55, 0.85, 0.15, 0.45],
    [0.15, 0.45, 0.55, 0.85],
    [0.55, 0.85, 0.55, 0.85],
])

PARAMETER_BOX = np.array([[1e-5, 1e-2], [1e-5, 1e-2], [1e-4, 1.0]])
KAPPA4_FIXED = 0.5
DEFAULT_DT = 0.01
DEFAULT_HORIZON = 1.0


@dataclass(frozen=True)
class TriangleMesh:
    nodes: np.ndarray       # (N, 2) coordinates
    triangles: np.ndarray   # (T, 3) vertex ids
    regions: np.ndarray     # (T,) subdomain id, 0 = background

    @property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)


def crossed_mesh(m: int) -> TriangleMesh:
    """Structured crossed-triangle mesh: each of the m x m cells is split
    into four triangles around its center node."""
    xs = np.linspace(0.0, 1.0, m + 1)
    corner = np.array([(x, y) for y in xs for x in xs])
    center = np.array([((i + 0.5) / m, (j + 0.5) / m) for j in range(m) for i in range(m)])
    nodes = np.vstack([corner, center])

    def cid(i, j):
        return j * (m + 1) + i

    tris = []
    for j in range(m):
        for i in range(m):
            c = (m + 1) ** 2 + j * m + i
            sw, se = cid(i, j), cid(i + 1, j)
            nw, ne = cid(i, j + 1), cid(i + 1, j + 1)
            tris += [(sw, se, c), (se, ne, c), (ne, nw, c), (nw, sw, c)]
    triangles = np.array(tris, dtype=int)

    cx, cy = nodes[triangles].mean(axis=1).T
    regions = np.zeros(len(triangles), dtype=int)
    for r, (x0, x1, y0, y1) in enumerate(INCLUSION_BOXES, start=1):
        inside = (cx > x0) & (cx < x1) & (cy > y0) & (cy < y1)
        regions[inside] = r
    return TriangleMesh(nodes=nodes, triangles=triangles, regions=regions)


def _triangle_geometry(mesh):
    p = mesh.nodes[mesh.triangles]  # (T, 3, 2)
    x, y = p[:, :, 0], p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    cc = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * np.abs(b[:, 0] * cc[:, 1] - b[:, 1] * cc[:, 0])
    return b, cc, area


def assemble_stiffness(mesh: TriangleMesh, element_mask=None, gamma=None):
    """P1 stiffness matrix; restrict to ``element_mask`` elements and/or scale
    each element by ``gamma`` (per-element conductivity)."""
    b, cc, area = _triangle_geometry(mesh)
    scale = np.ones(len(mesh.triangles)) if gamma is None else np.asarray(gamma, dtype=float)
    if element_mask is not None:
        scale = scale * element_mask
    coefs = scale / (4.0 * area)
    local = (b[:, :, None] * b[:, None, :] + cc[:, :, None] * cc[:, None, :]) * coefs[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = len(mesh.nodes)
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsc()


def assemble_mass(mesh: TriangleMesh):
    _, _, area = _triangle_geometry(mesh)
    local = (np.ones((3, 3)) + np.eye(3))[None, :, :] * (area / 12.0)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = len(mesh.nodes)
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsc()


def _influx_vector(mesh, m):
    """Line integral of the P1 hat functions over the left boundary."""
    load = np.zeros(len(mesh.nodes))
    h = 1.0 / m
    left = np.nonzero(mesh.nodes[:, 0] == 0.0)[0]
    order = left[np.argsort(mesh.nodes[left, 1])]
    for a, bnode in zip(order[:-1], order[1:]):
        load[a] += h / 2.0
        load[bnode] += h / 2.0
    return load


def _output_row(mesh):
    """Average-over-the-output-inclusion functional as a row vector."""
    _, _, area = _triangle_geometry(mesh)
    in_out = mesh.regions == 2
    load = np.zeros(len(mesh.nodes))
    for t in np.nonzero(in_out)[0]:
        load[mesh.triangles[t]] += area[t] / 3.0
    return load / area[in_out].sum()


def build_thermal(mesh_density: int = 31, delta_t: float = DEFAULT_DT,
                  horizon: float = DEFAULT_HORIZON) -> ParametricFOM:
    """Assemble the three-parameter thermal block at the given mesh density.

    ``mesh_density`` is the cell count per side; the default gives roughly
    2000 unknowns after eliminating the Dirichlet boundary. Densities that
    are multiples of 20 align element edges exactly with the inclusion
    boundaries.
    """
    if mesh_density < 8:
        raise ValueError(f"mesh density must be at least 8 cells per side, got {mesh_density}")
    mesh = crossed_mesh(mesh_density)
    for r in range(1, 5):
        if not np.any(mesh.regions == r):
            raise ValueError(f"inclusion {r} contains no elements at density {mesh_density}")

    free = mesh.nodes[:, 0] < 1.0  # zero Dirichlet on the right boundary
    idx = np.nonzero(free)[0]

    mass = assemble_mass(mesh)[np.ix_(idx, idx)].tocsc()
    pieces = [assemble_stiffness(mesh, element_mask=(mesh.regions == r))[np.ix_(idx, idx)].tocsc()
              for r in range(5)]
    b = _influx_vector(mesh, mesh_density)[idx][:, None]
    c = _output_row(mesh)[idx][None, :]

    kappa_coefs = [
        lambda mu: 1.0,
        lambda mu: float(mu[0]),
        lambda mu: float(mu[1]),
        lambda mu: float(mu[2]),
        lambda mu: KAPPA4_FIXED,
    ]
    # implicit Euler: (E + dt*A(mu)) x^k = E x^{k-1} + dt*B
    e_op = AffineOperator(
        matrices=[mass] + pieces,
        coefficients=[lambda mu: 1.0] + [
            (lambda mu, f=f, dt=delta_t: dt * f(mu)) for f in kappa_coefs
        ],
    )
    a_op = AffineOperator(matrices=[mass], coefficients=[lambda mu: 1.0])

    fom = ParametricFOM(
        dimension=len(idx),
        e_operator=e_op,
        a_operator=a_op,
        input_map=delta_t * b,
        output_map=c,
        input_signal=lambda k, mu: np.ones(1),
        dt=delta_t,
        num_steps=int(round(horizon / delta_t)),
        parameter_box=PARAMETER_BOX,
        mass_matrix=mass,
        labels={"benchmark": "thermal", "mesh_density": mesh_density,
                "free_nodes": idx, "mesh": mesh,
                "stiffness_pieces": pieces, "kappa_coefs": kappa_coefs},
    )
    return fom


def solve_thermal(fom: ParametricFOM, mu) -> Trajectory:
    """Implicit Euler march at one conductivity triple."""
    return solve_fom(fom, mu)
