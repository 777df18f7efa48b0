"""Uniform triangulations of the unit square with explicit edge topology.

Each square cell of the n x n grid is split along its positive-slope
diagonal.  Vertices live on the exact rational lattice i/n, so refining by
a power of two reproduces coarse vertex coordinates bitwise.  Every edge
records its one or two adjacent triangles; for interior edges the first
("plus") adjacent triangle is the one with the smaller index, and the
stored unit normal is that triangle's outward normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INTERIOR = "interior"
BOUNDARY = "boundary"


@dataclass
class Edge:
    """Mesh edge with adjacency and the plus-side normal convention.

    ``endpoints`` are ordered along the counterclockwise traversal of the
    first adjacent triangle, so ``unit_normal`` (that triangle's outward
    normal) is the edge direction rotated clockwise by 90 degrees.
    """

    endpoints: tuple[int, int]
    kind: str
    adjacent: tuple[tuple[int, int], ...]
    unit_normal: np.ndarray
    length: float


@dataclass
class Mesh:
    """Triangulation of [0,1]^2; treated as immutable after construction."""

    vertices: np.ndarray   # (nv, 2)
    triangles: np.ndarray  # (nt, 3) vertex indices, counterclockwise
    edges: list[Edge]
    n_subdiv: int
    h: float               # side length 1/n_subdiv


def build_uniform_mesh(n_subdiv: int) -> Mesh:
    """Build the uniform criss-cross-free mesh with ``n_subdiv`` cells per side.

    Every cell is split bottom-left to top-right, giving 2*n^2 congruent
    triangles of area 1/(2 n^2).  Meshes built for n and 2n are nested.
    """
    if n_subdiv < 1:
        raise ValueError(f"n_subdiv must be >= 1, got {n_subdiv}")
    n = n_subdiv
    line = np.arange(n + 1, dtype=float) / n
    gx, gy = np.meshgrid(line, line, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    for j in range(n):
        for i in range(n):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v11 = vid(i + 1, j + 1)
            v01 = vid(i, j + 1)
            c = 2 * (j * n + i)
            triangles[c] = (v00, v10, v11)      # below the diagonal
            triangles[c + 1] = (v00, v11, v01)  # above the diagonal

    edges = _build_edges(vertices, triangles)
    return Mesh(vertices, triangles, edges, n, 1.0 / n)


def _build_edges(vertices, triangles):
    # Local edge l of a triangle is opposite local vertex l and runs from
    # local vertex (l+1)%3 to (l+2)%3, i.e. in CCW traversal order.
    first: dict[tuple[int, int], int] = {}
    records: list[list] = []  # [ordered endpoints, [(tri, loc), ...]]
    for t in range(len(triangles)):
        tri = triangles[t]
        for loc in range(3):
            a = int(tri[(loc + 1) % 3])
            b = int(tri[(loc + 2) % 3])
            key = (a, b) if a < b else (b, a)
            idx = first.get(key)
            if idx is None:
                first[key] = len(records)
                records.append([(a, b), [(t, loc)]])
            else:
                records[idx][1].append((t, loc))

    edges = []
    for (a, b), adj in records:
        d = vertices[b] - vertices[a]
        length = float(np.hypot(d[0], d[1]))
        normal = np.array([d[1], -d[0]]) / length
        kind = INTERIOR if len(adj) == 2 else BOUNDARY
        edges.append(Edge((a, b), kind, tuple(adj), normal, length))
    return edges


def classify_edges(mesh: Mesh):
    """Partition edge indices into (interior, boundary) index arrays."""
    interior = [i for i, e in enumerate(mesh.edges) if e.kind == INTERIOR]
    boundary = [i for i, e in enumerate(mesh.edges) if e.kind == BOUNDARY]
    return np.asarray(interior, dtype=np.int64), np.asarray(boundary, dtype=np.int64)


def barycenters(mesh: Mesh) -> np.ndarray:
    """Triangle barycenters, shape (nt, 2)."""
    return mesh.vertices[mesh.triangles].mean(axis=1)


def cell_jacobians(mesh: Mesh):
    """Affine maps x = B xhat + v0 per triangle.

    Returns (B, inv_B_T, det_B) with shapes (nt,2,2), (nt,2,2), (nt,).
    det_B equals twice the signed triangle area and is positive for the
    CCW-oriented triangles built here.
    """
    v = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    B = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)  # columns
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    inv_t = np.empty_like(B)
    inv_t[:, 0, 0] = B[:, 1, 1]
    inv_t[:, 0, 1] = -B[:, 1, 0]
    inv_t[:, 1, 0] = -B[:, 0, 1]
    inv_t[:, 1, 1] = B[:, 0, 0]
    inv_t /= det[:, None, None]
    return B, inv_t, det


def locate(mesh: Mesh, points) -> tuple[np.ndarray, np.ndarray]:
    """Find containing triangles and barycentric coordinates, O(1) per point.

    Points on a cell diagonal are assigned to the lower triangle; points on
    a cell boundary to the cell on the right/top side.  Both choices are
    deterministic and irrelevant for evaluating continuous fields.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = mesh.n_subdiv
    scaled = pts * n
    ij = np.clip(np.floor(scaled).astype(np.int64), 0, n - 1)
    loc = scaled - ij  # local cell coordinates in [0,1]^2
    lower = loc[:, 0] >= loc[:, 1]
    tris = 2 * (ij[:, 1] * n + ij[:, 0]) + np.where(lower, 0, 1)

    a, b = loc[:, 0], loc[:, 1]
    bary = np.empty((len(pts), 3))
    # lower triangle (v00, v10, v11): lam1 = a-b, lam2 = b
    # upper triangle (v00, v11, v01): lam1 = a,   lam2 = b-a
    bary[:, 1] = np.where(lower, a - b, a)
    bary[:, 2] = np.where(lower, b, b - a)
    bary[:, 0] = 1.0 - bary[:, 1] - bary[:, 2]
    return tris, bary


def nested_refinement_ratio(fine: Mesh, coarse: Mesh) -> int:
    """Refinement ratio of two nested meshes.

    Raises if the coarse subdivision count does not divide the fine one or
    the ratio is not a power of two (the regime where vertex coordinates
    coincide bitwise).
    """
    nf, nc = fine.n_subdiv, coarse.n_subdiv
    if nf % nc != 0:
        raise ValueError(f"meshes are not nested: {nc} does not divide {nf}")
    ratio = nf // nc
    if ratio & (ratio - 1) != 0:
        raise ValueError(f"meshes are not nested: ratio {ratio} is not a power of two")
    return ratio


def containing_coarse_triangle(fine: Mesh, coarse: Mesh, fine_tri: int) -> int:
    """Index of the coarse triangle whose closure contains the fine triangle."""
    nested_refinement_ratio(fine, coarse)
    bc = mesh_triangle_barycenter(fine, fine_tri)
    tris, _ = locate(coarse, bc[None, :])
    return int(tris[0])


def mesh_triangle_barycenter(mesh: Mesh, tri: int) -> np.ndarray:
    return mesh.vertices[mesh.triangles[tri]].mean(axis=0)


def mesh_to_text(mesh: Mesh) -> str:
    """Plain-text dump: one line per entity (`v x y`, `t i j k`, `e i j kind`)."""
    lines = []
    for x, y in mesh.vertices:
        lines.append(f"v {x!r} {y!r}")
    for i, j, k in mesh.triangles:
        lines.append(f"t {i} {j} {k}")
    for e in mesh.edges:
        lines.append(f"e {e.endpoints[0]} {e.endpoints[1]} {e.kind}")
    return "\n".join(lines) + "\n"
