"""Lagrange P_k (k >= 2) triangular elements.

Reference basis functions are built on the principal lattice by inverting a
monomial Vandermonde system (adequate for the moderate degrees used here).
Global degrees of freedom on the uniform square mesh are numbered on the
structured lattice i/(k*n), which makes C0 continuity automatic and gives
(k*n+1)^2 dofs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Mesh, barycenters, cell_jacobians, classify_edges, locate, nested_refinement_ratio


class ReferenceElement:
    """P_k basis on the reference triangle conv{(0,0),(1,0),(0,1)}.

    Nodes are the principal lattice points with barycentric coordinates
    (i0,i1,i2)/k.  ``tabulate`` returns values and reference-coordinate
    derivatives; callers push gradients/Hessians forward through the affine
    map of each physical triangle.
    """

    def __init__(self, degree: int):
        if degree < 2:
            raise ValueError(f"polynomial degree must be >= 2, got {degree}")
        self.degree = k = degree
        mult = [(i0, i1, k - i0 - i1) for i0 in range(k + 1) for i1 in range(k + 1 - i0)]
        self.node_multiindices = np.asarray(mult, dtype=np.int64)
        self.nodes = self.node_multiindices / float(k)  # (nd, 3) barycentric
        self._exp = np.asarray(
            [(t - i, i) for t in range(k + 1) for i in range(t + 1)], dtype=np.int64
        )
        ref = self.nodes[:, 1:]  # (x, y) = (lambda_1, lambda_2)
        vand = self._monomials(ref[:, 0], ref[:, 1])[0]
        self._coeff = np.linalg.solve(vand, np.eye(len(vand)))

    @property
    def n_basis(self) -> int:
        return len(self.nodes)

    def _monomials(self, x, y):
        k = self.degree
        xp = np.ones((len(x), k + 1))
        yp = np.ones((len(y), k + 1))
        for p in range(1, k + 1):
            xp[:, p] = xp[:, p - 1] * x
            yp[:, p] = yp[:, p - 1] * y
        i = self._exp[:, 0]
        j = self._exp[:, 1]
        m = xp[:, i] * yp[:, j]
        mx = i * xp[:, np.maximum(i - 1, 0)] * yp[:, j]
        my = j * xp[:, i] * yp[:, np.maximum(j - 1, 0)]
        mxx = i * (i - 1) * xp[:, np.maximum(i - 2, 0)] * yp[:, j]
        mxy = i * j * xp[:, np.maximum(i - 1, 0)] * yp[:, np.maximum(j - 1, 0)]
        myy = j * (j - 1) * xp[:, i] * yp[:, np.maximum(j - 2, 0)]
        return m, mx, my, mxx, mxy, myy

    def tabulate(self, bary):
        """Values, gradients and Hessians of all basis functions.

        ``bary`` has shape (..., 3); the returned arrays have shapes
        (..., nd), (..., nd, 2) and (..., nd, 2, 2) in reference coordinates.
        """
        bary = np.asarray(bary, dtype=float)
        lead = bary.shape[:-1]
        x = bary[..., 1].ravel()
        y = bary[..., 2].ravel()
        m, mx, my, mxx, mxy, myy = self._monomials(x, y)
        c = self._coeff
        nd = self.n_basis
        val = (m @ c).reshape(lead + (nd,))
        grad = np.stack([mx @ c, my @ c], axis=-1).reshape(lead + (nd, 2))
        hess = np.stack([mxx @ c, mxy @ c, mxy @ c, myy @ c], axis=-1).reshape(lead + (nd, 2, 2))
        return val, grad, hess


def reference_basis(element: ReferenceElement, point):
    """Per-basis (values, gradients, hessians) at one barycentric point."""
    val, grad, hess = element.tabulate(np.asarray(point, dtype=float))
    return val, grad, hess


@dataclass
class _EdgeArrays:
    """Interior-edge topology flattened to arrays for vectorized assembly."""

    index: np.ndarray      # (E,) indices into mesh.edges
    tri_plus: np.ndarray   # (E,)
    tri_minus: np.ndarray  # (E,)
    normal: np.ndarray     # (E, 2) plus-side outward normals
    length: np.ndarray     # (E,)
    a: np.ndarray          # (E, 2) first endpoint (plus-side traversal order)
    b: np.ndarray          # (E, 2) second endpoint


class FeSpace:
    """Continuous P_k space on a uniform mesh with structured dof numbering."""

    def __init__(self, mesh: Mesh, degree: int):
        self.mesh = mesh
        self.element = ReferenceElement(degree)
        k, n = degree, mesh.n_subdiv
        self.n1d = k * n + 1

        # Integer lattice coordinates (units of 1/(k*n)) are exact, so shared
        # dofs across cells collapse to identical global indices.
        vert_lat = np.rint(mesh.vertices * n).astype(np.int64)
        tri_lat = vert_lat[mesh.triangles]                       # (nt, 3, 2)
        mult = self.element.node_multiindices                    # (nd, 3)
        dof_lat = np.einsum("lv,tvd->tld", mult, tri_lat)        # (nt, nd, 2)
        self.cell_dofs = dof_lat[..., 1] * self.n1d + dof_lat[..., 0]

        idx = np.arange(self.n1d)
        gx, gy = np.meshgrid(idx, idx, indexing="xy")
        denom = float(k * n)
        self.dof_coords = np.column_stack([gx.ravel() / denom, gy.ravel() / denom])

        on_bnd = (
            (gx.ravel() == 0)
            | (gy.ravel() == 0)
            | (gx.ravel() == self.n1d - 1)
            | (gy.ravel() == self.n1d - 1)
        )
        self.boundary_dofs = np.flatnonzero(on_bnd)
        self.interior_dofs = np.flatnonzero(~on_bnd)
        self.interior_index = np.full(self.n_dofs, -1, dtype=np.int64)
        self.interior_index[self.interior_dofs] = np.arange(len(self.interior_dofs))

        self.jac, self.inv_jac_t, self.det_jac = cell_jacobians(mesh)
        self._edge_arrays: _EdgeArrays | None = None

    @property
    def n_dofs(self) -> int:
        return self.n1d * self.n1d

    @property
    def n_interior(self) -> int:
        return len(self.interior_dofs)

    def edge_arrays(self) -> _EdgeArrays:
        if self._edge_arrays is None:
            interior, _ = classify_edges(self.mesh)
            edges = self.mesh.edges
            tp = np.array([edges[i].adjacent[0][0] for i in interior], dtype=np.int64)
            tm = np.array([edges[i].adjacent[1][0] for i in interior], dtype=np.int64)
            normal = np.array([edges[i].unit_normal for i in interior])
            length = np.array([edges[i].length for i in interior])
            a = self.mesh.vertices[[edges[i].endpoints[0] for i in interior]]
            b = self.mesh.vertices[[edges[i].endpoints[1] for i in interior]]
            self._edge_arrays = _EdgeArrays(interior, tp, tm, normal, length, a, b)
        return self._edge_arrays


@dataclass
class FeFunction:
    """Finite element function: a coefficient vector over the space's dofs."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient vector has shape {self.coeffs.shape}, expected ({self.space.n_dofs},)"
            )
        if not np.isfinite(self.coeffs).all():
            raise ValueError("coefficient vector contains NaN or Inf")


def interpolate(space: FeSpace, g) -> FeFunction:
    """Nodal interpolant: coefficients are g sampled at the dof coordinates."""
    vals = np.asarray(g(space.dof_coords[:, 0], space.dof_coords[:, 1]), dtype=float)
    coeffs = np.broadcast_to(vals, (space.n_dofs,)).copy()
    return FeFunction(space, coeffs)


def physical_to_barycentric(space: FeSpace, tris, points) -> np.ndarray:
    """Barycentric coordinates of physical points w.r.t. given triangles.

    ``tris`` broadcasts against ``points.shape[:-1]``; exact affine inversion,
    no containment check.
    """
    pts = np.asarray(points, dtype=float)
    tris = np.asarray(tris, dtype=np.int64)
    v0 = space.mesh.vertices[space.mesh.triangles[tris, 0]]
    while v0.ndim < pts.ndim:
        v0 = v0[..., None, :]
    inv_t = space.inv_jac_t[tris]
    while inv_t.ndim < pts.ndim + 1:
        inv_t = inv_t[..., None, :, :]
    rel = pts - v0
    xi = np.einsum("...b,...ba->...a", rel, inv_t)
    bary = np.empty(pts.shape[:-1] + (3,))
    bary[..., 1] = xi[..., 0]
    bary[..., 2] = xi[..., 1]
    bary[..., 0] = 1.0 - xi[..., 0] - xi[..., 1]
    return bary


def evaluate(fun: FeFunction, tri: int, point):
    """Value, physical gradient and broken Hessian at a barycentric point."""
    val, grad, hess = fun.space.element.tabulate(np.asarray(point, dtype=float))
    local = fun.coeffs[fun.space.cell_dofs[tri]]
    a = fun.space.inv_jac_t[tri]
    value = float(val @ local)
    gradient = a @ (grad.T @ local)
    h_ref = np.einsum("i,iab->ab", local, hess)
    hessian = a @ h_ref @ a.T
    return value, gradient, hessian


def eval_on_cells(fun: FeFunction, bary, tris=None):
    """Evaluate on many cells at the same barycentric points.

    Returns (values, gradients, hessians) with shapes (T,nq), (T,nq,2),
    (T,nq,2,2) in physical coordinates.
    """
    space = fun.space
    if tris is None:
        tris = np.arange(len(space.mesh.triangles))
    val, grad, hess = space.element.tabulate(np.asarray(bary, dtype=float))
    local = fun.coeffs[space.cell_dofs[tris]]                  # (T, nd)
    a = space.inv_jac_t[tris]                                  # (T, 2, 2)
    values = np.einsum("qi,ti->tq", val, local)
    g_ref = np.einsum("qib,ti->tqb", grad, local)
    h_ref = np.einsum("qibc,ti->tqbc", hess, local)
    gradients = np.einsum("tab,tqb->tqa", a, g_ref)
    hessians = np.einsum("tab,tqbc,tdc->tqad", a, h_ref, a)
    return values, gradients, hessians


def eval_at_points(fun: FeFunction, tris, bary):
    """Evaluate at one barycentric point per listed triangle.

    ``tris`` has shape matching ``bary.shape[:-1]``; returns (values,
    gradients, hessians) with that leading shape.
    """
    space = fun.space
    tris = np.asarray(tris, dtype=np.int64)
    bary = np.asarray(bary, dtype=float)
    val, grad, hess = space.element.tabulate(bary)
    local = fun.coeffs[space.cell_dofs[tris]]                  # (..., nd)
    a = space.inv_jac_t[tris]
    values = np.einsum("...i,...i->...", val, local)
    g_ref = np.einsum("...ib,...i->...b", grad, local)
    h_ref = np.einsum("...ibc,...i->...bc", hess, local)
    gradients = np.einsum("...ab,...b->...a", a, g_ref)
    hessians = np.einsum("...ab,...bc,...dc->...ad", a, h_ref, a)
    return values, gradients, hessians


@dataclass
class CoarseOnFine:
    """A coarse-mesh function viewed through a nested fine mesh.

    Traces on fine cells come from the containing coarse cell's polynomial,
    so broken-Hessian jumps across fine edges interior to a coarse cell
    vanish identically, while fine edges lying on coarse edges carry the
    true coarse jumps.
    """

    fun: FeFunction
    fine_space: FeSpace
    cell_map: np.ndarray = field(repr=False)  # fine tri -> containing coarse tri


def coarse_on_fine(fun: FeFunction, fine_space: FeSpace) -> CoarseOnFine:
    """Build the nested view; fails if the meshes are not nested."""
    coarse_mesh = fun.space.mesh
    nested_refinement_ratio(fine_space.mesh, coarse_mesh)
    if fun.space.element.degree != fine_space.element.degree:
        raise ValueError("coarse and fine spaces must share the polynomial degree")
    cell_map, _ = locate(coarse_mesh, barycenters(fine_space.mesh))
    return CoarseOnFine(fun, fine_space, cell_map)


def field_values_at(w, space: FeSpace, tris, phys, bary):
    """Gradients and Hessians of ``w`` at points given per fine triangle.

    ``w`` is either a FeFunction on ``space`` or a CoarseOnFine view whose
    fine space is ``space``; the view redirects evaluation to the containing
    coarse triangle so one-sided traces on coarse edges are exact.
    """
    if isinstance(w, CoarseOnFine):
        if w.fine_space is not space:
            raise ValueError("view was built for a different fine space")
        tris = np.asarray(tris, dtype=np.int64)
        ctris = w.cell_map[tris]
        cbary = physical_to_barycentric(w.fun.space, ctris, phys)
        if cbary.ndim > ctris.ndim + 1:  # broadcast triangles over trailing point axes
            ctris = np.broadcast_to(ctris[..., None], cbary.shape[:-1])
        _, grads, hesses = eval_at_points(w.fun, ctris, cbary)
        return grads, hesses
    if w.space is not space:
        raise ValueError("function lives on a different space")
    _, grads, hesses = eval_at_points(w, tris, bary)
    return grads, hesses


def prolongate(fun: FeFunction, fine_space: FeSpace) -> FeFunction:
    """Transfer to a nested finer space by pointwise evaluation at fine dofs.

    Exact (no quadrature): nested P_k spaces satisfy V_H subset V_h, so the
    fine interpolant reproduces the coarse function.
    """
    coarse_mesh = fun.space.mesh
    nested_refinement_ratio(fine_space.mesh, coarse_mesh)
    if fun.space.element.degree != fine_space.element.degree:
        raise ValueError("coarse and fine spaces must share the polynomial degree")
    tris, bary = locate(coarse_mesh, fine_space.dof_coords)
    vals, _, _ = eval_at_points(fun, tris, bary)
    return FeFunction(fine_space, vals)


def function_to_csv(fun: FeFunction) -> str:
    """Debug dump `x,y,value` at the dof coordinates."""
    lines = ["x,y,value"]
    for (x, y), v in zip(fun.space.dof_coords, fun.coeffs):
        lines.append(f"{x!r},{y!r},{v!r}")
    return "\n".join(lines) + "\n"
