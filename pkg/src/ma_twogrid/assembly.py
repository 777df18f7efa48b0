"""Assembly of the interior penalty form for det(D^2 u) = f.

The nonlinear residual of a function v against interior test functions is

    A(v, phi) = sum_K int_K (f - det D^2 v) phi
              + sum_e int_e [[ {{cof D^2 v}} Dv ]] phi     (interior edges),

its linearization at w in direction v is

    A'(w; v, phi) = sum_K int_K (cof D^2 w) Dv . Dphi
                  - sum_e int_e [[cof D^2 w]] {{Dv}} phi
                  + sum_e int_e [[ {{cof D^2 v}} Dw ]] phi,

and the quadratic Taylor remainder (exact in 2D, independent of w) is

    R(v, phi) = 1/2 sum_K int_K (cof D^2 v) Dv . Dphi
              - 1/2 sum_e int_e [[cof D^2 v]] {{Dv}} phi
              + 1/2 sum_e int_e [[ {{cof D^2 v}} Dv ]] phi.

Jumps contract traces with the plus-side outward normal; averages are
arithmetic means.  Assembled values are invariant under swapping the
plus/minus roles of an edge.  Assembly is deterministic: fixed block order
and sequential scatter give bitwise-reproducible output.

Residual-type outputs are vectors over the interior (non-boundary) dofs;
matrices keep all columns (interior rows x all dofs) so that known boundary
values can be folded into the right-hand side by ``apply_dirichlet``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .felements import (
    CoarseOnFine,
    FeFunction,
    FeSpace,
    field_values_at,
    interpolate,
    physical_to_barycentric,
)
from .geometry import INTERIOR
from .linsolve import SparseMatrix
from .quadrature import QuadratureRule, edge_rule, triangle_rule

_CELL_BLOCK = 32768
_EDGE_BLOCK = 32768


def default_volume_degree(degree: int) -> int:
    """Covers det(D^2 v) phi (degree 3k-4) and the smooth source with margin."""
    return max(3 * degree - 4, 2 * degree) + 2


def default_edge_degree(degree: int) -> int:
    """Covers the edge integrand cof(D^2 v) Dv phi of degree 3k-3 with margin."""
    return 3 * degree - 2


def cof2(m) -> np.ndarray:
    """Cofactor matrix of 2x2 matrices (vectorized over leading axes).

    cof [[a, b], [c, d]] = [[d, -c], [-b, a]]; linear in its argument.
    """
    m = np.asarray(m, dtype=float)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 0, 1] = -m[..., 1, 0]
    out[..., 1, 0] = -m[..., 0, 1]
    out[..., 1, 1] = m[..., 0, 0]
    return out


def det2(m) -> np.ndarray:
    """Determinant of 2x2 matrices (vectorized over leading axes)."""
    m = np.asarray(m, dtype=float)
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def jump_avg(plus, minus, normal, field: str = "vector"):
    """Jump and average of two-sided traces on an edge.

    For vector fields (shape (...,2)) the jump is the scalar
    v+ . n+ + v- . n-; for matrix fields (shape (...,2,2)) it is the row
    2-vector n+^T E+ + n-^T E-.  Averages are arithmetic means.  ``normal``
    is the plus-side outward unit normal.
    """
    plus = np.asarray(plus, dtype=float)
    minus = np.asarray(minus, dtype=float)
    normal = np.asarray(normal, dtype=float)
    diff = plus - minus
    avg = 0.5 * (plus + minus)
    if field == "vector":
        jump = np.einsum("...a,...a->...", diff, normal)
    elif field == "matrix":
        jump = np.einsum("...a,...ab->...b", normal, diff)
    else:
        raise ValueError(f"field must be 'vector' or 'matrix', got {field!r}")
    return jump, avg


@dataclass
class EdgeTrace:
    """Two-sided traces of a function at quadrature points of an interior edge."""

    edge_index: int
    points: np.ndarray    # (nq, 2) physical
    weights: np.ndarray   # (nq,) reference weights, sum 1
    length: float
    normal: np.ndarray    # plus-side outward unit normal
    grad_plus: np.ndarray
    grad_minus: np.ndarray
    hess_plus: np.ndarray
    hess_minus: np.ndarray


def edge_trace(space: FeSpace, fun: FeFunction, edge_index: int,
               rule: QuadratureRule | None = None) -> EdgeTrace:
    """Traces of gradient and broken Hessian from both adjacent triangles."""
    edge = space.mesh.edges[edge_index]
    if edge.kind != INTERIOR:
        raise ValueError(f"edge {edge_index} is a boundary edge and has no two-sided traces")
    if rule is None:
        rule = edge_rule(default_edge_degree(space.element.degree))
    a = space.mesh.vertices[edge.endpoints[0]]
    b = space.mesh.vertices[edge.endpoints[1]]
    phys = a[None, :] + rule.points[:, None] * (b - a)[None, :]
    (tp, _), (tm, _) = edge.adjacent
    out = {}
    for side, tri in (("plus", tp), ("minus", tm)):
        tris = np.full(len(phys), tri, dtype=np.int64)
        bary = physical_to_barycentric(space, tris, phys)
        grads, hesses = field_values_at(fun, space, tris, phys, bary)
        out[f"grad_{side}"] = grads
        out[f"hess_{side}"] = hesses
    return EdgeTrace(edge_index, phys, rule.weights.copy(), edge.length,
                     edge.unit_normal.copy(), **out)


# ---------------------------------------------------------------------------
# block iteration


def _slices(n, block):
    for start in range(0, n, block):
        yield slice(start, min(start + block, n))


def _cell_blocks(space: FeSpace, rule: QuadratureRule):
    """Yield (tris, phys, wdet, val, dphi, hphi) per block of triangles."""
    ref_val, ref_grad, ref_hess = space.element.tabulate(rule.points)
    verts = space.mesh.vertices[space.mesh.triangles]
    nt = len(space.mesh.triangles)
    for s in _slices(nt, _CELL_BLOCK):
        tris = np.arange(s.start, s.stop)
        a = space.inv_jac_t[s]
        phys = np.einsum("qv,evd->eqd", rule.points, verts[s])
        wdet = rule.weights[None, :] * space.det_jac[s, None]
        dphi = np.einsum("eab,qib->eqia", a, ref_grad)
        hphi = np.einsum("eab,qibc,edc->eqiad", a, ref_hess, a, optimize=True)
        val = np.broadcast_to(ref_val, (len(tris),) + ref_val.shape)
        yield tris, phys, wdet, val, dphi, hphi


@dataclass
class _EdgeBlock:
    tri_p: np.ndarray
    tri_m: np.ndarray
    normal: np.ndarray   # (B, 2)
    wlen: np.ndarray     # (B, nq) weights * edge length
    phys: np.ndarray     # (B, nq, 2)
    bary_p: np.ndarray
    bary_m: np.ndarray
    val_p: np.ndarray    # (B, nq, nd) test traces (single-valued on the edge)
    dphi_p: np.ndarray
    hphi_p: np.ndarray
    dphi_m: np.ndarray
    hphi_m: np.ndarray


def _basis_on_side(space, tris, bary):
    val, grad, hess = space.element.tabulate(bary)
    a = space.inv_jac_t[tris]
    dphi = np.einsum("eab,eqib->eqia", a, grad)
    hphi = np.einsum("eab,eqibc,edc->eqiad", a, hess, a, optimize=True)
    return val, dphi, hphi


def _edge_blocks(space: FeSpace, rule: QuadratureRule):
    ea = space.edge_arrays()
    t = rule.points
    for s in _slices(len(ea.index), _EDGE_BLOCK):
        a, b = ea.a[s], ea.b[s]
        phys = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        bary_p = physical_to_barycentric(space, ea.tri_plus[s], phys)
        bary_m = physical_to_barycentric(space, ea.tri_minus[s], phys)
        val_p, dphi_p, hphi_p = _basis_on_side(space, ea.tri_plus[s], bary_p)
        _, dphi_m, hphi_m = _basis_on_side(space, ea.tri_minus[s], bary_m)
        wlen = rule.weights[None, :] * ea.length[s, None]
        yield _EdgeBlock(ea.tri_plus[s], ea.tri_minus[s], ea.normal[s], wlen, phys,
                         bary_p, bary_m, val_p, dphi_p, hphi_p, dphi_m, hphi_m)


def _field_on_cells(w, space, tris, phys, dphi, hphi):
    """Gradients/Hessians of the field at volume quadrature points."""
    if isinstance(w, FeFunction):
        if w.space is not space:
            raise ValueError("function lives on a different space")
        local = w.coeffs[space.cell_dofs[tris]]
        grad = np.einsum("eqia,ei->eqa", dphi, local)
        hess = np.einsum("eqiab,ei->eqab", hphi, local)
        return grad, hess
    return field_values_at(w, space, tris, phys, None)


def _field_on_side(w, space, tris, phys, bary, dphi, hphi):
    """Gradient/Hessian traces of the field from one side of an edge block."""
    if isinstance(w, FeFunction):
        if w.space is not space:
            raise ValueError("function lives on a different space")
        local = w.coeffs[space.cell_dofs[tris]]
        grad = np.einsum("eqia,ei->eqa", dphi, local)
        hess = np.einsum("eqiab,ei->eqab", hphi, local)
        return grad, hess
    return field_values_at(w, space, tris, phys, bary)


def _interior(space, full_vector):
    return full_vector[space.interior_dofs]


def _matrix_from_triplets(space, rows, cols, vals):
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.empty(0)
    ir = space.interior_index[rows]
    keep = ir >= 0
    return SparseMatrix.from_coo(ir[keep], cols[keep], vals[keep],
                                 (space.n_interior, space.n_dofs))


# ---------------------------------------------------------------------------
# residual


def residual_volume(space: FeSpace, v, f, rule: QuadratureRule | None = None) -> np.ndarray:
    """Volume part sum_K int_K (f - det D^2 v) phi_i, interior dofs only."""
    if rule is None:
        rule = triangle_rule(default_volume_degree(space.element.degree))
    out = np.zeros(space.n_dofs)
    for tris, phys, wdet, val, dphi, hphi in _cell_blocks(space, rule):
        _, hess = _field_on_cells(v, space, tris, phys, dphi, hphi)
        dens = (np.asarray(f(phys[..., 0], phys[..., 1]), dtype=float) - det2(hess)) * wdet
        np.add.at(out, space.cell_dofs[tris], np.einsum("eq,eqi->ei", dens, val))
    return _interior(space, out)


def residual_edge(space: FeSpace, v, rule: QuadratureRule | None = None) -> np.ndarray:
    """Edge part sum_e int_e [[ {{cof D^2 v}} Dv ]] phi_i, interior dofs only."""
    if rule is None:
        rule = edge_rule(default_edge_degree(space.element.degree))
    out = np.zeros(space.n_dofs)
    for blk in _edge_blocks(space, rule):
        gp, hp = _field_on_side(v, space, blk.tri_p, blk.phys, blk.bary_p, blk.dphi_p, blk.hphi_p)
        gm, hm = _field_on_side(v, space, blk.tri_m, blk.phys, blk.bary_m, blk.dphi_m, blk.hphi_m)
        cof_avg = 0.5 * (cof2(hp) + cof2(hm))
        jump = np.einsum("ea,eqab,eqb->eq", blk.normal, cof_avg, gp - gm)
        contrib = np.einsum("eq,eqi->ei", jump * blk.wlen, blk.val_p)
        np.add.at(out, space.cell_dofs[blk.tri_p], contrib)
    return _interior(space, out)


def assemble_residual(space: FeSpace, v, f,
                      vol_rule: QuadratureRule | None = None,
                      edg_rule: QuadratureRule | None = None) -> np.ndarray:
    """Full nonlinear residual A(v, phi_i) over interior dofs.

    ``v`` is a FeFunction on ``space`` or a CoarseOnFine view of a coarse
    solution (used by the two-grid fine step).
    """
    return residual_volume(space, v, f, vol_rule) + residual_edge(space, v, edg_rule)


# ---------------------------------------------------------------------------
# linearization


def jacobian_volume(space: FeSpace, w, rule: QuadratureRule | None = None) -> SparseMatrix:
    """Volume part int_K (cof D^2 w) Dphi_j . Dphi_i of the linearization."""
    if rule is None:
        rule = triangle_rule(default_volume_degree(space.element.degree))
    rows, cols, vals = [], [], []
    for tris, phys, wdet, _, dphi, hphi in _cell_blocks(space, rule):
        _, hess_w = _field_on_cells(w, space, tris, phys, dphi, hphi)
        cof_w = cof2(hess_w)
        tmp = np.einsum("eqab,eqjb->eqja", cof_w, dphi)
        kloc = np.einsum("eq,eqja,eqia->eij", wdet, tmp, dphi, optimize=True)
        dofs = space.cell_dofs[tris]
        rows.append(np.broadcast_to(dofs[:, :, None], kloc.shape).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], kloc.shape).ravel())
        vals.append(kloc.ravel())
    return _matrix_from_triplets(space, rows, cols, vals)


def jacobian_edge_terms(space: FeSpace, w, rule: QuadratureRule | None = None):
    """Both edge terms of the linearization, signs included.

    Returns (M2, M3) with
    M2[i,j] = - int_e [[cof D^2 w]] {{Dphi_j}} phi_i   (vanishes for C^2 w),
    M3[i,j] = + int_e [[ {{cof D^2 phi_j}} Dw ]] phi_i (vanishes for C^1 w);
    the trial average/cofactor uses linearity of cof in two dimensions.
    """
    if rule is None:
        rule = edge_rule(default_edge_degree(space.element.degree))
    rows2, cols2, vals2 = [], [], []
    rows3, cols3, vals3 = [], [], []
    for blk in _edge_blocks(space, rule):
        gw_p, hw_p = _field_on_side(w, space, blk.tri_p, blk.phys, blk.bary_p, blk.dphi_p, blk.hphi_p)
        gw_m, hw_m = _field_on_side(w, space, blk.tri_m, blk.phys, blk.bary_m, blk.dphi_m, blk.hphi_m)
        row_jump_w = np.einsum("ea,eqab->eqb", blk.normal, cof2(hw_p) - cof2(hw_m))
        gw_diff = gw_p - gw_m
        test_rows = space.cell_dofs[blk.tri_p]
        for tris_s, dphi_s, hphi_s in ((blk.tri_p, blk.dphi_p, blk.hphi_p),
                                       (blk.tri_m, blk.dphi_m, blk.hphi_m)):
            trial_cols = space.cell_dofs[tris_s]
            s2 = np.einsum("eqb,eqjb->eqj", row_jump_w, dphi_s)
            t2 = -0.5 * np.einsum("eq,eqj,eqi->eij", blk.wlen, s2, blk.val_p, optimize=True)
            s3 = np.einsum("ea,eqjab,eqb->eqj", blk.normal, cof2(hphi_s), gw_diff, optimize=True)
            t3 = 0.5 * np.einsum("eq,eqj,eqi->eij", blk.wlen, s3, blk.val_p, optimize=True)
            shp = t2.shape
            rows2.append(np.broadcast_to(test_rows[:, :, None], shp).ravel())
            cols2.append(np.broadcast_to(trial_cols[:, None, :], shp).ravel())
            vals2.append(t2.ravel())
            rows3.append(np.broadcast_to(test_rows[:, :, None], shp).ravel())
            cols3.append(np.broadcast_to(trial_cols[:, None, :], shp).ravel())
            vals3.append(t3.ravel())
    m2 = _matrix_from_triplets(space, rows2, cols2, vals2)
    m3 = _matrix_from_triplets(space, rows3, cols3, vals3)
    return m2, m3


def assemble_jacobian(space: FeSpace, w,
                      vol_rule: QuadratureRule | None = None,
                      edg_rule: QuadratureRule | None = None) -> SparseMatrix:
    """Linearization matrix M[i,j] = A'(w; phi_j, phi_i).

    Rows run over interior test dofs, columns over all dofs; boundary
    columns are eliminated against known values by ``apply_dirichlet``.
    ``w`` is a FeFunction or a CoarseOnFine view (two-grid expansion point).
    """
    vol = jacobian_volume(space, w, vol_rule)
    m2, m3 = jacobian_edge_terms(space, w, edg_rule)
    total = vol.to_scipy() + m2.to_scipy() + m3.to_scipy()
    return SparseMatrix.from_scipy(total)


def taylor_remainder(space: FeSpace, v,
                     vol_rule: QuadratureRule | None = None,
                     edg_rule: QuadratureRule | None = None) -> np.ndarray:
    """Quadratic remainder R(v, phi_i) = A(w+v,.) - A(w,.) - A'(w;v,.).

    The 2D determinant is quadratic in the Hessian, so the expansion
    terminates and the remainder does not depend on the expansion point w.
    """
    if vol_rule is None:
        vol_rule = triangle_rule(default_volume_degree(space.element.degree))
    if edg_rule is None:
        edg_rule = edge_rule(default_edge_degree(space.element.degree))
    out = np.zeros(space.n_dofs)
    for tris, phys, wdet, _, dphi, hphi in _cell_blocks(space, vol_rule):
        grad_v, hess_v = _field_on_cells(v, space, tris, phys, dphi, hphi)
        dvec = np.einsum("eqab,eqb->eqa", cof2(hess_v), grad_v)
        contrib = 0.5 * np.einsum("eq,eqa,eqia->ei", wdet, dvec, dphi, optimize=True)
        np.add.at(out, space.cell_dofs[tris], contrib)
    for blk in _edge_blocks(space, edg_rule):
        gp, hp = _field_on_side(v, space, blk.tri_p, blk.phys, blk.bary_p, blk.dphi_p, blk.hphi_p)
        gm, hm = _field_on_side(v, space, blk.tri_m, blk.phys, blk.bary_m, blk.dphi_m, blk.hphi_m)
        cof_p, cof_m = cof2(hp), cof2(hm)
        row_jump = np.einsum("ea,eqab->eqb", blk.normal, cof_p - cof_m)
        d2 = -0.5 * np.einsum("eqb,eqb->eq", row_jump, 0.5 * (gp + gm))
        d3 = 0.5 * np.einsum("ea,eqab,eqb->eq", blk.normal, 0.5 * (cof_p + cof_m), gp - gm)
        contrib = np.einsum("eq,eqi->ei", (d2 + d3) * blk.wlen, blk.val_p)
        np.add.at(out, space.cell_dofs[blk.tri_p], contrib)
    return _interior(space, out)


# ---------------------------------------------------------------------------
# Poisson form and Dirichlet handling


def assemble_poisson(space: FeSpace, rhs, rule: QuadratureRule | None = None):
    """Weak Laplacian system: int Du . Dphi = -int rhs phi.

    Returns (stiffness over interior rows x all columns, load vector).
    """
    if rule is None:
        rule = triangle_rule(default_volume_degree(space.element.degree))
    rows, cols, vals = [], [], []
    load = np.zeros(space.n_dofs)
    for tris, phys, wdet, val, dphi, _ in _cell_blocks(space, rule):
        kloc = np.einsum("eq,eqjb,eqib->eij", wdet, dphi, dphi, optimize=True)
        dofs = space.cell_dofs[tris]
        rows.append(np.broadcast_to(dofs[:, :, None], kloc.shape).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], kloc.shape).ravel())
        vals.append(kloc.ravel())
        dens = -np.asarray(rhs(phys[..., 0], phys[..., 1]), dtype=float) * wdet
        np.add.at(load, dofs, np.einsum("eq,eqi->ei", dens, val))
    return _matrix_from_triplets(space, rows, cols, vals), _interior(space, load)


def apply_dirichlet(space: FeSpace, g, matrix: SparseMatrix, rhs):
    """Eliminate boundary columns against known boundary values.

    ``g`` is a scalar field (interpolated at the boundary dof coordinates)
    or an array of values aligned with ``space.boundary_dofs``.  Returns the
    square interior system and the boundary values:
    (matrix_II, rhs - matrix_IB @ bc, bc).
    """
    bdofs = space.boundary_dofs
    if callable(g):
        coords = space.dof_coords[bdofs]
        bc = np.asarray(g(coords[:, 0], coords[:, 1]), dtype=float)
        bc = np.broadcast_to(bc, (len(bdofs),)).copy()
    else:
        bc = np.asarray(g, dtype=float)
        if bc.shape != (len(bdofs),):
            raise ValueError(f"boundary values have shape {bc.shape}, expected ({len(bdofs)},)")
    a = matrix.to_scipy()
    a_ii = a[:, space.interior_dofs]
    a_ib = a[:, bdofs]
    reduced = SparseMatrix.from_scipy(a_ii)
    return reduced, np.asarray(rhs, dtype=float) - a_ib @ bc, bc


def lift(space: FeSpace, interior_values, boundary_values) -> np.ndarray:
    """Scatter interior and boundary values into a full coefficient vector."""
    out = np.empty(space.n_dofs)
    out[space.interior_dofs] = interior_values
    out[space.boundary_dofs] = boundary_values
    return out


def boundary_values(space: FeSpace, g) -> np.ndarray:
    """Interpolated boundary data g at the boundary dof coordinates."""
    return interpolate(space, g).coeffs[space.boundary_dofs]
