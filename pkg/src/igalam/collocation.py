"""Strong-form isogeometric collocation at Greville points.

The stack is replaced by a single homogenized stiffness that is constant in
the moving frame, so the divergence of the stress picks up frame-gradient
terms: with D the frame components and Atil its physical gradient,

    sigma_ij,j = G_ikl eps_kl + Ctilde_ijkl eps_kl,j ,

where G collects the four products of Atil with the remaining frame factors
against the homogenized tensor.  Boundary points get traction rows (summed
over adjacent Neumann faces at edges and corners) or interpolatory
Dirichlet rows; Dirichlet wins per component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolveError
from .geometry import DisplacementField, frame_jet, map_jet
from .material import homogenize, rotate_to_frame
from .splines import rational_jet

__all__ = ["solve_collocation", "CollocationReport"]


def _basis_physical(patch, xi, order):
    """Per-basis Cartesian derivatives at one point.

    Returns (flat_indices, R, dRdX, d2RdX) with d2RdX present only for
    order >= 2.
    """
    space = patch.space
    jet = rational_jet(space, patch.weights, xi, order)
    mj = map_jet(patch, xi, order)
    R = jet.value
    n = R.size

    dRp = np.empty((n, 3))
    dRp[:, 0] = jet.partials[(1, 0, 0)]
    dRp[:, 1] = jet.partials[(0, 1, 0)]
    dRp[:, 2] = jet.partials[(0, 0, 1)]
    dRdX = dRp @ mj.jinv

    d2RdX = None
    if order >= 2:
        d2Rp = np.empty((n, 3, 3))
        for a in range(3):
            for b in range(a, 3):
                al = [0, 0, 0]
                al[a] += 1
                al[b] += 1
                v = jet.partials[tuple(al)]
                d2Rp[:, a, b] = v
                d2Rp[:, b, a] = v
        core = d2Rp - np.einsum("nm,mtf->ntf", dRdX, mj.d2F)
        d2RdX = np.einsum("ntf,tj,fk->njk", core, mj.jinv, mj.jinv)
    return jet.flat_indices(), R, dRdX, d2RdX, mj


def _interior_block(patch, layup_cbar, xi):
    """Row coefficients of sigma_ij,j at one interior point."""
    fr = frame_jet(patch, xi, order=1)
    D, At = fr.D, fr.Atil
    cb = layup_cbar
    ct = rotate_to_frame(cb, D)
    divAt = np.einsum("jbj->b", At)
    G = (
        np.einsum("iaj,jb,kc,ld,abcd->ikl", At, D, D, D, cb, optimize=True)
        + np.einsum("ia,b,kc,ld,abcd->ikl", D, divAt, D, D, cb, optimize=True)
        + np.einsum("ia,jb,kcj,ld,abcd->ikl", D, D, At, D, cb, optimize=True)
        + np.einsum("ia,jb,kc,ldj,abcd->ikl", D, D, D, At, cb, optimize=True)
    )
    idx, R, dRdX, d2RdX, _ = _basis_physical(patch, xi, 2)
    # rows[i, n, c] multiplies u_hat[n, c]
    rows = np.einsum("icl,nl->inc", G, dRdX) + np.einsum(
        "ijcl,nlj->inc", ct, d2RdX, optimize=True
    )
    return idx, rows, fr


def _traction_block(patch, ctilde, xi, face):
    """Row coefficients of sigma_ij n_j on one face at one point."""
    axis, side = face
    idx, R, dRdX, _, mj = _basis_physical(patch, xi, 1)
    n = mj.jinv[axis]
    n = n / np.linalg.norm(n)
    if side == 0:
        n = -n
    rows = np.einsum("ijcl,nl,j->inc", ctilde, dRdX, n, optimize=True)
    return idx, rows, n


@dataclass
class CollocationReport:
    field: DisplacementField
    residual: float
    ndof: int
    n_interior: int
    n_boundary: int


def solve_collocation(patch, layup, bcs, body=None, residual_tol=1e-9):
    """Collocate the homogenized strong form on the Greville grid.

    ``bcs.pin_component`` (if set and otherwise unconstrained) swaps the
    equilibrium row of that component at the collocation point closest to
    the domain center along axis 0 for the gauge row u_c = 0; the load is
    assumed consistent with that constraint.
    """
    space = patch.space
    shape = space.shape
    grev = space.greville()
    cbar = homogenize(layup).full()

    rows_i, cols_i, vals_i = [], [], []
    rhs = np.zeros(3 * space.num_basis)
    n_interior = 0
    n_boundary = 0

    doms = [kv.domain for kv in space.kvs]

    def faces_of(idx3):
        out = []
        for axis in range(3):
            if idx3[axis] == 0:
                out.append((axis, 0))
            elif idx3[axis] == shape[axis] - 1:
                out.append((axis, 1))
        return out

    # gauge row placement: nearest to mid along axis 0, then to the center
    pin_target = None
    if bcs.pin_component is not None:
        mids = [0.5 * (d[0] + d[1]) for d in doms]
        best = None
        for i1, t1 in enumerate(grev[0]):
            for i2, t2 in enumerate(grev[1]):
                for i3, t3 in enumerate(grev[2]):
                    if faces_of((i1, i2, i3)):
                        continue
                    key = (abs(t1 - mids[0]), abs(t2 - mids[1]), abs(t3 - mids[2]))
                    if best is None or key < best[0]:
                        best = (key, (i1, i2, i3))
        if best is None:
            raise SolveError("no interior collocation point available for the gauge")
        pin_target = best[1]

    for i1, t1 in enumerate(grev[0]):
        for i2, t2 in enumerate(grev[1]):
            for i3, t3 in enumerate(grev[2]):
                node = int(np.ravel_multi_index((i1, i2, i3), shape))
                xi = (float(t1), float(t2), float(t3))
                on_faces = faces_of((i1, i2, i3))

                if not on_faces:
                    idx, blk, fr = _interior_block(patch, cbar, xi)
                    comps = (0, 1, 2)
                    if pin_target == (i1, i2, i3):
                        c = bcs.pin_component
                        comps = tuple(k for k in comps if k != c)
                        jet = rational_jet(space, patch.weights, xi, 0)
                        rows_i.append(np.full(idx.size, 3 * node + c))
                        cols_i.append(3 * jet.flat_indices() + c)
                        vals_i.append(jet.value)
                        rhs[3 * node + c] = 0.0
                    for i in comps:
                        rows_i.append(np.full(idx.size * 3, 3 * node + i))
                        cols_i.append((3 * idx[:, None] + np.arange(3)).ravel())
                        vals_i.append(blk[i].ravel())
                        if body is not None:
                            rhs[3 * node + i] = -body(fr.x)[i]
                    n_interior += 1
                    continue

                n_boundary += 1
                dir_comps = bcs.dirichlet_components(on_faces)
                neu_comps = tuple(c for c in range(3) if c not in dir_comps)

                if dir_comps:
                    jet = rational_jet(space, patch.weights, xi, 0)
                    bidx = jet.flat_indices()
                    x = map_jet(patch, xi, 1).x
                    for key in on_faces:
                        fb = bcs.face(key)
                        if fb.value is not None and fb.dirichlet:
                            val = np.asarray(fb.value(x), float)
                            for c in fb.dirichlet:
                                rhs[3 * node + c] = float(val[c])
                    for c in dir_comps:
                        rows_i.append(np.full(bidx.size, 3 * node + c))
                        cols_i.append(3 * bidx + c)
                        vals_i.append(jet.value)

                if neu_comps:
                    fr = frame_jet(patch, xi, order=0)
                    ct = rotate_to_frame(cbar, fr.D)
                    acc = None
                    tacc = np.zeros(3)
                    for key in on_faces:
                        idx, blk, nvec = _traction_block(patch, ct, xi, key)
                        acc = blk if acc is None else acc + blk
                        fb = bcs.face(key)
                        if fb.traction is not None:
                            tacc += np.asarray(fb.traction(fr.x, fr), float)
                    for c in neu_comps:
                        rows_i.append(np.full(idx.size * 3, 3 * node + c))
                        cols_i.append((3 * idx[:, None] + np.arange(3)).ravel())
                        vals_i.append(acc[c].ravel())
                        rhs[3 * node + c] = tacc[c]

    ndof = 3 * space.num_basis
    A = sp.coo_matrix(
        (np.concatenate(vals_i), (np.concatenate(rows_i), np.concatenate(cols_i))),
        shape=(ndof, ndof),
    ).tocsc()

    try:
        lu = spla.splu(A)
        u = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolveError(f"collocation factorization failed: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise SolveError("collocation produced non-finite values")

    res = np.linalg.norm(A @ u - rhs)
    ref = np.linalg.norm(rhs)
    rel = res / ref if ref > 0 else res
    if rel > residual_tol:
        raise SolveError(f"collocation residual {rel:.2e} above {residual_tol:.0e}")

    coeffs = u.reshape(patch.shape + (3,))
    return CollocationReport(
        field=DisplacementField(patch, coeffs),
        residual=rel,
        ndof=ndof,
        n_interior=n_interior,
        n_boundary=n_boundary,
    )
