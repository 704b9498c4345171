"""Galerkin assembly and direct solution on solid NURBS patches.

One element through the thickness is enough for the layered stacks handled
here: the thickness quadrature is layerwise, i.e. every ply inside a knot
span receives its own Gauss points and material tag, so the weak form sees
the exact piecewise stiffness even when the basis is smooth across plies.
The same routines drive the layerwise reference solver, where the thickness
knot spans coincide with the plies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolveError, SpaceError
from .geometry import DisplacementField
from .material import full_to_voigt, rotate_to_frame

__all__ = [
    "inplane_rule",
    "thickness_rule",
    "assemble_stiffness",
    "assemble_face_load",
    "assemble_body_load",
    "dirichlet_dofs",
    "solve_linear",
    "solve_galerkin",
]

_PAIR_I = np.array([0, 1, 2, 1, 0, 0])
_PAIR_J = np.array([0, 1, 2, 2, 2, 1])

# triplet buffers are flushed into CSR at this size to bound memory
_FLUSH_ENTRIES = 12_000_000


def _gauss(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def inplane_rule(kv, npts=None):
    """Per-span Gauss rule, degree+1 points by default."""
    n = kv.degree + 1 if npts is None else int(npts)
    out = []
    for span in kv.spans():
        a, b = kv.span_interval(span)
        pts, wts = _gauss(a, b, n)
        out.append((span, pts, wts))
    return out


def thickness_rule(kv, layup, npts_per_ply=None):
    """Ply-resolved Gauss rule in the thickness direction.

    Every (knot span, ply) overlap gets its own Gauss points tagged with
    the ply index, so a single C^p span integrates the stack exactly as
    well as a layerwise C^0 span layout does.
    """
    n = kv.degree + 1 if npts_per_ply is None else int(npts_per_ply)
    edges = np.concatenate([[0.0], np.cumsum(layup.fractions())])
    edges[-1] = 1.0
    out = []
    for span in kv.spans():
        a, b = kv.span_interval(span)
        pts, wts, tags = [], [], []
        for k in range(layup.num_plies):
            lo, hi = max(a, edges[k]), min(b, edges[k + 1])
            if hi - lo < 1e-14:
                continue
            p, w = _gauss(lo, hi, n)
            pts.append(p)
            wts.append(w)
            tags.append(np.full(n, k, dtype=int))
        out.append((span, np.concatenate(pts), np.concatenate(wts), np.concatenate(tags)))
    return out


def _univariate_table(kv, rule, order=1):
    """Basis values/derivatives for every point of a per-span rule."""
    table = []
    for entry in rule:
        span, pts = entry[0], entry[1]
        vals = np.empty((len(pts), order + 1, kv.degree + 1))
        for q, x in enumerate(pts):
            s, d = kv.basis_ders(x, order)
            if s != span:
                raise SpaceError("quadrature point escaped its span")
            vals[q] = d
        table.append(vals)
    return table


def _tensor_basis(N1, N2, N3, wloc):
    """Rational basis and parametric gradient on a tensor point grid.

    N* are (g, 2, p+1) univariate value/derivative tables; returns
    R (nq, L) and dR (nq, L, 3) flattened in C order over points and
    local functions.
    """
    g1, g2, g3 = N1.shape[0], N2.shape[0], N3.shape[0]
    n1, n2, n3 = N1.shape[2], N2.shape[2], N3.shape[2]
    nq, L = g1 * g2 * g3, n1 * n2 * n3

    def outer(a, b, c):
        t = np.einsum("ai,bj,ck->abcijk", N1[:, a], N2[:, b], N3[:, c])
        return (t * wloc).reshape(nq, L)

    A = outer(0, 0, 0)
    W = A.sum(axis=1, keepdims=True)
    R = A / W
    dR = np.empty((nq, L, 3))
    for d, sel in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
        Ad = outer(*sel)
        Wd = Ad.sum(axis=1, keepdims=True)
        dR[:, :, d] = (Ad - R * Wd) / W
    return R, dR


def _frames(J):
    """Column-stacked local frames for a batch of Jacobians (nq, 3, 3)."""
    g1 = J[:, :, 0]
    g2 = J[:, :, 1]
    a1 = g1 / np.linalg.norm(g1, axis=1, keepdims=True)
    w = np.cross(g1, g2)
    a3 = w / np.linalg.norm(w, axis=1, keepdims=True)
    a2 = np.cross(a3, a1)
    return np.stack([a1, a2, a3], axis=2)


def _rotated_voigt(layup, tags, D):
    """Per-point global Voigt stiffness for tagged ply materials."""
    nq = len(tags)
    out = np.empty((nq, 6, 6))
    for k in np.unique(tags):
        m = tags == k
        cf = layup.ply_stiffness(int(k)).full()
        cg = np.einsum(
            "qia,qjb,qkc,qld,abcd->qijkl", D[m], D[m], D[m], D[m], cf, optimize=True
        )
        out[m] = cg[:, _PAIR_I[:, None], _PAIR_J[:, None], _PAIR_I[None, :], _PAIR_J[None, :]]
    return out


def _strain_matrix(dRdX):
    """Voigt B-matrix (nq, 6, 3L) with engineering shear rows."""
    nq, L, _ = dRdX.shape
    B = np.zeros((nq, 6, 3 * L))
    B[:, 0, 0::3] = dRdX[:, :, 0]
    B[:, 1, 1::3] = dRdX[:, :, 1]
    B[:, 2, 2::3] = dRdX[:, :, 2]
    B[:, 3, 1::3] = dRdX[:, :, 2]
    B[:, 3, 2::3] = dRdX[:, :, 1]
    B[:, 4, 0::3] = dRdX[:, :, 2]
    B[:, 4, 2::3] = dRdX[:, :, 0]
    B[:, 5, 0::3] = dRdX[:, :, 1]
    B[:, 5, 1::3] = dRdX[:, :, 0]
    return B


class _TripletAccumulator:
    """COO triplet buffer that collapses into CSR in bounded memory."""

    def __init__(self, ndof):
        self.ndof = ndof
        self.rows, self.cols, self.vals = [], [], []
        self.count = 0
        self.matrix = sp.csr_matrix((ndof, ndof))

    def add(self, dofs, ke):
        r = np.repeat(dofs, dofs.size)
        c = np.tile(dofs, dofs.size)
        self.rows.append(r)
        self.cols.append(c)
        self.vals.append(ke.ravel())
        self.count += r.size
        if self.count >= _FLUSH_ENTRIES:
            self.flush()

    def flush(self):
        if not self.rows:
            return
        coo = sp.coo_matrix(
            (
                np.concatenate(self.vals),
                (np.concatenate(self.rows), np.concatenate(self.cols)),
            ),
            shape=(self.ndof, self.ndof),
        )
        self.matrix = (self.matrix + coo.tocsr()).tocsr()
        self.rows, self.cols, self.vals = [], [], []
        self.count = 0

    def result(self):
        self.flush()
        return self.matrix


def _element_dofs(space, spans):
    ranges = [np.arange(s - kv.degree, s + 1) for s, kv in zip(spans, space.kvs)]
    grid = np.meshgrid(*ranges, indexing="ij")
    nodes = np.ravel_multi_index(grid, space.shape).ravel()
    return (3 * nodes[:, None] + np.arange(3)[None, :]).ravel()


def assemble_stiffness(patch, layup, npts_inplane=None, npts_per_ply=None):
    """Global stiffness matrix (CSR, symmetric up to roundoff)."""
    space = patch.space
    rules = (
        inplane_rule(space.kvs[0], npts_inplane),
        inplane_rule(space.kvs[1], npts_inplane),
        thickness_rule(space.kvs[2], layup, npts_per_ply),
    )
    tables = [
        _univariate_table(space.kvs[d], rules[d]) for d in range(3)
    ]
    hom = patch.homogeneous()
    acc = _TripletAccumulator(3 * space.num_basis)

    for e1, (s1, p1, w1) in enumerate(rules[0]):
        for e2, (s2, p2, w2) in enumerate(rules[1]):
            for e3, (s3, p3, w3, tags3) in enumerate(rules[2]):
                spans = (s1, s2, s3)
                sl = tuple(
                    slice(s - kv.degree, s + 1) for s, kv in zip(spans, space.kvs)
                )
                wloc = patch.weights[sl][None, None, None]
                R, dR = _tensor_basis(tables[0][e1], tables[1][e2], tables[2][e3], wloc)
                Ploc = patch.control[sl].reshape(-1, 3)

                J = np.einsum("qlt,lx->qxt", dR, Ploc)
                det = np.linalg.det(J)
                if np.any(det <= 0.0):
                    raise SolveError("non-positive Jacobian inside an element")
                Jinv = np.linalg.inv(J)
                dRdX = np.einsum("qlt,qtx->qlx", dR, Jinv)

                D = _frames(J)
                g1, g2, g3 = len(p1), len(p2), len(p3)
                tags = np.broadcast_to(tags3, (g1, g2, g3)).ravel()
                Dv = _rotated_voigt(layup, tags, D)

                wq = (
                    np.einsum("a,b,c->abc", w1, w2, w3).ravel() * det
                )
                B = _strain_matrix(dRdX)
                DB = (Dv @ B) * wq[:, None, None]
                L = B.shape[2]
                Ke = B.reshape(-1, L).T @ DB.reshape(-1, L)

                acc.add(_element_dofs(space, spans), Ke)
    return acc.result()


def assemble_face_load(patch, face, traction, npts=None):
    """Consistent load vector of a traction on one parametric face."""
    axis, side = face
    space = patch.space
    f = np.zeros(3 * space.num_basis)
    if traction is None:
        return f

    kv_f = space.kvs[axis]
    xf = kv_f.domain[side]
    span_f = kv_f.find_span(xf)
    _, df = kv_f.basis_ders(xf, 1)
    Nf = df[None, :, :]  # single "quadrature point" on the face

    t_axes = [d for d in range(3) if d != axis]
    rule_u = inplane_rule(space.kvs[t_axes[0]], npts)
    rule_v = inplane_rule(space.kvs[t_axes[1]], npts)
    tab_u = _univariate_table(space.kvs[t_axes[0]], rule_u)
    tab_v = _univariate_table(space.kvs[t_axes[1]], rule_v)

    for eu, (su, pu, wu) in enumerate(rule_u):
        for ev, (sv, pv, wv) in enumerate(rule_v):
            spans = [0, 0, 0]
            spans[axis] = span_f
            spans[t_axes[0]] = su
            spans[t_axes[1]] = sv
            spans = tuple(spans)
            sl = tuple(
                slice(s - kv.degree, s + 1) for s, kv in zip(spans, space.kvs)
            )
            wloc = patch.weights[sl][None, None, None]
            tabs = [None, None, None]
            tabs[axis] = Nf
            tabs[t_axes[0]] = tab_u[eu]
            tabs[t_axes[1]] = tab_v[ev]
            R, dR = _tensor_basis(tabs[0], tabs[1], tabs[2], wloc)
            Ploc = patch.control[sl].reshape(-1, 3)

            X = R @ Ploc
            J = np.einsum("qlt,lx->qxt", dR, Ploc)
            gu = J[:, :, t_axes[0]]
            gv = J[:, :, t_axes[1]]
            meas = np.linalg.norm(np.cross(gu, gv), axis=1)
            D = _frames(J)

            tq = np.empty((len(X), 3))
            for q in range(len(X)):
                frame = _FrameView(X[q], D[q])
                tq[q] = traction(X[q], frame)

            wq = np.einsum("a,b->ab", wu, wv).ravel() * meas
            fe = np.einsum("q,ql,qc->lc", wq, R, tq).ravel()
            f[_element_dofs(space, spans)] += fe
    return f


class _FrameView:
    """Minimal frame handle passed to traction callables."""

    __slots__ = ("x", "D")

    def __init__(self, x, D):
        self.x = x
        self.D = D


def assemble_body_load(patch, body, layup, npts_inplane=None, npts_per_ply=None):
    """Consistent load vector of a body force density b(x) -> (3,)."""
    space = patch.space
    rules = (
        inplane_rule(space.kvs[0], npts_inplane),
        inplane_rule(space.kvs[1], npts_inplane),
        thickness_rule(space.kvs[2], layup, npts_per_ply),
    )
    tables = [_univariate_table(space.kvs[d], rules[d]) for d in range(3)]
    f = np.zeros(3 * space.num_basis)

    for e1, (s1, p1, w1) in enumerate(rules[0]):
        for e2, (s2, p2, w2) in enumerate(rules[1]):
            for e3, entry in enumerate(rules[2]):
                s3, p3, w3 = entry[0], entry[1], entry[2]
                spans = (s1, s2, s3)
                sl = tuple(
                    slice(s - kv.degree, s + 1) for s, kv in zip(spans, space.kvs)
                )
                wloc = patch.weights[sl][None, None, None]
                R, dR = _tensor_basis(tables[0][e1], tables[1][e2], tables[2][e3], wloc)
                Ploc = patch.control[sl].reshape(-1, 3)
                X = R @ Ploc
                J = np.einsum("qlt,lx->qxt", dR, Ploc)
                det = np.linalg.det(J)
                bq = np.array([body(x) for x in X])
                wq = np.einsum("a,b,c->abc", w1, w2, w3).ravel() * det
                fe = np.einsum("q,ql,qc->lc", wq, R, bq).ravel()
                f[_element_dofs(space, spans)] += fe
    return f


def dirichlet_dofs(patch, bcs):
    """Constrained control dofs and their values from a BC set."""
    space = patch.space
    shape = space.shape
    fixed = {}
    for (axis, side), face in bcs.faces.items():
        if not face.dirichlet:
            continue
        idx = [np.arange(n) for n in shape]
        idx[axis] = np.array([0 if side == 0 else shape[axis] - 1])
        grid = np.meshgrid(*idx, indexing="ij")
        nodes = np.ravel_multi_index(grid, shape).ravel()
        if face.value is None:
            for c in face.dirichlet:
                for n in nodes:
                    fixed[3 * n + c] = 0.0
        else:
            pts = patch.control.reshape(-1, 3)[nodes]
            for n, x in zip(nodes, pts):
                val = np.asarray(face.value(x), float)
                for c in face.dirichlet:
                    fixed[3 * n + c] = float(val[c])
    if bcs.pin_component is not None:
        c = bcs.pin_component
        pinned = 3 * 0 + c
        if pinned not in fixed:
            fixed[pinned] = 0.0
    return fixed


def solve_linear(K, f, fixed):
    """Eliminate Dirichlet dofs and solve with a sparse direct factorization.

    Returns the full dof vector and the relative residual of the reduced
    system.
    """
    ndof = K.shape[0]
    fixed_idx = np.fromiter(fixed.keys(), dtype=int, count=len(fixed))
    fixed_val = np.fromiter(fixed.values(), dtype=float, count=len(fixed))
    free = np.ones(ndof, dtype=bool)
    free[fixed_idx] = False

    u = np.zeros(ndof)
    u[fixed_idx] = fixed_val
    rhs = f[free] - K[:, fixed_idx][free] @ fixed_val
    Kff = K[free][:, free].tocsc()
    try:
        lu = spla.splu(Kff)
        uf = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolveError(f"sparse factorization failed: {exc}") from exc
    if not np.all(np.isfinite(uf)):
        raise SolveError("solver produced non-finite values (singular system?)")
    u[free] = uf

    res = np.linalg.norm(Kff @ uf - rhs)
    ref = np.linalg.norm(rhs)
    rel = res / ref if ref > 0 else res
    return u, rel


@dataclass
class SolveReport:
    field: DisplacementField
    residual: float
    ndof: int
    nfixed: int


def solve_galerkin(
    patch,
    layup,
    bcs,
    npts_inplane=None,
    npts_per_ply=None,
    body=None,
    residual_tol=1e-9,
):
    """Assemble and solve the Galerkin system on ``patch``.

    Traction faces come from ``bcs``; ``body`` is an optional body-force
    density.  Raises SolveError when the reduced system cannot be solved
    to ``residual_tol``.
    """
    K = assemble_stiffness(patch, layup, npts_inplane, npts_per_ply)
    f = np.zeros(K.shape[0])
    for key, face in bcs.faces.items():
        if face.traction is not None:
            f += assemble_face_load(patch, key, face.traction, npts_inplane)
    if body is not None:
        f += assemble_body_load(patch, body, layup, npts_inplane, npts_per_ply)

    fixed = dirichlet_dofs(patch, bcs)
    u, rel = solve_linear(K, f, fixed)
    if rel > residual_tol:
        raise SolveError(f"linear solve residual {rel:.2e} above {residual_tol:.0e}")
    coeffs = u.reshape(patch.shape + (3,))
    return SolveReport(
        field=DisplacementField(patch, coeffs),
        residual=rel,
        ndof=K.shape[0],
        nfixed=len(fixed),
    )
