"""Solid NURBS patches: map jets, local frames, and field derivatives.

The local frame follows the usual shell construction: a1 along the first
covariant direction, a3 along the normal of the (xi1, xi2) surface, and
a2 = a3 x a1.  Frame gradients in physical coordinates are obtained by
differentiating the normalizations directly, then inverting the geometry
map through its Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, RefinementError, SpaceError
from .splines import (
    KnotVector,
    TensorSpace,
    elevate_degree,
    insert_knots,
    make_open_uniform,
    rational_jet,
)

__all__ = [
    "NurbsPatch",
    "MapJet",
    "Frame",
    "map_jet",
    "frame_jet",
    "field_jet",
    "invert_map",
    "build_quarter_cylinder",
    "build_box",
]

_EYE = np.eye(3)


class NurbsPatch:
    """Trivariate NURBS patch.

    Parameters
    ----------
    space : TensorSpace
    control : ndarray, shape space.shape + (3,)
        Control point coordinates in mm.
    weights : ndarray, shape space.shape
        Strictly positive weights.
    """

    def __init__(self, space, control, weights):
        control = np.asarray(control, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if control.shape != space.shape + (3,):
            raise SpaceError(
                f"control shape {control.shape} does not match space {space.shape}"
            )
        if weights.shape != space.shape:
            raise SpaceError("weights shape does not match the space")
        if np.any(weights <= 0.0):
            raise GeometryError("control weights must be strictly positive")
        self.space = space
        self.control = control
        self.weights = weights

    @property
    def shape(self):
        return self.space.shape

    @property
    def degrees(self):
        return self.space.degrees

    def homogeneous(self):
        """Control data as (m1, m2, m3, 4) array of (w*x, w*y, w*z, w)."""
        h = np.empty(self.shape + (4,))
        h[..., :3] = self.control * self.weights[..., None]
        h[..., 3] = self.weights
        return h

    @classmethod
    def from_homogeneous(cls, space, hom):
        w = hom[..., 3]
        if np.any(w <= 0.0):
            raise GeometryError("refinement produced non-positive weights")
        return cls(space, hom[..., :3] / w[..., None], w)

    def refined(self, degrees, num_basis=None, interior_knots=None):
        """New patch on a finer space describing the same geometry.

        Per direction the degree is raised first (only legal while that
        direction has no interior knots), then interior knots are inserted:
        either uniformly up to ``num_basis[d]`` or the explicit
        ``interior_knots[d]`` list (values repeated for multiplicity).

        Returns
        -------
        NurbsPatch
        """
        degrees = tuple(int(d) for d in degrees)
        if num_basis is None:
            num_basis = (None, None, None)
        if interior_knots is None:
            interior_knots = (None, None, None)
        hom = self.homogeneous()
        kvs = []
        for d in range(3):
            kv = self.space.kvs[d]
            hom = np.moveaxis(hom, d, 0)
            lead = hom.shape[0]
            rest = hom.shape[1:]
            flat = hom.reshape(lead, -1)
            kv, flat = elevate_degree(kv, flat, degrees[d] - kv.degree)
            if interior_knots[d] is not None:
                values = list(interior_knots[d])
            elif num_basis[d] is not None:
                target = int(num_basis[d])
                if target < kv.num_basis:
                    raise RefinementError(
                        f"direction {d}: cannot coarsen {kv.num_basis} -> {target}"
                    )
                a, b = kv.domain
                nspans = target - kv.degree
                values = [a + (b - a) * i / nspans for i in range(1, nspans)]
                values = [v for v in values if v not in kv.knots]
            else:
                values = []
            kv, flat = insert_knots(kv, flat, values)
            hom = np.moveaxis(flat.reshape((kv.num_basis,) + rest), 0, d)
            kvs.append(kv)
        return NurbsPatch.from_homogeneous(TensorSpace(*kvs), hom)

    def to_dict(self):
        """JSON-compatible description (degrees, knots, row-major points)."""
        return {
            "degrees": list(self.degrees),
            "knots": [kv.knots.tolist() for kv in self.space.kvs],
            "control_points": self.control.reshape(-1, 3).tolist(),
            "weights": self.weights.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        kvs = [KnotVector(p, k) for p, k in zip(data["degrees"], data["knots"])]
        space = TensorSpace(*kvs)
        control = np.asarray(data["control_points"], float).reshape(space.shape + (3,))
        weights = np.asarray(data["weights"], float).reshape(space.shape)
        return cls(space, control, weights)


def _spline_partials(space, weights, coeffs, xi, order):
    """Parametric partial tensors of a NURBS field at one point.

    Returns the list ``[T0, T1, ..., Torder]`` where ``Tk`` has shape
    ``(ncomp,) + (3,)*k`` and holds the symmetric parametric partials.
    """
    jet = rational_jet(space, weights, xi, order)
    sl = tuple(slice(s - p, s + 1) for s, p in zip(jet.spans, jet.degrees))
    c = coeffs[sl].reshape(-1, coeffs.shape[-1])

    out = [jet.value @ c]
    if order >= 1:
        t1 = np.empty((c.shape[1], 3))
        for d in range(3):
            al = tuple(1 if k == d else 0 for k in range(3))
            t1[:, d] = jet.partials[al] @ c
        out.append(t1)
    if order >= 2:
        t2 = np.empty((c.shape[1], 3, 3))
        for d1 in range(3):
            for d2 in range(d1, 3):
                al = [0, 0, 0]
                al[d1] += 1
                al[d2] += 1
                v = jet.partials[tuple(al)] @ c
                t2[:, d1, d2] = v
                t2[:, d2, d1] = v
        out.append(t2)
    if order >= 3:
        t3 = np.empty((c.shape[1], 3, 3, 3))
        for d1 in range(3):
            for d2 in range(d1, 3):
                for d3 in range(d2, 3):
                    al = [0, 0, 0]
                    al[d1] += 1
                    al[d2] += 1
                    al[d3] += 1
                    v = jet.partials[tuple(al)] @ c
                    for perm in {
                        (d1, d2, d3), (d1, d3, d2), (d2, d1, d3),
                        (d2, d3, d1), (d3, d1, d2), (d3, d2, d1),
                    }:
                        t3[(slice(None),) + perm] = v
            # symmetric fill covers all index orderings
        out.append(t3)
    return out


@dataclass
class MapJet:
    """Geometry map F and its derivatives at one parametric point.

    Index convention: ``dF[i, theta] = dF_i/dxi^theta`` and ``jinv`` is the
    inverse Jacobian, ``jinv[theta, i] = dxi^theta/dX_i``.
    """

    xi: np.ndarray
    x: np.ndarray
    dF: np.ndarray
    det: float
    jinv: np.ndarray
    d2F: np.ndarray | None = None
    d3F: np.ndarray | None = None


def map_jet(patch, xi, order=1):
    """Evaluate the geometry map with derivatives up to ``order`` (1..3)."""
    parts = _spline_partials(patch.space, patch.weights, patch.control, xi, order)
    x = parts[0]
    dF = parts[1]
    det = float(np.linalg.det(dF))
    if det <= 0.0:
        raise GeometryError(f"non-positive Jacobian determinant {det} at xi={xi}")
    jinv = np.linalg.inv(dF)
    return MapJet(
        xi=np.asarray(xi, float),
        x=x,
        dF=dF,
        det=det,
        jinv=jinv,
        d2F=parts[2] if order >= 2 else None,
        d3F=parts[3] if order >= 3 else None,
    )


def field_jet(patch, coeffs, xi, order):
    """Cartesian derivatives of a spline field living on ``patch``.

    Parameters
    ----------
    coeffs : ndarray, shape patch.shape + (ncomp,)
    order : int, 0..3

    Returns
    -------
    list of ndarrays
        ``[u, du, d2u, d3u][:order+1]`` with ``du[i, j] = du_i/dX_j`` etc.
        All derivative tensors are symmetric in their X indices.
    """
    parts = _spline_partials(patch.space, patch.weights, coeffs, xi, order)
    out = [parts[0]]
    if order == 0:
        return out
    mj = map_jet(patch, xi, order)
    Ji = mj.jinv
    du = np.einsum("ct,tj->cj", parts[1], Ji)
    out.append(du)
    if order >= 2:
        core = parts[2] - np.einsum("cm,mtf->ctf", du, mj.d2F)
        d2u = np.einsum("ctf,tj,fk->cjk", core, Ji, Ji)
        out.append(d2u)
    if order >= 3:
        mid = (
            np.einsum("atp,bf->abtfp", mj.d2F, mj.dF)
            + np.einsum("at,bfp->abtfp", mj.dF, mj.d2F)
            + np.einsum("atf,bp->abtfp", mj.d2F, mj.dF)
        )
        core = (
            parts[3]
            - np.einsum("cab,abtfp->ctfp", d2u, mid)
            - np.einsum("ca,atfp->ctfp", du, mj.d3F)
        )
        d3u = np.einsum("ctfp,tj,fk,pl->cjkl", core, Ji, Ji, Ji)
        out.append(d3u)
    return out


def _normalized_jet(v, dv=None, d2v=None):
    """Jets of u = v/|v| given jets of v.

    dv has shape (3, 3) with dv[theta] = dv/dxi^theta; d2v has shape
    (3, 3, 3) with d2v[theta, phi].  Returns matching shapes for u.
    """
    n = np.linalg.norm(v)
    if n == 0.0:
        raise GeometryError("cannot normalize a zero vector")
    u = v / n
    if dv is None:
        return u, None, None
    dn = dv @ u
    du = (dv - np.outer(dn, u)) / n
    if d2v is None:
        return u, du, None
    d2n = np.einsum("fi,ti->tf", du, dv) + d2v @ u
    d2u = (
        d2v
        - np.einsum("f,ti->tfi", dn, du)
        - np.einsum("tf,i->tfi", d2n, u)
        - np.einsum("t,fi->tfi", dn, du)
    ) / n
    return u, du, d2u


@dataclass
class Frame:
    """Local orthonormal frame and its physical gradients at one point.

    ``D[i, alpha]`` are the moving-frame components (columns are the frame
    vectors in global coordinates); ``C`` is the snapshot version used to
    take components.  ``A[psi, alpha, mu] = e_alpha . d a_psi / d s_mu``
    and ``B[psi, alpha, mu, nu] = e_alpha . d2 a_psi / d s_mu d s_nu``
    are frame gradients along the snapshot axes, projected on the snapshot
    frame (first slot names the differentiated vector, second the
    component); ``Atil[i, alpha, j] = dD[i, alpha]/dX_j`` is snapshot
    independent.
    """

    xi: np.ndarray
    x: np.ndarray
    D: np.ndarray
    C: np.ndarray
    A: np.ndarray | None = None
    Atil: np.ndarray | None = None
    B: np.ndarray | None = None


def frame_jet(patch, xi, order=0, snapshot=None):
    """Local frame with physical gradients up to ``order`` (0..2).

    ``snapshot`` is the constant component matrix C (defaults to the frame
    at the evaluation point itself, making C == D there).  The geometry map
    is differentiated one order beyond the requested frame order.
    """
    mj = map_jet(patch, xi, order + 1)
    g1 = mj.dF[:, 0]
    g2 = mj.dF[:, 1]
    w = np.cross(g1, g2)

    if order == 0:
        a1, _, _ = _normalized_jet(g1)
        a3, _, _ = _normalized_jet(w)
        a2 = np.cross(a3, a1)
        D = np.column_stack([a1, a2, a3])
        C = D.copy() if snapshot is None else np.asarray(snapshot, float)
        return Frame(xi=np.asarray(xi, float), x=mj.x, D=D, C=C)

    # dg1[theta] = dF_{,1 theta}; index order (theta, i)
    dg1 = mj.d2F[:, 0, :].T
    dg2 = mj.d2F[:, 1, :].T
    dw = np.cross(dg1, g2[None, :]) + np.cross(g1[None, :], dg2)

    d2g1 = d2g2 = d2w = None
    if order >= 2:
        d2g1 = np.einsum("itf->tfi", mj.d3F[:, 0])
        d2g2 = np.einsum("itf->tfi", mj.d3F[:, 1])
        d2w = (
            np.cross(d2g1, g2[None, None, :])
            + np.cross(dg1[:, None, :], dg2[None, :, :])
            + np.cross(dg1[None, :, :], dg2[:, None, :])
            + np.cross(g1[None, None, :], d2g2)
        )

    a1, da1, d2a1 = _normalized_jet(g1, dg1, d2g1)
    a3, da3, d2a3 = _normalized_jet(w, dw, d2w)
    a2 = np.cross(a3, a1)
    da2 = np.cross(da3, a1[None, :]) + np.cross(a3[None, :], da1)

    D = np.column_stack([a1, a2, a3])
    C = D.copy() if snapshot is None else np.asarray(snapshot, float)

    # da[alpha, theta, i] = d a_alpha / d xi^theta
    da = np.stack([da1, da2, da3])
    # physical gradients: d a_alpha / d X_j = da/dxi^theta jinv[theta, j]
    da_dX = np.einsum("ati,tj->aji", da, mj.jinv)
    Atil = np.einsum("aji->iaj", da_dX)
    # directional derivatives along the snapshot axes e_mu
    da_dx = np.einsum("aji,jm->ami", da_dX, C)
    A = np.einsum("pmi,ia->pam", da_dx, C)

    B = None
    if order >= 2:
        d2a2 = (
            np.cross(d2a3, a1[None, None, :])
            + np.cross(da3[:, None, :], da1[None, :, :])
            + np.cross(da3[None, :, :], da1[:, None, :])
            + np.cross(a3[None, None, :], d2a1)
        )
        d2a = np.stack([d2a1, d2a2, d2a3])  # (alpha, theta, phi, i)
        core = d2a - np.einsum("aki,ktf->atfi", da_dX, mj.d2F)
        d2a_dX = np.einsum("atfi,tj,fk->ajki", core, mj.jinv, mj.jinv)
        d2a_dx = np.einsum("ajki,jm,kn->amni", d2a_dX, C, C)
        B = np.einsum("pmni,ia->pamn", d2a_dx, C)

    return Frame(
        xi=np.asarray(xi, float), x=mj.x, D=D, C=C, A=A, Atil=Atil, B=B
    )


@dataclass
class DisplacementField:
    """Vector field given by control coefficients on a patch."""

    patch: NurbsPatch
    coeffs: np.ndarray  # patch.shape + (3,)

    def derivatives(self, xi, order):
        """Value and Cartesian derivatives, see :func:`field_jet`."""
        return field_jet(self.patch, self.coeffs, xi, order)


def invert_map(patch, x_target, xi0, tol=1e-12, maxit=40):
    """Newton inversion of the geometry map near a known parameter point."""
    x_target = np.asarray(x_target, float)
    xi = np.array(xi0, float)
    scale = 1.0 + np.linalg.norm(x_target)
    for _ in range(maxit):
        mj = map_jet(patch, xi, 1)
        r = mj.x - x_target
        if np.linalg.norm(r) <= tol * scale:
            return xi
        xi = xi - np.linalg.solve(mj.dF, r)
        xi = np.clip(
            xi,
            [kv.domain[0] for kv in patch.space.kvs],
            [kv.domain[1] for kv in patch.space.kvs],
        )
    raise GeometryError(f"map inversion did not converge near xi0={xi0}")


def build_quarter_cylinder(inner_radius, outer_radius, length):
    """Exact quarter of a thick cylindrical tube.

    Parametric axes: xi1 axial (X1 in [0, length]), xi2 circumferential
    (from the X2 = 0 plane at xi2 = 0, sweeping to the X3 = 0 plane at
    xi2 = 1), xi3 radial from ``inner_radius`` to ``outer_radius``.  The
    sweep direction is chosen so the frame normal a3 points radially
    outward, i.e. xi3 increases along a3.

    Returns
    -------
    NurbsPatch
        Degrees (1, 2, 1) with the classical (1, sqrt(2)/2, 1) arc weights.
    """
    if not (0.0 < inner_radius < outer_radius):
        raise GeometryError("radii must satisfy 0 < inner < outer")
    kv1 = KnotVector(1, [0.0, 0.0, 1.0, 1.0])
    kv2 = KnotVector(2, [0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    kv3 = KnotVector(1, [0.0, 0.0, 1.0, 1.0])
    space = TensorSpace(kv1, kv2, kv3)

    # unit quarter arc in the (X2, X3) plane, swept from theta = pi/2 to 0
    arc = np.array([[0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])
    wa = np.array([1.0, np.sqrt(2.0) / 2.0, 1.0])

    control = np.empty((2, 3, 2, 3))
    weights = np.empty((2, 3, 2))
    radii = (inner_radius, outer_radius)
    for i1, x1 in enumerate((0.0, length)):
        for j in range(3):
            for i3, r in enumerate(radii):
                control[i1, j, i3] = (x1, r * arc[j, 0], r * arc[j, 1])
                weights[i1, j, i3] = wa[j]
    return NurbsPatch(space, control, weights)


def build_box(lengths, degrees=(1, 1, 1)):
    """Axis-aligned box [0,L1] x [0,L2] x [0,L3] with unit weights."""
    kvs = [make_open_uniform(p, p + 1) for p in degrees]
    space = TensorSpace(*kvs)
    grev = [kv.greville() for kv in kvs]
    control = np.stack(
        np.meshgrid(
            grev[0] * lengths[0], grev[1] * lengths[1], grev[2] * lengths[2],
            indexing="ij",
        ),
        axis=-1,
    )
    return NurbsPatch(space, control, np.ones(space.shape))
