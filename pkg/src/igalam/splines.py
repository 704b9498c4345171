"""B-spline knot vectors and tensor-product NURBS bases.

Univariate evaluation follows the classical recurrences of Piegl & Tiller,
The NURBS Book, 2nd ed. (algorithms A2.1 and A2.3).  Rational derivatives of
the trivariate basis are produced by the generalized quotient rule, so every
mixed partial up to total order 3 is available in one pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RefinementError, SpaceError

__all__ = [
    "KnotVector",
    "TensorSpace",
    "RationalJet",
    "make_open_uniform",
    "insert_knots",
    "elevate_degree",
    "multi_indices",
    "rational_jet",
]


class KnotVector:
    """Open (clamped) knot vector of a univariate B-spline space.

    Parameters
    ----------
    degree : int
        Polynomial degree, at least 1.
    knots : array_like
        Non-decreasing knot sequence.  The first and last knot must each
        appear exactly ``degree + 1`` times; interior multiplicities may
        not exceed the degree (multiplicity == degree gives a C0 line).
    """

    def __init__(self, degree, knots):
        knots = np.atleast_1d(np.asarray(knots, dtype=float))
        if degree < 0:
            raise SpaceError(f"degree must be >= 0, got {degree}")
        if knots.ndim != 1 or knots.size < 2 * (degree + 1):
            raise SpaceError(f"knot vector too short for degree {degree}")
        if np.any(np.diff(knots) < 0.0):
            raise SpaceError("knot vector must be non-decreasing")
        vals, counts = np.unique(knots, return_counts=True)
        if counts[0] != degree + 1 or counts[-1] != degree + 1:
            raise SpaceError("end knots must have multiplicity exactly degree+1")
        # degree 0 is piecewise constant, discontinuous at every breakpoint
        if degree >= 1 and counts.size > 2 and np.any(counts[1:-1] > degree):
            raise SpaceError("interior knot multiplicity exceeds degree")
        self.degree = int(degree)
        self.knots = knots
        self.knots.flags.writeable = False

    @property
    def num_basis(self):
        return self.knots.size - self.degree - 1

    @property
    def domain(self):
        return float(self.knots[self.degree]), float(self.knots[-self.degree - 1])

    @property
    def breakpoints(self):
        return np.unique(self.knots)

    def spans(self):
        """Indices of the non-empty knot spans."""
        U = self.knots
        return [i for i in range(self.degree, self.num_basis) if U[i] < U[i + 1]]

    def span_interval(self, span):
        return float(self.knots[span]), float(self.knots[span + 1])

    def _clamped(self, x):
        a, b = self.domain
        tol = 1e-12 * (b - a)
        if x < a - tol or x > b + tol:
            raise DomainError(f"x={x!r} outside parametric domain [{a}, {b}]")
        return min(max(float(x), a), b)

    def find_span(self, x):
        """Knot span index containing x (last span at the right end)."""
        x = self._clamped(x)
        span = int(np.searchsorted(self.knots, x, side="right")) - 1
        return min(max(span, self.degree), self.num_basis - 1)

    def basis_ders(self, x, order):
        """Nonzero basis functions and their derivatives at x.

        Returns
        -------
        span : int
        ders : ndarray, shape (order + 1, degree + 1)
            ``ders[k, j]`` is the k-th derivative of basis function
            ``span - degree + j``.  Rows beyond the degree are zero.
        """
        x = self._clamped(x)
        span = self.find_span(x)
        p = self.degree
        U = self.knots
        n = min(order, p)

        ndu = np.empty((p + 1, p + 1))
        left = np.empty(p + 1)
        right = np.empty(p + 1)
        ndu[0, 0] = 1.0
        for j in range(1, p + 1):
            left[j] = x - U[span + 1 - j]
            right[j] = U[span + j] - x
            saved = 0.0
            for r in range(j):
                ndu[j, r] = right[r + 1] + left[j - r]
                temp = ndu[r, j - 1] / ndu[j, r]
                ndu[r, j] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            ndu[j, j] = saved

        ders = np.zeros((order + 1, p + 1))
        ders[0] = ndu[:, p]
        a = np.empty((2, p + 1))
        for r in range(p + 1):
            s1, s2 = 0, 1
            a[0, 0] = 1.0
            for k in range(1, n + 1):
                d = 0.0
                rk = r - k
                pk = p - k
                if r >= k:
                    a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                    d = a[s2, 0] * ndu[rk, pk]
                j1 = 1 if rk >= -1 else -rk
                j2 = k - 1 if r - 1 <= pk else p - r
                for j in range(j1, j2 + 1):
                    a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                    d += a[s2, j] * ndu[rk + j, pk]
                if r <= pk:
                    a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                    d += a[s2, k] * ndu[r, pk]
                ders[k, r] = d
                s1, s2 = s2, s1

        fac = float(p)
        for k in range(1, n + 1):
            ders[k] *= fac
            fac *= p - k
        return span, ders

    def greville(self):
        """Greville abscissae (knot averages), one per basis function."""
        p = self.degree
        if p == 0:
            raise SpaceError("Greville abscissae need degree >= 1")
        U = self.knots
        return np.array([U[i + 1 : i + p + 1].mean() for i in range(self.num_basis)])

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, n={self.num_basis})"


def make_open_uniform(degree, num_basis, a=0.0, b=1.0):
    """Open knot vector with uniformly spaced simple interior knots."""
    if num_basis < degree + 1:
        raise SpaceError("num_basis must be at least degree+1")
    nspans = num_basis - degree
    interior = [a + (b - a) * i / nspans for i in range(1, nspans)]
    knots = [a] * (degree + 1) + interior + [b] * (degree + 1)
    return KnotVector(degree, knots)


def insert_knots(kv, coeffs, values):
    """Insert interior knots by Boehm's algorithm.

    ``coeffs`` carries the control data along axis 0 (homogeneous
    coordinates for rational splines); the spline itself is unchanged.
    Inserting past multiplicity == degree is rejected.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != kv.num_basis:
        raise SpaceError("coefficient count does not match the knot vector")
    p = kv.degree
    a, b = kv.domain
    U = list(map(float, kv.knots))
    trailing = coeffs.shape[1:]
    c = coeffs.reshape(kv.num_basis, -1).copy()

    for u in sorted(map(float, values)):
        if not (a < u < b):
            raise RefinementError(f"inserted knot {u} must lie strictly inside ({a}, {b})")
        if U.count(u) >= p:
            raise RefinementError(f"knot {u} already has multiplicity {p}")
        k = int(np.searchsorted(U, u, side="right")) - 1
        rows = []
        for i in range(k - p + 1, k + 1):
            alpha = (u - U[i]) / (U[i + p] - U[i])
            rows.append(alpha * c[i] + (1.0 - alpha) * c[i - 1])
        c = np.vstack([c[: k - p + 1], rows, c[k:]])
        U.insert(k + 1, u)

    return KnotVector(p, U), c.reshape((c.shape[0],) + trailing)


def elevate_degree(kv, coeffs, raise_by):
    """Raise the degree of a single-segment (Bezier) spline.

    Only knot vectors without interior breakpoints are supported; elevate
    first, then insert knots.  General elevation is not implemented.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != kv.num_basis:
        raise SpaceError("coefficient count does not match the knot vector")
    if raise_by < 0:
        raise RefinementError("cannot lower the degree")
    if raise_by == 0:
        return kv, coeffs.copy()
    if kv.breakpoints.size != 2:
        raise RefinementError(
            "degree elevation is only supported before interior knots are inserted"
        )
    p = kv.degree
    t = int(raise_by)
    q = p + t
    a, b = kv.domain
    trailing = coeffs.shape[1:]
    c = coeffs.reshape(p + 1, -1)
    out = np.zeros((q + 1, c.shape[1]))
    for i in range(q + 1):
        for j in range(max(0, i - t), min(p, i) + 1):
            out[i] += math.comb(p, j) * math.comb(t, i - j) / math.comb(q, i) * c[j]
    new_kv = KnotVector(q, [a] * (q + 1) + [b] * (q + 1))
    return new_kv, out.reshape((q + 1,) + trailing)


class TensorSpace:
    """Trivariate tensor-product spline space."""

    def __init__(self, kv1, kv2, kv3):
        self.kvs = (kv1, kv2, kv3)

    @property
    def shape(self):
        return tuple(kv.num_basis for kv in self.kvs)

    @property
    def degrees(self):
        return tuple(kv.degree for kv in self.kvs)

    @property
    def num_basis(self):
        m1, m2, m3 = self.shape
        return m1 * m2 * m3

    def greville(self):
        """Per-direction Greville abscissae."""
        return tuple(kv.greville() for kv in self.kvs)

    def __repr__(self):
        return f"TensorSpace(degrees={self.degrees}, shape={self.shape})"


def multi_indices(order):
    """3D derivative multi-indices with total order <= order, by total."""
    out = []
    for n in range(order + 1):
        for i in range(n, -1, -1):
            for j in range(n - i, -1, -1):
                out.append((i, j, n - i - j))
    return out


@dataclass
class RationalJet:
    """Active rational basis functions and their parametric partials.

    ``partials[(a, b, c)]`` holds d^(a+b+c) R / dxi1^a dxi2^b dxi3^c for the
    active functions, flattened in C order over the local (i1, i2, i3) grid.
    """

    spans: tuple
    degrees: tuple
    shape: tuple
    partials: dict

    @property
    def value(self):
        return self.partials[(0, 0, 0)]

    def local_ranges(self):
        return tuple(
            np.arange(s - p, s + 1) for s, p in zip(self.spans, self.degrees)
        )

    def flat_indices(self):
        """Global flat indices (C order over the space shape) of the actives."""
        i1, i2, i3 = self.local_ranges()
        grid = np.meshgrid(i1, i2, i3, indexing="ij")
        return np.ravel_multi_index(grid, self.shape).ravel()


def rational_jet(space, weights, xi, order):
    """Evaluate the NURBS basis with all mixed partials up to ``order``.

    Parameters
    ----------
    space : TensorSpace
    weights : ndarray, shape space.shape
        Strictly positive control weights.
    xi : sequence of 3 floats
    order : int
        Total derivative order (any order; 3 is what the rest of the
        package consumes).

    Notes
    -----
    With A_n = w_n B_n and W = sum_n A_n, the rational functions
    R_n = A_n / W satisfy, for every multi-index ``al``,

        D^al R_n = (D^al A_n - sum_{0 < be <= al} C(al, be) D^be W
                    D^(al-be) R_n) / W.
    """
    spans = []
    ders1d = []
    for kv, x in zip(space.kvs, xi):
        span, d = kv.basis_ders(x, order)
        spans.append(span)
        ders1d.append(d)
    sl = tuple(slice(s - kv.degree, s + 1) for s, kv in zip(spans, space.kvs))
    wloc = weights[sl]

    orders = multi_indices(order)
    A = {}
    W = {}
    for al in orders:
        arr = (
            np.einsum(
                "i,j,k->ijk", ders1d[0][al[0]], ders1d[1][al[1]], ders1d[2][al[2]]
            )
            * wloc
        )
        A[al] = arr.ravel()
        W[al] = float(arr.sum())

    W0 = W[(0, 0, 0)]
    R = {}
    for al in orders:
        acc = A[al].copy()
        for be in orders:
            if be == (0, 0, 0):
                continue
            if be[0] > al[0] or be[1] > al[1] or be[2] > al[2]:
                continue
            coef = (
                math.comb(al[0], be[0])
                * math.comb(al[1], be[1])
                * math.comb(al[2], be[2])
            )
            acc -= coef * W[be] * R[(al[0] - be[0], al[1] - be[1], al[2] - be[2])]
        R[al] = acc / W0

    return RationalJet(tuple(spans), space.degrees, space.shape, R)
