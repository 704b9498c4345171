"""Orthotropic plies, laminates, and stiffness homogenization.

Voigt ordering is (11, 22, 33, 23, 13, 12) with engineering shear strains.
The through-thickness homogenization follows the classical effective-modulus
construction for laminates (Sun & Li style averages): arithmetic in-plane
terms plus a normal-compliance correction, harmonic averaging of the
transverse normal and shear moduli.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, MaterialError

__all__ = [
    "EngineeringConstants",
    "Stiffness",
    "Ply",
    "Layup",
    "cross_ply",
    "voigt_to_full",
    "full_to_voigt",
    "rotate_inplane",
    "rotate_to_frame",
    "homogenize",
    "homogenize_mixed",
]

# Voigt pair for each tensor index pair
_VOIGT = np.array([[0, 5, 4], [5, 1, 3], [4, 3, 2]])
_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


@dataclass(frozen=True)
class EngineeringConstants:
    """Orthotropic engineering constants (moduli in MPa)."""

    e1: float
    e2: float
    e3: float
    g23: float
    g13: float
    g12: float
    nu23: float
    nu13: float
    nu12: float

    def compliance(self):
        s = np.zeros((6, 6))
        s[0, 0] = 1.0 / self.e1
        s[1, 1] = 1.0 / self.e2
        s[2, 2] = 1.0 / self.e3
        s[0, 1] = s[1, 0] = -self.nu12 / self.e1
        s[0, 2] = s[2, 0] = -self.nu13 / self.e1
        s[1, 2] = s[2, 1] = -self.nu23 / self.e2
        s[3, 3] = 1.0 / self.g23
        s[4, 4] = 1.0 / self.g13
        s[5, 5] = 1.0 / self.g12
        return s

    def stiffness(self):
        """Voigt stiffness; rejects non-positive-definite input."""
        s = self.compliance()
        try:
            c = np.linalg.inv(s)
        except np.linalg.LinAlgError as exc:
            raise MaterialError("singular compliance matrix") from exc
        return Stiffness((c + c.T) / 2.0)


@dataclass(frozen=True)
class Stiffness:
    """Elasticity tensor in Voigt form (6x6, MPa)."""

    voigt: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.voigt, float)
        if v.shape != (6, 6):
            raise MaterialError("Voigt stiffness must be 6x6")
        if not np.allclose(v, v.T, rtol=1e-10, atol=1e-12 * np.abs(v).max()):
            raise MaterialError("stiffness must be symmetric")
        if np.linalg.eigvalsh(v).min() <= 0.0:
            raise MaterialError("stiffness must be positive definite")
        object.__setattr__(self, "voigt", v)

    def full(self):
        return voigt_to_full(self.voigt)


def voigt_to_full(v):
    """Expand a 6x6 Voigt stiffness to the full (3,3,3,3) tensor."""
    c = np.empty((3, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    c[i, j, k, l] = v[_VOIGT[i, j], _VOIGT[k, l]]
    return c


def full_to_voigt(c):
    v = np.empty((6, 6))
    for a, (i, j) in enumerate(_PAIRS):
        for b, (k, l) in enumerate(_PAIRS):
            v[a, b] = c[i, j, k, l]
    return v


def rotate_inplane(stiff, angle_deg):
    """Stiffness of a ply whose fiber axis is rotated about axis 3."""
    t = np.radians(angle_deg)
    cs, sn = np.cos(t), np.sin(t)
    q = np.array([[cs, -sn, 0.0], [sn, cs, 0.0], [0.0, 0.0, 1.0]])
    c = np.einsum("ia,jb,kc,ld,abcd->ijkl", q, q, q, q, stiff.full())
    return Stiffness(full_to_voigt(c))


def rotate_to_frame(cfull, D):
    """Rotate a full stiffness tensor by the frame component matrix D."""
    D = np.asarray(D, float)
    if not np.allclose(D.T @ D, np.eye(3), atol=1e-8):
        raise GeometryError("frame matrix is not orthogonal")
    return np.einsum("ia,jb,kc,ld,abcd->ijkl", D, D, D, D, cfull)


@dataclass(frozen=True)
class Ply:
    thickness: float
    angle_deg: float
    material: EngineeringConstants


@dataclass
class Layup:
    """Stack of plies, listed from the bottom (xi3 = 0) surface upward."""

    plies: list
    _local: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.plies:
            raise MaterialError("layup needs at least one ply")
        if any(p.thickness <= 0.0 for p in self.plies):
            raise MaterialError("ply thicknesses must be positive")
        self._local = [
            rotate_inplane(p.material.stiffness(), p.angle_deg) for p in self.plies
        ]

    @property
    def num_plies(self):
        return len(self.plies)

    @property
    def thickness(self):
        return sum(p.thickness for p in self.plies)

    def fractions(self):
        h = self.thickness
        return np.array([p.thickness / h for p in self.plies])

    def interfaces(self):
        """Interior interface positions as fractions of the thickness."""
        f = np.cumsum(self.fractions())
        return f[:-1]

    def ply_stiffness(self, k):
        """Local (laminate-frame) Voigt stiffness of ply k."""
        return self._local[k]

    def ply_of(self, z, side="above"):
        """Ply index containing thickness fraction z in [0, 1].

        At an interior interface ``side`` picks the adjacent ply
        ("above" or "below").
        """
        if z < -1e-12 or z > 1.0 + 1e-12:
            raise MaterialError(f"thickness fraction {z} outside [0, 1]")
        edges = np.concatenate([[0.0], np.cumsum(self.fractions())])
        if side == "above":
            k = int(np.searchsorted(edges, z, side="right")) - 1
        else:
            k = int(np.searchsorted(edges, z, side="left")) - 1
        return min(max(k, 0), self.num_plies - 1)


def cross_ply(num_plies, t_ply, material, start_angle=0.0):
    """Alternating 0/90 stack, ``start_angle`` on the bottom ply."""
    plies = [
        Ply(t_ply, start_angle + 90.0 * (k % 2), material) for k in range(num_plies)
    ]
    return Layup(plies)


def homogenize(layup):
    """Single effective stiffness for the whole stack.

    Implements the effective-modulus relations: the implicit equation for
    the normal-coupling row is solved in closed form before the remaining
    in-plane entries are evaluated.
    """
    tb = layup.fractions()
    C = np.stack([layup.ply_stiffness(k).voigt for k in range(layup.num_plies)])

    out = np.zeros((6, 6))
    c33 = C[:, 2, 2]

    # harmonic transverse normal modulus
    out[2, 2] = 1.0 / np.sum(tb / c33)

    # s_k = t_k (C33^(1) - C33^(k)) / C33^(k), first ply excluded
    s = tb[1:] * (c33[0] - c33[1:]) / c33[1:]
    denom = 1.0 + s.sum()
    for z in (0, 1):
        cz3 = (np.sum(tb * C[:, z, 2]) + np.sum(C[1:, z, 2] * s)) / denom
        out[z, 2] = out[2, z] = cz3

    for z in (0, 1):
        for e in (0, 1):
            corr = np.sum(
                (C[1:, z, 2] - out[z, 2]) * tb[1:] * (C[0, e, 2] - C[1:, e, 2]) / c33[1:]
            )
            out[z, e] += np.sum(tb * C[:, z, e]) + corr
    if abs(out[0, 1] - out[1, 0]) > 1e-8 * abs(out[0, 1]):
        raise MaterialError("homogenized in-plane block lost symmetry")
    sym01 = 0.5 * (out[0, 1] + out[1, 0])
    out[0, 1] = out[1, 0] = sym01

    # transverse shear: harmonic averages written through the ply minors
    dk = C[:, 3, 3] * C[:, 4, 4]
    s44 = np.sum(tb * C[:, 3, 3] / dk)
    s55 = np.sum(tb * C[:, 4, 4] / dk)
    delta = s44 * s55
    out[3, 3] = s44 / delta
    out[4, 4] = s55 / delta

    out[5, 5] = np.sum(tb * C[:, 5, 5])
    return Stiffness(out)


def homogenize_mixed(layup):
    """Exact uniform-field homogenization, used as a diagnostic cross-check.

    Splits Voigt space into in-plane components p = (11, 22, 12) that share
    strains across plies and transverse components z = (33, 23, 13) that
    share stresses, and eliminates the transverse block exactly.
    """
    p_idx = np.array([0, 1, 5])
    z_idx = np.array([2, 3, 4])
    tb = layup.fractions()

    A_avg = np.zeros((3, 3))
    BDi_avg = np.zeros((3, 3))
    Di_avg = np.zeros((3, 3))
    BDiBt_avg = np.zeros((3, 3))
    for k in range(layup.num_plies):
        c = layup.ply_stiffness(k).voigt
        A = c[np.ix_(p_idx, p_idx)]
        B = c[np.ix_(p_idx, z_idx)]
        Dz = c[np.ix_(z_idx, z_idx)]
        Dzi = np.linalg.inv(Dz)
        A_avg += tb[k] * A
        BDi_avg += tb[k] * (B @ Dzi)
        Di_avg += tb[k] * Dzi
        BDiBt_avg += tb[k] * (B @ Dzi @ B.T)

    Dbar = np.linalg.inv(Di_avg)
    Bbar = BDi_avg @ Dbar
    Abar = A_avg - BDiBt_avg + BDi_avg @ Dbar @ BDi_avg.T

    out = np.zeros((6, 6))
    out[np.ix_(p_idx, p_idx)] = 0.5 * (Abar + Abar.T)
    out[np.ix_(p_idx, z_idx)] = Bbar
    out[np.ix_(z_idx, p_idx)] = Bbar.T
    out[np.ix_(z_idx, z_idx)] = 0.5 * (Dbar + Dbar.T)
    return Stiffness(out)
