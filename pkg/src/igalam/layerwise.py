"""Layerwise C0 reference discretization.

The through-thickness knot vector places every ply interface as an interior
knot with multiplicity equal to the thickness degree, so the displacement is
C0 there and each ply carries its own polynomial segment.  Everything else
(assembly, boundary conditions, solve) is shared with the Galerkin solver;
with one span per ply the layerwise quadrature of ``thickness_rule``
degenerates to the standard per-element rule.
"""

from __future__ import annotations

import numpy as np

from .galerkin import solve_galerkin

__all__ = ["layerwise_patch", "solve_layerwise"]


def layerwise_patch(patch, layup, degrees, inplane_counts):
    """Refine ``patch`` to a layerwise space.

    Parameters
    ----------
    degrees : (p, q, r)
    inplane_counts : (n1, n2)
        Control point counts in the two in-plane directions.  The thickness
        direction gets ``num_plies * r + 1`` control points from the C0
        interface layout.
    """
    p, q, r = degrees
    interior = np.repeat(layup.interfaces(), r)
    return patch.refined(
        (p, q, r),
        num_basis=(inplane_counts[0], inplane_counts[1], None),
        interior_knots=(None, None, interior),
    )


def solve_layerwise(patch, layup, bcs, degrees, inplane_counts, **kwargs):
    """Build the layerwise space on ``patch`` and solve the weak form."""
    lw = layerwise_patch(patch, layup, degrees, inplane_counts)
    return lw, solve_galerkin(lw, layup, bcs, **kwargs)
