"""Boundary conditions on the six parametric faces of a patch.

Faces are keyed by (axis, side) with axis in {0, 1, 2} and side in {0, 1}.
Dirichlet components are global displacement components; tractions are
callables ``t(x, frame) -> (3,)`` in global components (None means
traction free).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["FaceBC", "BCSet", "FACES", "simply_supported_tube", "all_dirichlet"]

FACES = tuple((axis, side) for axis in range(3) for side in (0, 1))


@dataclass
class FaceBC:
    dirichlet: tuple = ()
    value: object = None      # value(x) -> (3,), sampled on Dirichlet components
    traction: object = None   # traction(x, frame) -> (3,)


@dataclass
class BCSet:
    faces: dict = field(default_factory=dict)
    pin_component: int | None = None

    def face(self, key):
        return self.faces.get(key, FaceBC())

    def dirichlet_components(self, keys):
        comps = set()
        for key in keys:
            comps.update(self.face(key).dirichlet)
        return tuple(sorted(comps))


def simply_supported_tube(traction_inner):
    """Benchmark conditions for the quarter tube.

    Both ends (xi1 faces) block the transverse displacements; the two
    symmetry planes block their normal components (xi2 = 0 lies in the
    X2 = 0 plane, xi2 = 1 in the X3 = 0 plane).  The inner surface carries
    the pressure-like traction; the outer surface is free.  The remaining
    axial rigid translation is removed through ``pin_component = 0``.
    """
    faces = {
        (0, 0): FaceBC(dirichlet=(1, 2)),
        (0, 1): FaceBC(dirichlet=(1, 2)),
        (1, 0): FaceBC(dirichlet=(1,)),
        (1, 1): FaceBC(dirichlet=(2,)),
        (2, 0): FaceBC(traction=traction_inner),
        (2, 1): FaceBC(),
    }
    return BCSet(faces=faces, pin_component=0)


def all_dirichlet(value=None):
    """Clamp all three components on every face (patch-test style)."""
    faces = {key: FaceBC(dirichlet=(0, 1, 2), value=value) for key in FACES}
    return BCSet(faces=faces, pin_component=None)
