"""Exception types shared across the package."""


class DomainError(ValueError):
    """Evaluation point outside the parametric domain."""


class SpaceError(ValueError):
    """Invalid knot vector or spline space."""


class GeometryError(RuntimeError):
    """Degenerate or inconsistent geometry (e.g. non-positive Jacobian)."""


class MaterialError(ValueError):
    """Material input that is not physically admissible."""


class RefinementError(ValueError):
    """Unsupported refinement request."""


class SolveError(RuntimeError):
    """Linear system could not be solved reliably."""


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""
