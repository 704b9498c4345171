"""Isogeometric solid-laminate analysis with interlaminar stress recovery.

Subpackages are plain modules: ``splines`` (B-spline/NURBS kernel),
``geometry`` (NURBS patches, local frames), ``material`` (orthotropic
stiffness, layups, homogenization), ``galerkin`` / ``collocation`` /
``layerwise`` (solvers), ``recovery`` (equilibrium post-processing),
``harness`` (benchmark orchestration), ``cli`` (command line).
"""

__version__ = "0.1.0"
