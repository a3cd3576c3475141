"""Dynamical locality of field theories on lattices.

Discrete actions, extremal-path solvers, epsilon-localization tests,
saddle-point kernels with their cluster decomposition, Laplacian mode
analysis and the Jacobi-metric picture of fixed-energy extremals.
"""
from .errors import *  # noqa: F401,F403
from .extremal import ExtremalPath, ExtremalSet, enumerate_extremals, solve
from .lattice import (
    FLAT_L2,
    FieldConfig,
    Mesh,
    RegionDecomposition,
    SuperMetric,
    build_annulus_mesh,
    build_circle_mesh,
    build_interval_mesh,
    build_point_mesh,
    decompose,
    glue,
    project,
    project_N,
    project_O,
)
from .model import ActionSpec, Path, action, eom_residual, intrinsic_action

__version__ = "0.1.0"
