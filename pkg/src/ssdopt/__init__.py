"""Stochastic steepest descent in Banach spaces over P1 finite elements."""

__version__ = "0.1.0"

from .duality import DualVector, SpaceDescriptor
from .fem import NodalFunction, SolverSettings, StructuredMesh, build_mesh
from .optimize import DescentHistory, StepSchedule, ssd_run, sgd_run
from .problems import App1Config, App1Problem, App2Config, App2Problem
from .random_field import FieldDraw, KleSpec

__all__ = [
    "App1Config",
    "App1Problem",
    "App2Config",
    "App2Problem",
    "DescentHistory",
    "DualVector",
    "FieldDraw",
    "KleSpec",
    "NodalFunction",
    "SolverSettings",
    "SpaceDescriptor",
    "StepSchedule",
    "StructuredMesh",
    "build_mesh",
    "sgd_run",
    "ssd_run",
    "__version__",
]
