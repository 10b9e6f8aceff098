"""Bi-objective (time, device CPU) offloading decisions with an ant colony."""

from .aco_solver import AcoParams, solve
from .callgraph import CallGraph, DualPlacementGraph, ObjectiveVector, PathSolution, enumerate_paths, transform
from .decision_engine import OffloadingEngine, init, select_plan
from .pareto import ParetoArchive, pareto_front

__version__ = "0.1.0"

__all__ = [
    "AcoParams",
    "CallGraph",
    "DualPlacementGraph",
    "ObjectiveVector",
    "OffloadingEngine",
    "ParetoArchive",
    "PathSolution",
    "enumerate_paths",
    "init",
    "pareto_front",
    "select_plan",
    "solve",
    "transform",
]
