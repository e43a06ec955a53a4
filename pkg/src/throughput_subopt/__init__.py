"""Throughput suboptimality analysis and queue-emptying control for parallel-server networks."""

from .fluid import (
    FluidConstants,
    FluidTrajectory,
    Perturbation,
    RegimeError,
    build_psi_tilde,
    compute_constants,
    integrate_trajectory,
    make_perturbation,
    verify_theorem3,
)
from .network import NetworkSpec, ScaledSystem, SpecError, builtin_example, load_spec, random_critical_network, scale_system
from .paths import SimplePath, SuboptimalityVerdict, classify, enumerate_simple_paths, solve_mmax
from .simulator import RunMetrics, ScaleError, replay, run
from .static import AssumptionError, StaticAllocation, solve_static
from .sweep import summarize, sweep
from .treemap import TreeSolver, compute_CG, solve_tree_system

__all__ = [
    "AssumptionError", "FluidConstants", "FluidTrajectory", "NetworkSpec", "Perturbation", "RegimeError",
    "RunMetrics", "ScaleError", "ScaledSystem", "SimplePath", "SpecError", "StaticAllocation", "SuboptimalityVerdict",
    "TreeSolver", "build_psi_tilde", "builtin_example", "classify", "compute_CG", "compute_constants",
    "enumerate_simple_paths", "integrate_trajectory", "load_spec", "make_perturbation", "random_critical_network", "replay", "run",
    "scale_system", "solve_mmax", "solve_static", "solve_tree_system", "summarize", "sweep",
    "verify_theorem3",
]
