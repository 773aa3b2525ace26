"""Exact Max-Cut solver built on ADMM semidefinite bounds and branch & bound."""

from .bnb import SolverConfig, Solution, solve_serial
from .heuristic import CutSolution
from .instance import Graph, ParseError, Subproblem, load_instance, parse_instance
from .parallel import solve_parallel

__version__ = "0.1.0"

__all__ = [
    "CutSolution",
    "Graph",
    "ParseError",
    "Solution",
    "SolverConfig",
    "Subproblem",
    "load_instance",
    "parse_instance",
    "solve_parallel",
    "solve_serial",
    "__version__",
]
