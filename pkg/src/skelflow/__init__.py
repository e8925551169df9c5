"""Skeleton-forced Allen-Cahn flows on periodic grids."""

__version__ = "0.1.0"

from .grid import Grid, make_grid  # noqa: E402
from .evolver import PhaseState, SolverParams, energy, run, step  # noqa: E402
from .diagnostics import DiagnosticsSeries  # noqa: E402

__all__ = ["Grid", "make_grid", "SolverParams", "PhaseState", "step", "run", "energy", "DiagnosticsSeries", "__version__"]
