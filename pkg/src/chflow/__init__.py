"""Periodic pseudo-spectral Cahn-Hilliard solver with energy and norm diagnostics."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    DealiasRule,
    Grid,
    RealField,
    SpectralField,
    forward,
    inverse,
    make_grid,
)
from .potentials import PotentialSpec, double_well, polynomial_potential, zero_potential  # noqa: E402
from .flow import BlowUpError, FlowState, SolverConfig, solve  # noqa: E402
from .diagnostics import DiagnosticsRecord, EnergyMonitor, compute_record, free_energy  # noqa: E402

__all__ = [
    "BlowUpError",
    "DealiasRule",
    "DiagnosticsRecord",
    "EnergyMonitor",
    "FlowState",
    "Grid",
    "PotentialSpec",
    "RealField",
    "SolverConfig",
    "SpectralField",
    "compute_record",
    "double_well",
    "forward",
    "free_energy",
    "inverse",
    "make_grid",
    "polynomial_potential",
    "solve",
    "zero_potential",
]
